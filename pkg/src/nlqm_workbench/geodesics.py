"""Geodesic integration and the two-point connection problem.

``connect`` finds every geodesic segment joining two events inside a chart:

1. rays are shot from ``x`` over a deterministic lattice of directions and the
   point of closest approach to ``y`` along each ray seeds an initial velocity;
2. a damped Newton iteration on the endpoint mismatch (fixed-step RK4, finite
   difference Jacobian) drives all seeds at once;
3. surviving roots are polished with chord iterations on a DOP853 integration
   and re-integrated onto a fine node grid.

Geodesics whose periodic coordinates wind through a full period are not
segments and are rejected, so the great-circle census on the sphere is two.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import norm, qmc

from .charts import MetricChart
from .errors import ExceptionalPair, LeftDomain, StepFailure

RTOL = 1e-12
ATOL = 1e-12


@dataclass(frozen=True)
class SearchConfig:
    directions: Optional[int] = None  # default: 64 for d = 2, 256 for d = 4
    cap: int = 16
    dedup_tol: float = 1e-4
    endpoint_tol: float = 1e-7
    nodes: int = 1025
    ray_steps: int = 256
    newton_steps: int = 32
    newton_iters: int = 16
    polish_iters: int = 6

    def n_directions(self, dim: int) -> int:
        if self.directions is not None:
            return self.directions
        return 64 if dim == 2 else 256


@dataclass(frozen=True, eq=False)
class Geodesic:
    chart: MetricChart
    s: np.ndarray  # (K,)
    x: np.ndarray  # (K, d), periodic coordinates unwrapped
    v: np.ndarray  # (K, d)

    @property
    def start(self) -> np.ndarray:
        return self.x[0]

    @property
    def end(self) -> np.ndarray:
        return self.x[-1]

    @property
    def s_end(self) -> float:
        return float(self.s[-1])

    @property
    def key(self) -> str:
        h = hashlib.sha1()
        h.update(self.chart.name.encode())
        h.update(np.ascontiguousarray(self.s).tobytes())
        h.update(np.ascontiguousarray(self.x).tobytes())
        h.update(np.ascontiguousarray(self.v).tobytes())
        return h.hexdigest()

    def norms(self) -> np.ndarray:
        """g(xdot, xdot) at every node."""
        g = self.chart.metric(self.x)
        return np.einsum("ka,kab,kb->k", self.v, g, self.v)

    @property
    def causal_type(self) -> str:
        if self.chart.riemannian:
            return "spacelike"
        n = float(np.median(self.norms()))
        scale = float(np.max(np.abs(self.v[0]))) ** 2 + 1e-300
        if abs(n) < 1e-9 * scale:
            return "null"
        return "timelike" if n < 0 else "spacelike"

    @property
    def arc_length(self) -> float:
        return float(math.sqrt(abs(np.median(self.norms())))) * (self.s[-1] - self.s[0])

    def reversed(self) -> "Geodesic":
        s = self.s[-1] + self.s[0] - self.s[::-1]
        return Geodesic(self.chart, s, self.x[::-1].copy(), -self.v[::-1].copy())

    def split(self, k: int):
        """Two geodesics meeting at node ``k``."""
        a = Geodesic(self.chart, self.s[: k + 1], self.x[: k + 1], self.v[: k + 1])
        b = Geodesic(self.chart, self.s[k:], self.x[k:], self.v[k:])
        return a, b

    def residual(self) -> float:
        """Max geodesic-equation residual at interior nodes from 4th-order differences of v."""
        s, v = self.s, self.v
        h = np.diff(s)
        if len(s) < 5 or not np.allclose(h, h[0], rtol=1e-9):
            raise ValueError("residual needs at least five uniformly spaced nodes")
        h = h[0]
        acc = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
        gam = self.chart.christoffel(self.x[2:-2])
        rhs = -np.einsum("kabm,kb,km->ka", gam, v[2:-2], v[2:-2])
        return float(np.max(np.abs(acc - rhs)))


@dataclass(frozen=True)
class GeodesicBundle:
    x: np.ndarray
    y: np.ndarray
    geodesics: tuple

    @property
    def n(self) -> int:
        return len(self.geodesics)


# ---------------------------------------------------------------------------
# right-hand sides


def _rhs(chart: MetricChart, state: np.ndarray) -> np.ndarray:
    """First-order geodesic system for a batch of states of shape (..., 2d)."""
    d = chart.dim
    x, v = state[..., :d], state[..., d:]
    return np.concatenate([v, geodesic_acceleration(chart, x, v)], axis=-1)


def geodesic_acceleration(chart: MetricChart, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """-Gamma^a_{bm} v^b v^m, batched."""
    d = chart.dim
    gam = chart.christoffel(x).reshape(x.shape[:-1] + (d, d * d))
    vv = (v[..., :, None] * v[..., None, :]).reshape(v.shape[:-1] + (d * d, 1))
    return -(gam @ vv)[..., 0]


def _bounds(chart: MetricChart):
    lo = np.array([b[0] for b in chart.domain])
    hi = np.array([b[1] for b in chart.domain])
    return lo, hi


def _outside(chart: MetricChart, x: np.ndarray, bounds=None) -> np.ndarray:
    lo, hi = bounds if bounds is not None else _bounds(chart)
    with np.errstate(invalid="ignore"):
        bad = np.any((x < lo) | (x > hi), axis=-1)
    return bad | ~np.all(np.isfinite(x), axis=-1)


def _rk4_batch(chart: MetricChart, state: np.ndarray, s_end, steps: int, record: bool = False):
    """Fixed-step RK4 for a batch; trajectories that leave the domain become NaN."""
    h = np.asarray(s_end, dtype=float) / steps
    h = h[..., None] if h.ndim else h
    y = state.copy()
    d = chart.dim
    traj = [y[..., :d].copy()] if record else None
    bounds = _bounds(chart)
    with np.errstate(all="ignore"):
        for _ in range(steps):
            k1 = _rhs(chart, y)
            k2 = _rhs(chart, y + 0.5 * h * k1)
            k3 = _rhs(chart, y + 0.5 * h * k2)
            k4 = _rhs(chart, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            y[_outside(chart, y[..., :d], bounds)] = np.nan
            if record:
                traj.append(y[..., :d].copy())
    return (y, np.stack(traj)) if record else y


# ---------------------------------------------------------------------------
# single geodesic


def _domain_events(chart: MetricChart):
    d = chart.dim
    events = []
    for k, (lo, hi) in enumerate(chart.domain):
        if chart.periods[k]:
            continue
        for bound, sign in ((lo, 1.0), (hi, -1.0)):
            if not math.isfinite(bound):
                continue

            def ev(s, y, k=k, bound=bound, sign=sign):
                return sign * (y[k] - bound)

            ev.terminal = True
            ev.direction = -1
            events.append(ev)
    return events, d


def integrate_geodesic(
    chart: MetricChart,
    x,
    v,
    s_end: float = 1.0,
    steps: int = 1023,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> Geodesic:
    """Integrate the geodesic with initial data (x, v) and sample it on ``steps + 1`` nodes."""
    if steps < 16:
        raise ValueError("steps must be at least 16")
    x = chart.check(x)
    v = np.asarray(v, dtype=float)
    if v.shape != (chart.dim,) or not np.all(np.isfinite(v)):
        raise ValueError("velocity must be a finite d-vector")
    events, d = _domain_events(chart)
    y0 = np.concatenate([x, v])
    s_nodes = np.linspace(0.0, s_end, steps + 1)
    with np.errstate(all="ignore"):
        sol = solve_ivp(
            lambda s, y: _rhs(chart, y),
            (0.0, s_end),
            y0,
            method="DOP853",
            rtol=rtol,
            atol=atol,
            dense_output=True,
            events=events or None,
        )
    if sol.status == -1:
        raise StepFailure(f"geodesic integration failed: {sol.message}")
    if sol.status == 1:
        s_exit = float(sol.t[-1])
        keep = s_nodes[s_nodes <= s_exit]
        ys = sol.sol(keep).T
        partial = Geodesic(chart, keep, ys[:, :d], ys[:, d:])
        raise LeftDomain(f"geodesic leaves {chart.name} at s = {s_exit:.6g}", partial=partial)
    ys = sol.sol(s_nodes).T
    ys[0] = y0
    return Geodesic(chart, s_nodes, ys[:, :d].copy(), ys[:, d:].copy())


def shooting_residual(geo: Geodesic, tighten: float = 10.0) -> float:
    """Endpoint shift when the geodesic is re-integrated with tolerances ``tighten`` times smaller."""
    ref = integrate_geodesic(
        geo.chart, geo.start, geo.v[0], geo.s_end, len(geo.s) - 1, rtol=RTOL / tighten, atol=ATOL / tighten
    )
    return float(np.max(np.abs(ref.end - geo.end)))


# ---------------------------------------------------------------------------
# direction lattice and ray seeding


def direction_lattice(dim: int, count: int) -> np.ndarray:
    """Deterministic unit directions in coordinate space."""
    if dim == 2:
        a = 2 * math.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(a), np.sin(a)], axis=-1)
    pts = qmc.Halton(d=dim, scramble=False).random(count + 1)[1:]
    u = norm.ppf(pts)
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def _ray_seeds(chart: MetricChart, x, y, search: SearchConfig) -> np.ndarray:
    d = chart.dim
    lattice = direction_lattice(d, search.n_directions(d))
    u = lattice
    delta = chart.wrap(y - x)
    if chart.riemannian and chart.reach:
        g = chart.metric(x)
        u = u / np.sqrt(np.einsum("na,ab,nb->n", u, g, u))[:, None]
        reach = chart.reach
    else:
        reach = 3.0 * float(np.linalg.norm(delta))
    state = np.concatenate([np.broadcast_to(x, u.shape), u], axis=-1)
    _, traj = _rk4_batch(chart, state, reach, search.ray_steps, record=True)
    with np.errstate(invalid="ignore"):
        dist = np.linalg.norm(chart.wrap(traj - y), axis=-1)  # (steps + 1, n)
    dist = np.where(np.isfinite(dist), dist, np.inf)
    k = np.argmin(dist, axis=0)
    miss = dist[k, np.arange(len(k))]
    # keep rays whose miss distance is locally minimal over neighbouring lattice directions;
    # near-ties are kept so that degenerate (e.g. antipodal) pairs retain every ray
    n_nb = min(2 if d == 2 else 2 * d, len(lattice) - 1)
    cos = lattice @ lattice.T
    np.fill_diagonal(cos, -np.inf)
    nb = np.argsort(-cos, axis=1)[:, :n_nb]
    tie = 1e-3 * max(float(np.linalg.norm(delta)), 1e-12)
    local = np.isfinite(miss) & (miss <= miss[nb].min(axis=1) + tie) & (k > 0)
    s_star = k * (reach / search.ray_steps)
    seeds = s_star[:, None] * u
    return np.concatenate([delta[None, :], seeds[local]], axis=0)


# ---------------------------------------------------------------------------
# Newton on the endpoint map


def _endpoint_map(chart: MetricChart, x, y, V, steps):
    n, d = V.shape
    state = np.concatenate([np.broadcast_to(x, V.shape), V], axis=-1)
    end = _rk4_batch(chart, state, 1.0, steps)[:, :d]
    return chart.wrap(end - y)


def _map_and_jacobian(chart, x, y, V, steps):
    n, d = V.shape
    eps = 1e-6 * np.maximum(1.0, np.abs(V))  # (n, d)
    probes = [V] + [V + eps[:, k : k + 1] * np.eye(d)[k] for k in range(d)]
    F = _endpoint_map(chart, x, y, np.concatenate(probes, axis=0), steps).reshape(d + 1, n, d)
    J = np.stack([(F[k + 1] - F[0]) / eps[:, k : k + 1] for k in range(d)], axis=-1)  # (n, d, d)
    return F[0], J


def _unique_rows(V: np.ndarray, tol: float) -> np.ndarray:
    n = len(V)
    if n == 0:
        return np.zeros(0, dtype=int)
    dist = np.max(np.abs(V[:, None, :] - V[None, :, :]), axis=-1)
    close = dist <= tol * (1 + np.max(np.abs(V), axis=1))[None, :]  # close[i, j]: i within tol of j
    kept = np.zeros(n, dtype=bool)
    for i in range(n):
        kept[i] = not np.any(close[i] & kept)
    return np.flatnonzero(kept)


def _newton(chart, x, y, seeds, search: SearchConfig):
    steps = search.newton_steps
    d = chart.dim
    V = seeds.copy()
    F, J = _map_and_jacobian(chart, x, y, V, steps)
    ok = np.all(np.isfinite(F), axis=1) & np.all(np.isfinite(J), axis=(1, 2))
    V, F, J = V[ok], F[ok], J[ok]
    lam = np.ones(len(V))
    done = []
    scale = max(1.0, float(np.max(np.abs(y))))
    for _ in range(search.newton_iters):
        if len(V) == 0:
            break
        # iterates this close share a Newton basin
        keep = _unique_rows(V, 1e-4)
        V, F, J, lam = V[keep], F[keep], J[keep], lam[keep]
        res = np.linalg.norm(F, axis=1)
        conv = res < 1e-10 * scale
        if np.any(conv):
            done.extend(V[conv])
            V, F, J, lam, res = V[~conv], F[~conv], J[~conv], lam[~conv], res[~conv]
            if len(V) == 0:
                break
        step = -np.einsum("nab,nb->na", np.linalg.pinv(J, rcond=1e-3), F)
        # trust region in units of the current velocity
        size = np.linalg.norm(step, axis=1)
        limit = 0.5 * np.maximum(np.linalg.norm(V, axis=1), 1.0)
        step *= np.minimum(1.0, limit / np.maximum(size, 1e-300))[:, None]
        trial = V + lam[:, None] * step
        Ft, Jt = _map_and_jacobian(chart, x, y, trial, steps)
        rt = np.linalg.norm(Ft, axis=1)
        good = np.isfinite(rt) & np.all(np.isfinite(Jt), axis=(1, 2)) & (rt < res)
        V = np.where(good[:, None], trial, V)
        F = np.where(good[:, None], Ft, F)
        J = np.where(good[:, None, None], Jt, J)
        lam = np.where(good, np.minimum(1.0, 2 * lam), 0.5 * lam)
        alive = lam > 1.0 / 256
        # stalled iterates near a root of the coarse map still count
        stalled = ~alive & (res < 1e-4 * scale)
        done.extend(V[stalled])
        V, F, J, lam = V[alive], F[alive], J[alive], lam[alive]
    else:
        if len(V):
            res = np.linalg.norm(F, axis=1)
            done.extend(V[res < 1e-4 * scale])
    if not done:
        return np.zeros((0, d)), np.zeros((0, d, d))
    V = np.array(done)
    V = V[_unique_rows(V, 1e-5)]
    _, J = _map_and_jacobian(chart, x, y, V, steps)
    return V, J


def _dop853_batch(chart, x, V):
    n, d = V.shape
    y0 = np.concatenate([np.broadcast_to(x, V.shape), V], axis=-1).ravel()

    def f(s, yflat):
        return _rhs(chart, yflat.reshape(n, 2 * d)).ravel()

    with np.errstate(all="ignore"):
        sol = solve_ivp(f, (0.0, 1.0), y0, method="DOP853", rtol=RTOL, atol=ATOL)
    if not sol.success:
        return np.full((n, d), np.nan)
    return sol.y[:, -1].reshape(n, 2 * d)[:, :d]


def _polish(chart, x, y, V, J, search: SearchConfig):
    """Chord iterations with the coarse Jacobian on the accurate endpoint map."""
    Jinv = np.linalg.pinv(J, rcond=1e-3)
    tol = 1e-3 * search.endpoint_tol
    for _ in range(search.polish_iters):
        F = chart.wrap(_dop853_batch(chart, x, V) - y)
        bad = ~np.all(np.isfinite(F), axis=1)
        V = V[~bad]
        F, Jinv = F[~bad], Jinv[~bad]
        if len(V) == 0 or np.all(np.abs(F) < tol):
            break
        V = V - np.einsum("nab,nb->na", Jinv, F)
    return V[np.all(np.isfinite(V), axis=1)]


# ---------------------------------------------------------------------------
# connection problem


def _final_geodesics(chart: MetricChart, x, V, nodes: int) -> list:
    """Dense DOP853 solutions on the node grid; None for candidates that leave the chart.

    All candidates share one solve; if that fails they are integrated one by one.
    """
    n, d = V.shape
    if n == 0:
        return []
    s_nodes = np.linspace(0.0, 1.0, nodes)
    y0 = np.concatenate([np.broadcast_to(x, V.shape), V], axis=-1)

    def f(s, yflat):
        return _rhs(chart, yflat.reshape(n, 2 * d)).ravel()

    with np.errstate(all="ignore"):
        sol = solve_ivp(f, (0.0, 1.0), y0.ravel(), method="DOP853", rtol=RTOL, atol=ATOL, dense_output=True)
    if sol.success:
        ys = sol.sol(s_nodes).T.reshape(nodes, n, 2 * d)
        ys[0] = y0
        if np.all(np.isfinite(ys)) and not np.any(_outside(chart, ys[..., :d])):
            return [Geodesic(chart, s_nodes, ys[:, k, :d].copy(), ys[:, k, d:].copy()) for k in range(n)]
    out = []
    for v in V:
        try:
            out.append(integrate_geodesic(chart, x, v, 1.0, nodes - 1))
        except (LeftDomain, StepFailure):
            out.append(None)
    return out


def _canonical(chart: MetricChart, x: np.ndarray) -> tuple:
    c = np.array(x, dtype=float)
    for k, p in enumerate(chart.periods):
        if p:
            c[k] = c[k] % p
    return tuple(np.round(c, 12))


def _winds(chart: MetricChart, geo: Geodesic) -> bool:
    disp = geo.end - geo.start
    return any(p and abs(disp[k]) >= p for k, p in enumerate(chart.periods))


def _node_distance(chart: MetricChart, a: Geodesic, b: Geodesic) -> float:
    if len(a.s) != len(b.s):
        raise ValueError("dedup requires geodesics on a common node grid")
    return float(np.max(np.abs(chart.wrap(a.x - b.x))))


def _align_start(chart: MetricChart, geo: Geodesic, x: np.ndarray) -> Geodesic:
    """Shift periodic coordinates by whole periods so the path starts at ``x``."""
    shift = chart.wrap(geo.start - x) - (geo.start - x)
    if not np.any(shift):
        return geo
    return Geodesic(chart, geo.s, geo.x + shift, geo.v)


def _connect_oriented(chart: MetricChart, x, y, search: SearchConfig) -> GeodesicBundle:
    seeds = _ray_seeds(chart, x, y, search)
    V, J = _newton(chart, x, y, seeds, search)
    if len(V):
        V = _polish(chart, x, y, V, J, search)
    found = []
    for geo in _final_geodesics(chart, x, V, search.nodes):
        if geo is None:
            continue
        if np.max(np.abs(chart.wrap(geo.end - y))) >= search.endpoint_tol:
            continue
        if _winds(chart, geo):
            continue
        if any(_node_distance(chart, geo, g) < search.dedup_tol for g in found):
            continue
        found.append(geo)
        if len(found) > search.cap:
            raise ExceptionalPair(
                f"more than {search.cap} distinct geodesics join the pair", count=len(found)
            )
    if not found:
        raise ExceptionalPair("no connecting geodesic found", count=0)
    # deterministic order: shortest coordinate path first, then by initial velocity
    found.sort(key=lambda g: (round(float(np.sum(np.abs(np.diff(g.x, axis=0)))), 9), tuple(np.round(g.v[0], 9))))
    return GeodesicBundle(np.array(x), np.array(y), tuple(found))


_BUNDLE_CACHE: dict = {}
_BUNDLE_CACHE_MAX = 4096


def clear_cache():
    _BUNDLE_CACHE.clear()


def connect(chart: MetricChart, x, y, search: SearchConfig = SearchConfig()) -> GeodesicBundle:
    """All distinct geodesic segments from ``x`` to ``y`` (each with s in [0, 1])."""
    x = chart.check(x)
    y = chart.check(y)
    if np.max(np.abs(chart.wrap(y - x))) == 0.0:
        raise ValueError("connect requires distinct events; use the coincidence limit instead")
    cx, cy = _canonical(chart, x), _canonical(chart, y)
    flip = cy < cx
    key = (chart.name, (cy, cx) if flip else (cx, cy), search)
    bundle = _BUNDLE_CACHE.get(key)
    if bundle is None:
        a, b = (y, x) if flip else (x, y)
        bundle = _connect_oriented(chart, a, b, search)
        if len(_BUNDLE_CACHE) >= _BUNDLE_CACHE_MAX:
            _BUNDLE_CACHE.clear()
        _BUNDLE_CACHE[key] = bundle
    if flip:
        geos = tuple(_align_start(chart, g.reversed(), x) for g in bundle.geodesics)
    else:
        geos = tuple(_align_start(chart, g, x) for g in bundle.geodesics)
    return GeodesicBundle(x, y, geos)


def trivial_geodesic(chart: MetricChart, x, nodes: int = 17) -> Geodesic:
    """Constant path at ``x``; its propagator is the identity."""
    x = chart.check(x)
    s = np.linspace(0.0, 1.0, nodes)
    return Geodesic(chart, s, np.tile(x, (nodes, 1)), np.zeros((nodes, chart.dim)))
