"""Metric charts: closed-form metrics, connection, curvature and chart transitions.

All metric and Christoffel callables are vectorized over leading axes: an
input of shape ``(..., d)`` produces ``(..., d, d)`` or ``(..., d, d, d)``.

Index conventions
-----------------
``christoffel[..., a, b, m]`` is :math:`\\Gamma^a_{bm}`.
``riemann[a, b, m, n]`` is :math:`R^a{}_{bmn} = \\partial_m \\Gamma^a_{nb} -
\\partial_n \\Gamma^a_{mb} + \\Gamma^a_{m l}\\Gamma^l_{nb} - \\Gamma^a_{n l}\\Gamma^l_{mb}`,
``ricci[b, n] = riemann[a, b, a, n]``.  With these signs the unit two-sphere
has scalar curvature +2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    ChartSpecError,
    NoTransition,
    OutOfDomain,
    OutOfOverlap,
    SingularMetric,
    StencilClipped,
)

# Domain margin that keeps coordinate singularities (poles, horizons) out of every chart.
EPS_POLE = 1e-3
EPS_HORIZON = 0.05

Array = np.ndarray


@dataclass(frozen=True)
class Transition:
    """Closed-form coordinate change ``x -> x'`` with Jacobian ``dx'/dx``."""

    forward: Callable[[Array], Array]
    jacobian: Callable[[Array], Array]
    inverse: Optional[Callable[[Array], Array]] = None


@dataclass(frozen=True, eq=False)
class MetricChart:
    name: str
    kind: str
    dim: int
    signature: tuple
    domain: tuple  # per-coordinate (lo, hi); periodic coordinates use (-inf, inf)
    metric_fn: Callable[[Array], Array]
    christoffel_fn: Optional[Callable[[Array], Array]] = None
    periods: tuple = ()
    params: dict = field(default_factory=dict)
    transitions: dict = field(default_factory=dict)
    # affine reach (in units of the seed-direction norm) used by the geodesic search
    reach: Optional[float] = None

    def __post_init__(self):
        if not self.periods:
            object.__setattr__(self, "periods", (None,) * self.dim)

    def __repr__(self):
        return f"MetricChart({self.name!r})"

    @property
    def riemannian(self) -> bool:
        return all(s > 0 for s in self.signature)

    def in_domain(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        lo = np.array([b[0] for b in self.domain])
        hi = np.array([b[1] for b in self.domain])
        return bool(np.all((x >= lo) & (x <= hi)))

    def check(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if not self.in_domain(x):
            raise OutOfDomain(f"{x.tolist()} outside the domain of chart {self.name}")
        return x

    def clip(self, x: Array) -> Array:
        lo = np.array([b[0] for b in self.domain])
        hi = np.array([b[1] for b in self.domain])
        return np.clip(x, lo, hi)

    def wrap(self, dx: Array) -> Array:
        """Reduce coordinate differences along periodic axes to (-P/2, P/2]."""
        dx = np.array(dx, dtype=float, copy=True)
        for k, p in enumerate(self.periods):
            if p:
                dx[..., k] = dx[..., k] - p * np.round(dx[..., k] / p)
        return dx

    # vectorized evaluation, no domain checks
    def metric(self, x: Array) -> Array:
        return self.metric_fn(np.asarray(x, dtype=float))

    def christoffel(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if self.christoffel_fn is not None:
            return self.christoffel_fn(x)
        return numeric_christoffel(self, x)


# ---------------------------------------------------------------------------
# single-point operations


def metric_at(chart: MetricChart, x):
    """Covariant metric and its inverse at ``x``."""
    x = chart.check(x)
    g = chart.metric(x)
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(f"metric of {chart.name} singular at {x.tolist()}") from exc
    if not np.all(np.isfinite(ginv)) or abs(np.linalg.det(g)) < 1e-300:
        raise SingularMetric(f"metric of {chart.name} singular at {x.tolist()}")
    return g, ginv


def _steps(x: Array, scale: float) -> Array:
    return scale * np.maximum(1.0, np.abs(x))


def _stencil_guard(chart: MetricChart, x: Array, h: Array, reach: int):
    for k in range(chart.dim):
        if chart.periods[k]:
            continue
        lo, hi = chart.domain[k]
        if x[k] - reach * h[k] < lo or x[k] + reach * h[k] > hi:
            raise StencilClipped(
                f"stencil of width {reach * h[k]:.2e} leaves {chart.name} along axis {k}"
            )


def numeric_christoffel(chart: MetricChart, x: Array, step: float = 1e-5) -> Array:
    """Christoffel symbols from central differences of the metric."""
    x = np.asarray(x, dtype=float)
    d = chart.dim
    h = _steps(x, step)
    dg = np.empty(x.shape[:-1] + (d, d, d))  # dg[..., l, m, n] = d_l g_mn
    for l in range(d):
        e = np.zeros(d)
        e[l] = 1.0
        hp = h[..., l : l + 1]
        dg[..., l, :, :] = (chart.metric(x + hp * e) - chart.metric(x - hp * e)) / (
            2.0 * hp[..., None]
        )
    ginv = np.linalg.inv(chart.metric(x))
    # lowered[..., l, b, m] = 1/2 (d_b g_lm + d_m g_lb - d_l g_bm)
    lowered = 0.5 * (
        np.swapaxes(dg, -3, -2)
        + np.moveaxis(dg, -3, -1)
        - dg
    )
    return np.einsum("...al,...lbm->...abm", ginv, lowered)


def christoffel_at(chart: MetricChart, x) -> Array:
    x = chart.check(x)
    if chart.christoffel_fn is None:
        _stencil_guard(chart, x, _steps(x, 1e-5), 1)
    return chart.christoffel(x)


@dataclass(frozen=True)
class CurvatureBundle:
    riemann: Array
    ricci: Array
    scalar: float


def curvature_at(chart: MetricChart, x, step: float = 1e-3) -> CurvatureBundle:
    """Riemann, Ricci and scalar curvature with a 4th-order stencil on the connection."""
    x = chart.check(x)
    d = chart.dim
    h = _steps(x, step)
    _stencil_guard(chart, x, h, 2 if chart.christoffel_fn is not None else 3)
    offsets = np.array([-2.0, -1.0, 1.0, 2.0])
    weights = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    pts = []
    for l in range(d):
        for o in offsets:
            xp = x.copy()
            xp[l] += o * h[l]
            pts.append(xp)
    gam_s = chart.christoffel(np.array(pts)).reshape(d, 4, d, d, d)
    dgam = np.einsum("o,lo...->l...", weights, gam_s) / h[:, None, None, None]
    gam = chart.christoffel(x)
    # dgam[l, a, b, m] = d_l Gamma^a_bm
    riemann = (
        np.einsum("manb->abmn", dgam)
        - np.einsum("namb->abmn", dgam)
        + np.einsum("aml,lnb->abmn", gam, gam)
        - np.einsum("anl,lmb->abmn", gam, gam)
    )
    ricci = np.einsum("aban->bn", riemann)
    # the antisymmetric part is pure stencil noise for a Levi-Civita connection
    ricci = 0.5 * (ricci + ricci.T)
    ginv = np.linalg.inv(chart.metric(x))
    scalar = float(np.einsum("bn,bn->", ginv, ricci))
    return CurvatureBundle(riemann=riemann, ricci=ricci, scalar=scalar)


def volume_density_at(chart: MetricChart, x) -> float:
    x = chart.check(x)
    return float(math.sqrt(abs(np.linalg.det(chart.metric(x)))))


def volume_density(chart: MetricChart, x: Array) -> Array:
    """Vectorized ``sqrt|det g|`` without domain checks."""
    return np.sqrt(np.abs(np.linalg.det(chart.metric(x))))


# ---------------------------------------------------------------------------
# transitions


def find_transition(chart_from: MetricChart, chart_to: MetricChart) -> Transition:
    if chart_from.name == chart_to.name:
        return Transition(forward=lambda x: np.array(x, float), jacobian=lambda x: np.eye(chart_from.dim))
    tr = chart_from.transitions.get(chart_to.name)
    if tr is not None:
        return tr
    back = chart_to.transitions.get(chart_from.name)
    if back is not None and back.inverse is not None:
        inv = back.inverse

        def jac(x, _inv=inv, _back=back):
            return np.linalg.inv(_back.jacobian(_inv(x)))

        return Transition(forward=inv, jacobian=jac, inverse=back.forward)
    raise NoTransition(f"no transition registered from {chart_from.name} to {chart_to.name}")


def transform_tensor(chart_from: MetricChart, chart_to: MetricChart, x, tensor, variance: str):
    """Transform a tensor at ``x`` into ``chart_to``.

    ``variance`` has one letter per index: ``'u'`` contravariant, ``'d'`` covariant.
    Returns ``(x_prime, tensor_prime)``.
    """
    tr = find_transition(chart_from, chart_to)
    x = np.asarray(x, dtype=float)
    if not chart_from.in_domain(x):
        raise OutOfOverlap(f"{x.tolist()} not in {chart_from.name}")
    xp = np.asarray(tr.forward(x), dtype=float)
    if not chart_to.in_domain(xp):
        raise OutOfOverlap(f"image {xp.tolist()} not in {chart_to.name}")
    J = np.asarray(tr.jacobian(x), dtype=float)
    Jinv_T = np.linalg.inv(J).T
    out = np.asarray(tensor, dtype=float)
    if out.ndim != len(variance):
        raise ValueError(f"tensor rank {out.ndim} does not match variance {variance!r}")
    for axis, kind in enumerate(variance):
        M = J if kind == "u" else Jinv_T if kind == "d" else None
        if M is None:
            raise ValueError(f"variance letters must be 'u' or 'd', got {kind!r}")
        out = np.moveaxis(np.tensordot(M, out, axes=([1], [axis])), 0, axis)
    return xp, out


# ---------------------------------------------------------------------------
# closed-form charts


def _minkowski_metric(dim: int, scale: float = 1.0):
    eta = np.diag([-1.0] + [1.0] * (dim - 1)) / scale**2

    def g(x):
        return np.broadcast_to(eta, x.shape[:-1] + (dim, dim)).copy()

    def gam(x):
        return np.zeros(x.shape[:-1] + (dim, dim, dim))

    return g, gam


def _scale_transition(dim, s_from, s_to):
    r = s_to / s_from
    return Transition(
        forward=lambda x: np.asarray(x, float) * r,
        jacobian=lambda x: np.eye(dim) * r,
        inverse=lambda x: np.asarray(x, float) / r,
    )


def minkowski(dim: int, scale: float = 1.0) -> MetricChart:
    if dim not in (2, 4):
        raise ChartSpecError("Minkowski charts exist for d = 2 and d = 4")
    if not scale > 0:
        raise ChartSpecError("scale must be positive")
    g, gam = _minkowski_metric(dim, scale)
    base = f"minkowski{dim}"
    name = base if scale == 1.0 else f"{base}:scale={scale:.12g}"
    transitions = {}
    if scale == 1.0:
        transitions[f"{base}:scale=2"] = _scale_transition(dim, 1.0, 2.0)
    else:
        transitions[base] = _scale_transition(dim, scale, 1.0)
    big = 1e6
    return MetricChart(
        name=name,
        kind=base,
        dim=dim,
        signature=(-1,) + (1,) * (dim - 1),
        domain=((-big, big),) * dim,
        metric_fn=g,
        christoffel_fn=gam,
        params={"scale": scale},
        transitions=transitions,
    )


def _sphere_metric(r):
    def g(x):
        th = x[..., 0]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = r * r
        out[..., 1, 1] = (r * np.sin(th)) ** 2
        return out

    def gam(x):
        th = x[..., 0]
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
        cot = np.cos(th) / np.sin(th)
        out[..., 1, 0, 1] = cot
        out[..., 1, 1, 0] = cot
        return out

    return g, gam


def _rotation_x(alpha):
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _unit(x):
    th, ph = x[..., 0], x[..., 1]
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)


def _unit_jac(x):
    th, ph = x[..., 0], x[..., 1]
    d_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=-1)
    d_ph = np.stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.zeros_like(th)], axis=-1)
    return np.stack([d_th, d_ph], axis=-1)  # (..., 3, 2)


def _angles(n):
    th = np.arccos(np.clip(n[..., 2], -1.0, 1.0))
    ph = np.arctan2(n[..., 1], n[..., 0])
    return np.stack([th, ph], axis=-1)


def _angles_jac(n):
    """d(theta, phi)/dn for a unit vector n, shape (..., 2, 3)."""
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    rho2 = nx * nx + ny * ny
    rho = np.sqrt(rho2)
    zero = np.zeros_like(nx)
    d_th = np.stack([zero, zero, -1.0 / rho], axis=-1)
    d_ph = np.stack([-ny / rho2, nx / rho2, zero], axis=-1)
    return np.stack([d_th, d_ph], axis=-2)


def _rotation_transition(R):
    def forward(x):
        return _angles(_unit(np.asarray(x, float)) @ R.T)

    def jacobian(x):
        x = np.asarray(x, float)
        n2 = _unit(x) @ R.T
        return _angles_jac(n2) @ R @ _unit_jac(x)

    def inverse(xp):
        return _angles(_unit(np.asarray(xp, float)) @ R)

    return Transition(forward=forward, jacobian=jacobian, inverse=inverse)


def _sphere_domain():
    return ((EPS_POLE, math.pi - EPS_POLE), (-math.inf, math.inf))


def sphere2(r: float = 1.0) -> MetricChart:
    if not r > 0:
        raise ChartSpecError("sphere radius must be positive")
    g, gam = _sphere_metric(r)
    rot = f"sphere2rot:r={r:.12g},alpha={math.pi / 2:.12g}"
    return MetricChart(
        name=f"sphere2:r={r:.12g}",
        kind="sphere2",
        dim=2,
        signature=(1, 1),
        domain=_sphere_domain(),
        metric_fn=g,
        christoffel_fn=gam,
        periods=(None, 2 * math.pi),
        params={"r": r},
        transitions={rot: _rotation_transition(_rotation_x(math.pi / 2))},
        reach=2 * math.pi * r,
    )


def sphere2_rotated(r: float = 1.0, alpha: float = math.pi / 2) -> MetricChart:
    """Round sphere in coordinates whose pole is rotated by ``alpha`` about the x-axis."""
    if not r > 0:
        raise ChartSpecError("sphere radius must be positive")
    g, gam = _sphere_metric(r)
    back = _rotation_transition(_rotation_x(-alpha))
    return MetricChart(
        name=f"sphere2rot:r={r:.12g},alpha={alpha:.12g}",
        kind="sphere2rot",
        dim=2,
        signature=(1, 1),
        domain=_sphere_domain(),
        metric_fn=g,
        christoffel_fn=gam,
        periods=(None, 2 * math.pi),
        params={"r": r, "alpha": alpha},
        transitions={f"sphere2:r={r:.12g}": back},
        reach=2 * math.pi * r,
    )


def _static_spherical(f, fp):
    """Metric -f dt^2 + dr^2/f + r^2 dOmega^2 and its connection."""

    def g(x):
        r, th = x[..., 1], x[..., 2]
        F = f(r)
        out = np.zeros(x.shape[:-1] + (4, 4))
        out[..., 0, 0] = -F
        out[..., 1, 1] = 1.0 / F
        out[..., 2, 2] = r * r
        out[..., 3, 3] = (r * np.sin(th)) ** 2
        return out

    def gam(x):
        r, th = x[..., 1], x[..., 2]
        F, Fp = f(r), fp(r)
        s, c = np.sin(th), np.cos(th)
        out = np.zeros(x.shape[:-1] + (4, 4, 4))
        out[..., 0, 0, 1] = out[..., 0, 1, 0] = Fp / (2 * F)
        out[..., 1, 0, 0] = F * Fp / 2
        out[..., 1, 1, 1] = -Fp / (2 * F)
        out[..., 1, 2, 2] = -r * F
        out[..., 1, 3, 3] = -r * F * s * s
        out[..., 2, 1, 2] = out[..., 2, 2, 1] = 1.0 / r
        out[..., 2, 3, 3] = -s * c
        out[..., 3, 1, 3] = out[..., 3, 3, 1] = 1.0 / r
        out[..., 3, 2, 3] = out[..., 3, 3, 2] = c / s
        return out

    return g, gam


def schwarzschild(M: float = 1.0) -> MetricChart:
    if not M > 0:
        raise ChartSpecError("mass must be positive")
    g, gam = _static_spherical(lambda r: 1 - 2 * M / r, lambda r: 2 * M / (r * r))
    name = f"schwarzschild:M={M:.12g}"

    def forward(x):
        x = np.array(x, float)
        t, r = x[..., 0], x[..., 1]
        x[..., 0] = t + r + 2 * M * np.log(r / (2 * M) - 1)
        return x

    def jacobian(x):
        r = np.asarray(x, float)[1]
        J = np.eye(4)
        J[0, 1] = 1.0 / (1 - 2 * M / r)
        return J

    def inverse(xp):
        x = np.array(xp, float)
        v, r = x[..., 0], x[..., 1]
        x[..., 0] = v - r - 2 * M * np.log(r / (2 * M) - 1)
        return x

    return MetricChart(
        name=name,
        kind="schwarzschild",
        dim=4,
        signature=(-1, 1, 1, 1),
        domain=((-1e4, 1e4), (2 * M * (1 + EPS_HORIZON), 1e4 * M), (EPS_POLE, math.pi - EPS_POLE), (-math.inf, math.inf)),
        metric_fn=g,
        christoffel_fn=gam,
        periods=(None, None, None, 2 * math.pi),
        params={"M": M},
        transitions={f"schwarzschild-ef:M={M:.12g}": Transition(forward, jacobian, inverse)},
    )


def schwarzschild_ef(M: float = 1.0) -> MetricChart:
    """Ingoing Eddington-Finkelstein chart (v, r, theta, phi)."""
    if not M > 0:
        raise ChartSpecError("mass must be positive")

    def g(x):
        r, th = x[..., 1], x[..., 2]
        out = np.zeros(x.shape[:-1] + (4, 4))
        out[..., 0, 0] = -(1 - 2 * M / r)
        out[..., 0, 1] = out[..., 1, 0] = 1.0
        out[..., 2, 2] = r * r
        out[..., 3, 3] = (r * np.sin(th)) ** 2
        return out

    def gam(x):
        r, th = x[..., 1], x[..., 2]
        s, c = np.sin(th), np.cos(th)
        out = np.zeros(x.shape[:-1] + (4, 4, 4))
        out[..., 0, 0, 0] = M / r**2
        out[..., 0, 2, 2] = -r
        out[..., 0, 3, 3] = -r * s * s
        out[..., 1, 0, 0] = M * (r - 2 * M) / r**3
        out[..., 1, 0, 1] = out[..., 1, 1, 0] = -M / r**2
        out[..., 1, 2, 2] = 2 * M - r
        out[..., 1, 3, 3] = (2 * M - r) * s * s
        out[..., 2, 1, 2] = out[..., 2, 2, 1] = 1.0 / r
        out[..., 2, 3, 3] = -s * c
        out[..., 3, 1, 3] = out[..., 3, 3, 1] = 1.0 / r
        out[..., 3, 2, 3] = out[..., 3, 3, 2] = c / s
        return out

    return MetricChart(
        name=f"schwarzschild-ef:M={M:.12g}",
        kind="schwarzschild-ef",
        dim=4,
        signature=(-1, 1, 1, 1),
        domain=((-1e4, 1e4), (2 * M * (1 + EPS_HORIZON), 1e4 * M), (EPS_POLE, math.pi - EPS_POLE), (-math.inf, math.inf)),
        metric_fn=g,
        christoffel_fn=gam,
        periods=(None, None, None, 2 * math.pi),
        params={"M": M},
    )


def de_sitter(L: float = 1.0) -> MetricChart:
    """Static patch with horizon radius ``L``."""
    if not L > 0:
        raise ChartSpecError("de Sitter radius must be positive")
    g, gam = _static_spherical(lambda r: 1 - (r / L) ** 2, lambda r: -2 * r / L**2)
    return MetricChart(
        name=f"desitter:L={L:.12g}",
        kind="desitter",
        dim=4,
        signature=(-1, 1, 1, 1),
        domain=((-1e4 * L, 1e4 * L), (EPS_POLE * L, L * (1 - EPS_HORIZON)), (EPS_POLE, math.pi - EPS_POLE), (-math.inf, math.inf)),
        metric_fn=g,
        christoffel_fn=gam,
        periods=(None, None, None, 2 * math.pi),
        params={"L": L},
    )


# ---------------------------------------------------------------------------
# registry

_FACTORIES = {
    "minkowski2": (lambda scale=1.0: minkowski(2, scale), {"scale"}),
    "minkowski4": (lambda scale=1.0: minkowski(4, scale), {"scale"}),
    "sphere2": (sphere2, {"r"}),
    "sphere2rot": (sphere2_rotated, {"r", "alpha"}),
    "schwarzschild": (schwarzschild, {"M"}),
    "schwarzschild-ef": (schwarzschild_ef, {"M"}),
    "desitter": (de_sitter, {"L"}),
}

CHART_KINDS = tuple(_FACTORIES)


def parse_chart_spec(spec: str):
    """Split ``"kind:key=val,key=val"`` into ``(kind, {key: float})``."""
    if not isinstance(spec, str) or not spec.strip():
        raise ChartSpecError("chart spec must be a non-empty string")
    kind, _, rest = spec.strip().partition(":")
    kind = kind.strip().lower()
    if kind not in _FACTORIES:
        raise ChartSpecError(f"unknown chart kind {kind!r}; expected one of {', '.join(CHART_KINDS)}")
    allowed = _FACTORIES[kind][1]
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            key = key.strip()
            if not sep or key not in allowed:
                raise ChartSpecError(f"bad parameter {item!r} for chart {kind}; allowed: {sorted(allowed)}")
            try:
                params[key] = float(val)
            except ValueError:
                raise ChartSpecError(f"parameter {key} of chart {kind} is not a number: {val!r}") from None
            if not math.isfinite(params[key]):
                raise ChartSpecError(f"parameter {key} of chart {kind} must be finite")
    return kind, params


_CACHE: dict = {}


def get_chart(spec: str) -> MetricChart:
    """Build (or fetch a cached) chart from its registry string, e.g. ``"sphere2:r=1"``."""
    kind, params = parse_chart_spec(spec)
    key = (kind, tuple(sorted(params.items())))
    chart = _CACHE.get(key)
    if chart is None:
        chart = _FACTORIES[kind][0](**params)
        _CACHE[key] = chart
    return chart
