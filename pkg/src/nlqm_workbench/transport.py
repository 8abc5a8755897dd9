"""Parallel transport along stored geodesics.

The transport system dX/ds = A(s) X with A[a, m] = -Gamma^a_{bm} xdot^b is
linear, so each RK4 step over a node interval is a fixed matrix.  Midpoint
positions and velocities come from cubic Hermite interpolation of the node
data, and the full propagator is the ordered product of step matrices.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import MismatchedBase
from .geodesics import Geodesic, geodesic_acceleration


@dataclass(frozen=True, eq=False)
class Propagator:
    geodesic: Geodesic
    matrix: np.ndarray  # P[mu, alpha]: T_x -> T_y

    def apply(self, X) -> np.ndarray:
        return self.matrix @ np.asarray(X, dtype=float)


def _connection_matrix(chart, x, v):
    """A[..., a, m] = -Gamma^a_{bm} v^b."""
    gam = chart.christoffel(x)
    return -np.einsum("...abm,...b->...am", gam, v)


def step_matrices(geo: Geodesic) -> np.ndarray:
    """One RK4 step matrix per node interval, shape (K-1, d, d)."""
    chart = geo.chart
    x, v, s = geo.x, geo.v, geo.s
    h = np.diff(s)[:, None, None]
    if len(s) < 2:
        return np.zeros((0, chart.dim, chart.dim))
    if not np.any(v):
        return np.broadcast_to(np.eye(chart.dim), (len(s) - 1, chart.dim, chart.dim)).copy()
    a = geodesic_acceleration(chart, x, v)
    hv = h[:, :, 0]
    xm = 0.5 * (x[:-1] + x[1:]) + hv * (v[:-1] - v[1:]) / 8.0
    vm = 0.5 * (v[:-1] + v[1:]) + hv * (a[:-1] - a[1:]) / 8.0
    A = _connection_matrix(chart, x, v)
    A0, A1 = A[:-1], A[1:]
    Am = _connection_matrix(chart, xm, vm)
    eye = np.eye(chart.dim)
    AmA0 = Am @ A0
    AmAm = Am @ Am
    A1Am = A1 @ Am
    return (
        eye
        + (h / 6.0) * (A0 + 4.0 * Am + A1)
        + (h**2 / 6.0) * (AmA0 + AmAm + A1Am)
        + (h**3 / 12.0) * (AmAm @ A0 + A1 @ AmAm)
        + (h**4 / 24.0) * (A1Am @ AmA0)
    )


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """M[K-1] @ ... @ M[1] @ M[0] by pairwise reduction."""
    d = mats.shape[-1]
    if len(mats) == 0:
        return np.eye(d)
    m = mats
    while len(m) > 1:
        if len(m) % 2:
            m = np.concatenate([m, np.eye(d)[None]], axis=0)
        m = m[1::2] @ m[0::2]
    return m[0].copy()


_CACHE: "OrderedDict[str, Propagator]" = OrderedDict()
_CACHE_MAX = 8192


def clear_cache():
    _CACHE.clear()


def propagator(geo: Geodesic) -> Propagator:
    key = geo.key
    hit = _CACHE.get(key)
    if hit is not None:
        _CACHE.move_to_end(key)
        return hit
    P = Propagator(geo, ordered_product(step_matrices(geo)))
    _CACHE[key] = P
    if len(_CACHE) > _CACHE_MAX:
        _CACHE.popitem(last=False)
    return P


def transport_vector(geo: Geodesic, X, base=None) -> np.ndarray:
    """Parallel transport of the components ``X`` from ``geo.start`` to ``geo.end``.

    If ``base`` is given it must coincide with the start of the geodesic.
    """
    if base is not None:
        delta = geo.chart.wrap(np.asarray(base, dtype=float) - geo.start)
        if np.max(np.abs(delta)) > 1e-9:
            raise MismatchedBase("vector is not based at the start of the geodesic")
    return propagator(geo).apply(X)


def transport_path(geo: Geodesic, X) -> np.ndarray:
    """Transported components at every node, shape (K, d)."""
    mats = step_matrices(geo)
    out = np.empty((len(geo.s), geo.chart.dim))
    out[0] = X
    for k, m in enumerate(mats):
        out[k + 1] = m @ out[k]
    return out


def transport_residual(geo: Geodesic, X) -> float:
    """Max |dX/ds + Gamma v X| at interior nodes from 4th-order differences."""
    path = transport_path(geo, X)
    h = geo.s[1] - geo.s[0]
    dX = (path[:-4] - 8 * path[1:-3] + 8 * path[3:-1] - path[4:]) / (12 * h)
    A = _connection_matrix(geo.chart, geo.x[2:-2], geo.v[2:-2])
    return float(np.max(np.abs(dX - np.einsum("kam,km->ka", A, path[2:-2]))))


def isometry_defect(geo: Geodesic, X, Y) -> float:
    """|g_y(PX, PY) - g_x(X, Y)| for one pair of vectors."""
    P = propagator(geo).matrix
    gx = geo.chart.metric(geo.start)
    gy = geo.chart.metric(geo.end)
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    return float(abs((P @ X) @ gy @ (P @ Y) - X @ gx @ Y))


def holonomy(geos) -> np.ndarray:
    """Product of propagators around a closed chain of geodesics."""
    M = np.eye(geos[0].chart.dim)
    for g in geos:
        M = propagator(g).matrix @ M
    return M
