"""Two-point tensors h_{mu nu}(x, y): geodesic-average and embedding constructions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .charts import MetricChart, _rotation_x, _unit, _unit_jac, find_transition, get_chart
from .errors import ExceptionalPair, NoTransition, OutOfDomain, UnsupportedGeometry
from .geodesics import SearchConfig, connect
from .sampling import sample_pairs, sample_points
from .transport import propagator


@dataclass(frozen=True)
class BitensorValue:
    x: np.ndarray
    y: np.ndarray
    covariant: np.ndarray  # h_{mu nu}, mu at x, nu at y
    contravariant: np.ndarray
    construction: str
    n: int
    # geodesic average only: the two transport directions averaged separately
    halves: Optional[tuple] = None

    @property
    def halves_gap(self) -> float:
        if self.halves is None:
            return 0.0
        return float(np.max(np.abs(self.halves[0] - self.halves[1])))


def _raise(chart: MetricChart, x, y, h):
    ginv_x = np.linalg.inv(chart.metric(x))
    ginv_y = np.linalg.inv(chart.metric(y))
    return ginv_x @ h @ ginv_y.T


def bitensor_geodesic(chart: MetricChart, x, y, search: SearchConfig = SearchConfig()) -> BitensorValue:
    """Average over connecting geodesics of the metric paired with the propagator, both directions."""
    x = chart.check(x)
    y = chart.check(y)
    gx = chart.metric(x)
    if np.max(np.abs(chart.wrap(y - x))) == 0.0:
        return BitensorValue(x, y, gx.copy(), np.linalg.inv(gx), "geodesic-average", 1, (gx.copy(), gx.copy()))
    gy = chart.metric(y)
    bundle = connect(chart, x, y, search)
    H1 = np.zeros_like(gx)
    H2 = np.zeros_like(gx)
    for geo in bundle.geodesics:
        P = propagator(geo).matrix
        Q = propagator(geo.reversed()).matrix
        H1 += P.T @ gy
        H2 += gx @ Q
    H1 /= bundle.n
    H2 /= bundle.n
    h = 0.5 * (H1 + H2)
    return BitensorValue(x, y, h, _raise(chart, x, y, h), "geodesic-average", bundle.n, (H1, H2))


# ---------------------------------------------------------------------------
# embeddings


@dataclass(frozen=True, eq=False)
class EmbeddingMap:
    chart: MetricChart
    k: int
    F: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]  # (..., k, d) = dF^k / dx^mu
    signs: tuple

    def induced_metric(self, x) -> np.ndarray:
        J = self.jacobian(np.asarray(x, dtype=float))
        return np.einsum("...ka,k,...kb->...ab", J, np.array(self.signs, float), J)


def embedding_for(chart: MetricChart) -> EmbeddingMap:
    """Closed-form isometric embedding for flat and round-sphere charts."""
    if chart.kind in ("minkowski2", "minkowski4"):
        s = chart.params.get("scale", 1.0)
        d = chart.dim

        def F(x, s=s):
            return np.asarray(x, float) / s

        def J(x, s=s, d=d):
            x = np.asarray(x, float)
            return np.broadcast_to(np.eye(d) / s, x.shape[:-1] + (d, d)).copy()

        return EmbeddingMap(chart, d, F, J, tuple(chart.signature))
    if chart.kind in ("sphere2", "sphere2rot"):
        r = chart.params["r"]
        # ambient frame is that of the standard chart; the rotated chart maps n' = R n
        Rt = _rotation_x(chart.params["alpha"]).T if chart.kind == "sphere2rot" else np.eye(3)

        def F(x, r=r, Rt=Rt):
            return r * _unit(np.asarray(x, float)) @ Rt.T

        def J(x, r=r, Rt=Rt):
            return r * Rt @ _unit_jac(np.asarray(x, float))

        return EmbeddingMap(chart, 3, F, J, (1, 1, 1))
    raise UnsupportedGeometry(f"no closed-form embedding for chart {chart.name}")


def bitensor_embedding(emb: EmbeddingMap, x, y) -> BitensorValue:
    chart = emb.chart
    try:
        x = chart.check(x)
        y = chart.check(y)
    except OutOfDomain:
        raise
    Jx = emb.jacobian(x)
    Jy = emb.jacobian(y)
    h = Jx.T @ np.diag(np.array(emb.signs, float)) @ Jy
    return BitensorValue(x, y, h, _raise(chart, x, y, h), "embedding", 1)


# ---------------------------------------------------------------------------
# axiom validation


@dataclass
class AxiomReport:
    construction: str
    chart: str
    partner: Optional[str]
    samples: int
    coincidence: float = 0.0
    transformation: float = 0.0
    exchange: float = 0.0
    halves: float = 0.0
    exceptional: list = field(default_factory=list)
    tolerance: float = 1e-6

    @property
    def passed(self) -> dict:
        return {
            "coincidence": self.coincidence < self.tolerance,
            "transformation": self.transformation < self.tolerance,
            "exchange": self.exchange < self.tolerance,
        }

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def _default_partner(chart: MetricChart) -> MetricChart:
    if not chart.transitions:
        raise NoTransition(f"chart {chart.name} has no registered transition")
    return get_chart(sorted(chart.transitions)[0])


def _evaluator(construction: str, chart: MetricChart, search: SearchConfig):
    if construction == "geodesic-average":
        return lambda x, y: bitensor_geodesic(chart, x, y, search)
    if construction == "embedding":
        emb = embedding_for(chart)
        return lambda x, y: bitensor_embedding(emb, x, y)
    raise ValueError(f"unknown construction {construction!r}")


def validate_bitensor_axioms(
    construction: str,
    chart: MetricChart,
    sample: int = 50,
    seed: int = 0,
    partner: Optional[MetricChart] = None,
    check_transformation: bool = True,
    search: SearchConfig = SearchConfig(),
    tolerance: float = 1e-6,
) -> AxiomReport:
    """Coincidence, exchange symmetry and two-point tensoriality over sampled pairs.

    Exceptional pairs are skipped and listed in the report.
    """
    if check_transformation and partner is None:
        partner = _default_partner(chart)
    if check_transformation:
        tr = find_transition(chart, partner)
    rng = np.random.default_rng(seed)
    pts = sample_points(chart, rng, sample)
    pairs = sample_pairs(chart, rng, sample)
    h_of = _evaluator(construction, chart, search)
    h_partner = _evaluator(construction, partner, search) if check_transformation else None
    rep = AxiomReport(construction, chart.name, partner.name if partner else None, sample, tolerance=tolerance)
    for x in pts:
        rep.coincidence = max(rep.coincidence, float(np.max(np.abs(h_of(x, x).covariant - chart.metric(x)))))
    for x, y in pairs:
        try:
            hxy = h_of(x, y)
            hyx = h_of(y, x)
        except ExceptionalPair:
            rep.exceptional.append((x.tolist(), y.tolist()))
            continue
        rep.exchange = max(rep.exchange, float(np.max(np.abs(hxy.covariant - hyx.covariant.T))))
        rep.halves = max(rep.halves, hxy.halves_gap, hyx.halves_gap)
        if check_transformation:
            xp, yp = tr.forward(x), tr.forward(y)
            Jx, Jy = tr.jacobian(x), tr.jacobian(y)
            expected = np.linalg.inv(Jx).T @ hxy.covariant @ np.linalg.inv(Jy)
            try:
                got = h_partner(xp, yp)
            except ExceptionalPair:
                rep.exceptional.append((x.tolist(), y.tolist()))
                continue
            rep.transformation = max(rep.transformation, float(np.max(np.abs(got.covariant - expected))))
    return rep
