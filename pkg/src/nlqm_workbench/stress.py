"""Stress-energy assembly, conservation residuals, and energy-condition audits.

T is sampled on the grid of the last argument slot (the event z).  Variations
of the bitensor with respect to the metric are not included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .charts import MetricChart, volume_density
from .errors import SpecMismatch
from .wavefield import GridSpec, LagrangianParams, WaveField, derivative_array, eta, gradient, reduced_inner

VERDICT_TOL = 1e-8
INDETERMINATE_TOL = 1e-7


@dataclass
class StressField:
    spec: GridSpec  # grid of z
    T: np.ndarray  # (..., d, d), covariant
    metric: np.ndarray  # (..., d, d) at every z
    chart: Optional[MetricChart] = None
    pieces: dict = field(default_factory=dict)
    I: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.spec.d

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.T - np.swapaxes(self.T, -1, -2))))

    def trace(self) -> np.ndarray:
        return np.einsum("...ab,...ab->...", np.linalg.inv(self.metric), self.T)


def _slot_points(spec: GridSpec) -> np.ndarray:
    axes = [spec.coords(a) for a in spec.slot_axes(spec.N - 1)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _geometry(spec: GridSpec, chart: Optional[MetricChart]):
    """Metric at every z, sqrt|g| on the slot grid (None when flat)."""
    zshape = spec.slot_spec().shape
    if chart is None:
        return np.broadcast_to(eta(spec.d), zshape + (spec.d, spec.d)).copy(), None
    if chart.dim != spec.d:
        raise SpecMismatch("chart dimension differs from the field's event dimension")
    pts = _slot_points(spec)
    return chart.metric(pts), volume_density(chart, pts)


def derivative_correlation(field: WaveField, weight: Optional[np.ndarray] = None) -> np.ndarray:
    """A_{ab}(z) = <d_a psi | d_b psi>^{(1)}(z) with derivatives on the last slot."""
    spec = field.spec
    grads = gradient(field, spec.N - 1)
    d = spec.d
    zshape = spec.slot_spec().shape
    A = np.zeros(zshape + (d, d), dtype=complex)
    for a in range(d):
        for b in range(a, d):
            A[..., a, b] = reduced_inner(grads[a], grads[b], spec, 1, weight)
            if b != a:
                A[..., b, a] = np.conj(A[..., a, b])
    return A


def I_c(field: WaveField, params: LagrangianParams, chart: Optional[MetricChart] = None) -> np.ndarray:
    """c * int dx sqrt|g| g^{mu nu} d_{1,mu} psi*(z, x) d_{1,nu} psi(z, x); zero for N = 1."""
    spec = field.spec
    zshape = spec.slot_spec().shape
    if spec.N == 1:
        return np.zeros(zshape)
    g, vol = _geometry(spec, chart)
    ginv = np.linalg.inv(g)
    grads = gradient(field, 1)
    d = spec.d
    # integrand over (z, x): integrate the second slot, keeping the first
    dens = np.zeros(spec.shape, dtype=complex)
    for m in range(d):
        for n in range(d):
            coef = ginv[..., m, n]
            if not np.any(coef):
                continue
            dens += _on_slot(coef, spec, 1) * np.conj(grads[m]) * grads[n]
    if vol is not None:
        dens = dens * _on_slot(vol, spec, 1)
    out = dens
    for ax in reversed(spec.slot_axes(1)):
        out = np.tensordot(out, spec.weights(ax), axes=([ax], [0]))
    return params.c * out.real


def _on_slot(arr: np.ndarray, spec: GridSpec, slot: int) -> np.ndarray:
    shape = [1] * len(spec.points)
    for ax in spec.slot_axes(slot):
        shape[ax] = spec.points[ax]
    return arr.reshape(shape)


def _integrate_slot(arr: np.ndarray, spec: GridSpec, slot: int) -> np.ndarray:
    out = arr
    for ax in reversed(spec.slot_axes(slot)):
        out = np.tensordot(out, spec.weights(ax), axes=([ax], [0]))
    return out


def I_a(field: WaveField, params: LagrangianParams) -> np.ndarray:
    """a eta^{mu nu} [int dy d_{0mu}psi* d_{1nu}psi (z, y) + int dx d_{0mu}psi* d_{1nu}psi (x, z)], real part."""
    spec = _need_pair(field)
    g = eta(spec.d)
    g0, g1 = gradient(field, 0), gradient(field, 1)
    dens = sum(g[m, m] * np.conj(g0[m]) * g1[m] for m in range(spec.d))
    out = _integrate_slot(dens, spec, 1) + _integrate_slot(dens, spec, 0)
    return params.a * out.real


def I_b(field: WaveField, params: LagrangianParams) -> np.ndarray:
    """2b Re(eta^{mu nu} [conj S_mu(z) + conj R_mu(z)] M_nu).

    S_mu(z) = int dy psi*(z, y) d_{1mu} psi(z, y), R_mu(z) = <psi|d_mu psi>^{(1)}(z)
    and M_nu = <psi|d_{1nu} psi>.
    """
    spec = _need_pair(field)
    g = eta(spec.d)
    psi = field.values
    g1 = gradient(field, 1)
    out = 0.0
    for m in range(spec.d):
        S = _integrate_slot(np.conj(psi) * g1[m], spec, 1)
        R = reduced_inner(psi, g1[m], spec, 1)
        M = complex(reduced_inner(psi, g1[m], spec, 0))
        out = out + g[m, m] * (np.conj(S) + np.conj(R)) * M
    return 2 * params.b * np.real(out)


def _need_pair(field: WaveField) -> GridSpec:
    if field.spec.N != 2:
        raise SpecMismatch("I_a and I_b need N = 2")
    if not all(field.spec.periodic):
        raise SpecMismatch("I_a and I_b need a periodic grid")
    return field.spec


def compute_I_terms(field: WaveField, params: LagrangianParams) -> tuple:
    return I_a(field, params), I_b(field, params), I_c(field, params)


def stress_c(field: WaveField, params: LagrangianParams, chart: Optional[MetricChart] = None) -> StressField:
    """c [Re A - 1/2 g tr(g^-1 A)] - g I_c on the grid of z."""
    spec = field.spec
    g, vol = _geometry(spec, chart)
    A = derivative_correlation(field, vol).real
    ginv = np.linalg.inv(g)
    trA = np.einsum("...ab,...ab->...", ginv, A)
    Ic = I_c(field, params, chart)
    T = params.c * (A - 0.5 * g * trA[..., None, None]) - g * Ic[..., None, None]
    T = 0.5 * (T + np.swapaxes(T, -1, -2))
    return StressField(spec.slot_spec(), T, g, chart, {"c": True, "I_c": spec.N > 1}, {"I_c": Ic})


def stress_total_flat(field: WaveField, params: LagrangianParams) -> StressField:
    """c-structure minus eta (I_a + I_b + I_c)."""
    spec = _need_pair(field)
    base = stress_c(field, params)
    Ia, Ib = I_a(field, params), I_b(field, params)
    g = base.metric
    T = base.T - g * (Ia + Ib)[..., None, None]
    pieces = {"c": True, "I_a": True, "I_b": True, "I_c": True, "a": False, "b": False}
    return StressField(base.spec, T, g, None, pieces, {"I_a": Ia, "I_b": Ib, "I_c": base.I["I_c"]})


# ---------------------------------------------------------------------------
# conservation


def divergence_T(stress: StressField) -> np.ndarray:
    """g^{bc} nabla_c T_{ab} at every z, shape (..., d)."""
    spec, T = stress.spec, stress.T
    d = spec.d
    dT = np.stack([derivative_array(T, spec, spec.axis(0, c)) for c in range(d)], axis=-1)  # (..., a, b, c)
    dT = dT.real
    if stress.chart is not None:
        gam = stress.chart.christoffel(_slot_points(spec))
        # nabla_c T_ab = d_c T_ab - Gamma^l_{ca} T_lb - Gamma^l_{cb} T_al
        dT = dT - np.einsum("...lca,...lb->...abc", gam, T) - np.einsum("...lcb,...al->...abc", gam, T)
    ginv = np.linalg.inv(stress.metric)
    return np.einsum("...bc,...abc->...a", ginv, dT)


# ---------------------------------------------------------------------------
# energy conditions


def orthonormal_frame(g: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on the coordinate basis; rows are e_0 (timelike) .. e_{d-1}."""
    d = g.shape[0]
    basis = []
    for k in range(d):
        v = np.eye(d)[k]
        for e, s in basis:
            v = v - s * (e @ g @ v) * e
        n = v @ g @ v
        if abs(n) < 1e-14:
            raise ValueError("degenerate coordinate basis for Gram-Schmidt")
        basis.append((v / math.sqrt(abs(n)), 1.0 if n > 0 else -1.0))
    frame = np.array([e for e, _ in basis])
    signs = [s for _, s in basis]
    if signs[0] > 0:
        raise ValueError("first coordinate direction is not timelike")
    return frame


def sample_observers(g: np.ndarray, count: int, seed: int = 0, max_rapidity: float = 3.0) -> np.ndarray:
    """Unit future-directed timelike vectors: boosts of the frame's e_0 with uniform rapidity."""
    rng = np.random.default_rng(seed)
    frame = orthonormal_frame(g)
    d = g.shape[0]
    zeta = rng.uniform(0.0, max_rapidity, size=count)
    n = rng.normal(size=(count, d - 1))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return np.cosh(zeta)[:, None] * frame[0] + np.sinh(zeta)[:, None] * (n @ frame[1:])


@dataclass
class ConditionReport:
    condition: str
    margins: np.ndarray  # per sample point: min over observers
    seed: int
    count: int

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins))

    @property
    def verdict(self) -> str:
        return classify(self.min_margin)


def classify(margin: float) -> str:
    if margin >= -VERDICT_TOL:
        return "pass"
    if margin >= -INDETERMINATE_TOL:
        return "indeterminate"
    return "fail"


def condition_margins(T: np.ndarray, g: np.ndarray, W: np.ndarray) -> dict:
    """Per-condition margins at one point for observers W (rows)."""
    ww = np.einsum("na,ab,nb->n", W, T, W)
    ginv = np.linalg.inv(g)
    trace = float(np.einsum("ab,ab->", ginv, T))
    wec = ww
    # energy flux F^b = -T^b_a W^a must be causal
    F = -np.einsum("bc,ca,na->nb", ginv, T, W)
    flux = -np.einsum("na,ab,nb->n", F, g, F)
    frame = orthonormal_frame(g)
    Tf = frame @ T @ frame.T  # frame components T_(ab); T^(00) = T_(00), T^(ij) = T_(ij)
    comp = Tf[0, 0] - np.max(np.abs(Tf[1:, 1:])) if len(Tf) > 1 else Tf[0, 0]
    dec = np.minimum(np.minimum(wec, flux), comp)
    wnorm = np.einsum("na,ab,nb->n", W, g, W)
    sec = ww - 0.5 * wnorm * trace
    return {"WEC": wec, "DEC": dec, "SEC": sec}


def audit_conditions(
    stress: StressField,
    conditions: Sequence[str] = ("WEC", "DEC", "SEC"),
    count: int = 50,
    seed: int = 0,
) -> list:
    T = stress.T.reshape(-1, stress.d, stress.d)
    g = stress.metric.reshape(-1, stress.d, stress.d)
    mins = {c: np.empty(len(T)) for c in conditions}
    flat = stress.chart is None
    W_flat = sample_observers(g[0], count, seed) if flat else None
    for k in range(len(T)):
        W = W_flat if flat else sample_observers(g[k], count, seed)
        m = condition_margins(T[k], g[k], W)
        for c in conditions:
            mins[c][k] = float(np.min(m[c]))
    return [ConditionReport(c, mins[c].reshape(stress.T.shape[:-2]), seed, count) for c in conditions]


def observer_density(field: WaveField, W: np.ndarray, params: LagrangianParams) -> np.ndarray:
    """c <|W^a d_a psi|^2>^{(1)}(z) for one observer W (flat)."""
    spec = field.spec
    grads = gradient(field, spec.N - 1)
    Wd = sum(W[a] * grads[a] for a in range(spec.d))
    return params.c * reduced_inner(Wd, Wd, spec, 1).real


def sec_margin_field(stress: StressField, W: np.ndarray) -> np.ndarray:
    """W W T - 1/2 (W.W) tr T at every z."""
    ww = np.einsum("a,...ab,b->...", W, stress.T, W)
    wnorm = np.einsum("a,...ab,b->...", W, stress.metric, W)
    return ww - 0.5 * wnorm * stress.trace()
