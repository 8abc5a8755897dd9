"""Dynamical operators D_a, D_b, D_c, residuals, and the N = 1 flat wave evolution.

Slot 0 plays the role of x and slot 1 of y.  Prefactors a, b, c are included
in each operator.  With ``symmetrize`` on, the pair operators are summed over
ordered slot pairs with weights chosen so that, for b = -N c and a = (N-1) c,

    D_a + D_b + D_c = c [sum_ij eta d_i d_j psi - sum_ij gamma_ij <psi|d_j psi> eta d_i psi]

with gamma_ij = 1 for i > j and gamma_ij = -gamma_ji.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .charts import MetricChart, volume_density
from .errors import CFLViolation, SpecMismatch, UnsupportedGeometry
from .wavefield import (
    GridSpec,
    LagrangianParams,
    WaveField,
    derivative_array,
    eta,
    full_inner,
    gradient,
)


@dataclass(frozen=True)
class OperatorConfig:
    params: LagrangianParams = LagrangianParams()
    geometry: Union[str, MetricChart] = "flat"
    symmetrize: bool = False

    def __post_init__(self):
        if not self.flat and (self.params.a or self.params.b):
            raise UnsupportedGeometry("curved geometry is supported for the c-term only")

    @property
    def flat(self) -> bool:
        return isinstance(self.geometry, str) and self.geometry == "flat"


def _need_pair(field: WaveField, config: OperatorConfig, name: str):
    if not config.flat:
        raise UnsupportedGeometry(f"{name} is implemented in the flat limit only")
    if field.spec.N != 2:
        raise SpecMismatch(f"{name} needs N = 2")


def _box(field: WaveField, i: int, j: int) -> np.ndarray:
    """eta^{mu nu} d_{i,mu} d_{j,nu} psi."""
    spec = field.spec
    g = eta(spec.d)
    out = np.zeros(spec.shape, dtype=complex)
    for mu in range(spec.d):
        first = derivative_array(field.values, spec, spec.axis(j, mu))
        out += g[mu, mu] * derivative_array(first, spec, spec.axis(i, mu))
    return out


def apply_Da(field: WaveField, config: OperatorConfig) -> WaveField:
    _need_pair(field, config, "D_a")
    a = config.params.a
    if not config.symmetrize:
        return WaveField(field.spec, a * _box(field, 0, 1))
    N = field.spec.N
    total = sum(_box(field, i, j) for i in range(N) for j in range(N) if i != j)
    return WaveField(field.spec, (a / (N - 1)) * total)


def _pair_bracket(field: WaveField, grads, x: int, y: int) -> np.ndarray:
    """-<psi|d_y psi> eta d_x psi + <psi|d_x psi> eta d_y psi (full inner products)."""
    spec = field.spec
    g = eta(spec.d)
    psi = field.values
    out = np.zeros(spec.shape, dtype=complex)
    for mu in range(spec.d):
        ey = full_inner(psi, grads[y][mu], spec)
        ex = full_inner(psi, grads[x][mu], spec)
        out += g[mu, mu] * (-ey * grads[x][mu] + ex * grads[y][mu])
    return out


def apply_Db(field: WaveField, config: OperatorConfig) -> WaveField:
    _need_pair(field, config, "D_b")
    b = config.params.b
    N = field.spec.N
    grads = [gradient(field, i) for i in range(N)]
    if not config.symmetrize:
        return WaveField(field.spec, b * _pair_bracket(field, grads, 0, 1))
    total = sum(_pair_bracket(field, grads, x, y) for x in range(N) for y in range(x + 1, N))
    return WaveField(field.spec, (b / N) * total)


def _slot_coords(spec: GridSpec, slot: int) -> np.ndarray:
    """Chart coordinates of every grid point of one slot, shape (n_0, .., n_{d-1}, d)."""
    axes = [spec.coords(ax) for ax in spec.slot_axes(slot)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _expand(arr: np.ndarray, spec: GridSpec, slot: int) -> np.ndarray:
    shape = [1] * len(spec.points)
    for j, ax in enumerate(spec.slot_axes(slot)):
        shape[ax] = spec.points[ax]
    return arr.reshape(shape)


def laplace_beltrami(field: WaveField, chart: MetricChart, slot: int) -> np.ndarray:
    """(1/sqrt|g|) d_mu (sqrt|g| g^{mu nu} d_nu psi) on one slot, with grid coordinates as chart coordinates."""
    spec = field.spec
    if chart.dim != spec.d:
        raise SpecMismatch("chart dimension differs from the field's event dimension")
    pts = _slot_coords(spec, slot)
    ginv = np.linalg.inv(chart.metric(pts))
    vol = volume_density(chart, pts)
    grads = gradient(field, slot)
    out = np.zeros(spec.shape, dtype=complex)
    for mu in range(spec.d):
        flux = sum(_expand(vol * ginv[..., mu, nu], spec, slot) * grads[nu] for nu in range(spec.d))
        out += derivative_array(flux, spec, spec.axis(slot, mu))
    return out / _expand(vol, spec, slot)


def apply_Dc(field: WaveField, config: OperatorConfig) -> WaveField:
    c = config.params.c
    spec = field.spec
    if config.flat:
        total = sum(_box(field, i, i) for i in range(spec.N))
    else:
        total = sum(laplace_beltrami(field, config.geometry, i) for i in range(spec.N))
    return WaveField(spec, c * total)


def apply_D(field: WaveField, config: OperatorConfig) -> WaveField:
    p = config.params
    out = apply_Dc(field, config).values if p.c else np.zeros(field.spec.shape, dtype=complex)
    if field.spec.N == 2 and config.flat:
        if p.a:
            out = out + apply_Da(field, config).values
        if p.b:
            out = out + apply_Db(field, config).values
    return WaveField(field.spec, out)


def grid_norm(values: np.ndarray, spec: GridSpec) -> float:
    """Quadrature L2 norm over the whole grid."""
    return math.sqrt(max(full_inner(values, values, spec).real, 0.0))


def residual(field: WaveField, config: OperatorConfig) -> float:
    return grid_norm(apply_D(field, config).values, field.spec)


def gamma_form(field: WaveField, c: float = 1.0) -> WaveField:
    """c [sum_ij eta d_i d_j psi - sum_ij gamma_ij <psi|d_j psi> eta d_i psi]."""
    spec = field.spec
    N = spec.N
    g = eta(spec.d)
    grads = [gradient(field, i) for i in range(N)]
    out = sum(_box(field, i, j) for i in range(N) for j in range(N))
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            gam = 1.0 if i > j else -1.0
            for mu in range(spec.d):
                out = out - gam * g[mu, mu] * full_inner(field.values, grads[j][mu], spec) * grads[i][mu]
    return WaveField(spec, c * out)


# ---------------------------------------------------------------------------
# N = 1 flat evolution


def evolve_n1_flat(psi0, psi_t0, length: float, steps: int, dt: float) -> WaveField:
    """Leapfrog for -psi_tt + psi_xx = 0 on a periodic interval.

    Returns a field on a (steps + 1) x n grid whose time axis is non-periodic.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    psi_t0 = np.asarray(psi_t0, dtype=complex)
    n = psi0.shape[0]
    if psi0.shape != (n,) or psi_t0.shape != (n,):
        raise SpecMismatch("initial data must be one-dimensional slices of equal length")
    dx = length / n
    if dt > dx * (1 + 1e-12):
        raise CFLViolation(f"dt = {dt} exceeds dx = {dx}")
    if steps < 4:
        raise ValueError("need at least four time steps")
    r2 = (dt / dx) ** 2

    def lap(u):
        return np.roll(u, -1) - 2 * u + np.roll(u, 1)

    out = np.empty((steps + 1, n), dtype=complex)
    out[0] = psi0
    out[1] = psi0 + dt * psi_t0 + 0.5 * r2 * lap(psi0)
    for k in range(1, steps):
        out[k + 1] = 2 * out[k] - out[k - 1] + r2 * lap(out[k])
    spec = GridSpec(1, 2, (steps + 1, n), (steps * dt, length), (False, True))
    return WaveField(spec, out)


def discrete_energy(field: WaveField) -> np.ndarray:
    """Energy conserved exactly by the leapfrog scheme, one value per time interval."""
    spec = field.spec
    if spec.N != 1 or spec.periodic[0]:
        raise SpecMismatch("discrete energy is defined for evolved N = 1 fields")
    dt = spec.spacing(0)
    dx = spec.lengths[1] / spec.points[1]
    u = field.values
    kin = np.abs((u[1:] - u[:-1]) / dt) ** 2
    grad_now = (np.roll(u, -1, axis=1) - u) / dx
    pot = np.real(np.conj(grad_now[1:]) * grad_now[:-1])
    return 0.5 * dx * np.sum(kin + pot, axis=1)
