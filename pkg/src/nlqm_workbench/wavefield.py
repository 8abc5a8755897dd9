"""Space-time wavefunctions on product grids.

A field of N arguments, each a d-dimensional event, lives on an (N*d)-dimensional
grid whose axes are ordered slot by slot: ``(x_0^0, .., x_0^{d-1}, x_1^0, ..)``.
Coordinate 0 of every slot is time.  Periodic axes use spectral derivatives and
a uniform Riemann sum; non-periodic axes (evolved time) use 4th-order finite
differences and the trapezoid rule.
"""

from __future__ import annotations

import io
import itertools
import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import IncommensurateWavevector, NumericalHermiticityFailure, SpecMismatch

MAX_POINTS = 1 << 24


def eta(d: int) -> np.ndarray:
    return np.diag([-1.0] + [1.0] * (d - 1))


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    N: int
    d: int
    points: tuple
    lengths: tuple
    periodic: tuple = ()
    origin: tuple = ()
    max_points: int = MAX_POINTS

    def __post_init__(self):
        n_axes = self.N * self.d
        if self.N not in (1, 2):
            raise SpecMismatch("N must be 1 or 2")
        if self.d not in (2, 4):
            raise SpecMismatch("d must be 2 or 4")
        for name in ("points", "lengths"):
            val = getattr(self, name)
            if np.isscalar(val):
                val = (val,) * n_axes
            object.__setattr__(self, name, tuple(val))
        object.__setattr__(self, "points", tuple(int(p) for p in self.points))
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        if not self.periodic:
            object.__setattr__(self, "periodic", (True,) * n_axes)
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if not self.origin:
            object.__setattr__(self, "origin", (0.0,) * n_axes)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        for name in ("points", "lengths", "periodic", "origin"):
            if len(getattr(self, name)) != n_axes:
                raise SpecMismatch(f"{name} needs {n_axes} entries")
        for p, per, L in zip(self.points, self.periodic, self.lengths):
            if per and not _is_pow2(p):
                raise SpecMismatch("periodic axes need a power-of-two point count")
            if p < 5 and not per:
                raise SpecMismatch("non-periodic axes need at least five points")
            if not (L > 0 and math.isfinite(L)):
                raise SpecMismatch("box lengths must be positive and finite")
        if math.prod(self.points) > self.max_points:
            raise SpecMismatch(f"grid of {math.prod(self.points)} points exceeds the cap {self.max_points}")

    @classmethod
    def uniform(cls, N: int, d: int, points: int, length: float, **kw) -> "GridSpec":
        return cls(N, d, (points,) * (N * d), (length,) * (N * d), **kw)

    @property
    def shape(self) -> tuple:
        return self.points

    def axis(self, slot: int, mu: int) -> int:
        if not (0 <= slot < self.N and 0 <= mu < self.d):
            raise SpecMismatch(f"no axis for slot {slot}, coordinate {mu}")
        return slot * self.d + mu

    def slot_axes(self, slot: int) -> tuple:
        return tuple(range(slot * self.d, (slot + 1) * self.d))

    def spacing(self, ax: int) -> float:
        n, L = self.points[ax], self.lengths[ax]
        return L / n if self.periodic[ax] else L / (n - 1)

    def coords(self, ax: int) -> np.ndarray:
        return self.origin[ax] + self.spacing(ax) * np.arange(self.points[ax])

    def mesh(self, slot: int) -> list:
        """Broadcastable coordinate arrays of one slot over the full grid."""
        out = []
        for ax in self.slot_axes(slot):
            shape = [1] * len(self.points)
            shape[ax] = self.points[ax]
            out.append(self.coords(ax).reshape(shape))
        return out

    def weights(self, ax: int) -> np.ndarray:
        h = self.spacing(ax)
        w = np.full(self.points[ax], h)
        if not self.periodic[ax]:
            w[0] = w[-1] = 0.5 * h
        return w

    def slot_spec(self) -> "GridSpec":
        """Grid of a single argument (the last slot)."""
        ax = self.slot_axes(self.N - 1)
        return GridSpec(
            1,
            self.d,
            tuple(self.points[a] for a in ax),
            tuple(self.lengths[a] for a in ax),
            tuple(self.periodic[a] for a in ax),
            tuple(self.origin[a] for a in ax),
            self.max_points,
        )


@dataclass(frozen=True, eq=False)
class WaveField:
    spec: GridSpec
    values: np.ndarray
    symmetrized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.spec.shape:
            raise SpecMismatch(f"values of shape {v.shape} do not match grid {self.spec.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def with_values(self, values, symmetrized: Optional[bool] = None) -> "WaveField":
        return WaveField(self.spec, values, self.symmetrized if symmetrized is None else symmetrized)

    def __mul__(self, s):
        return self.with_values(self.values * s)

    __rmul__ = __mul__

    def __add__(self, other: "WaveField"):
        _match(self, other)
        return self.with_values(self.values + other.values, self.symmetrized and other.symmetrized)

    def __sub__(self, other: "WaveField"):
        _match(self, other)
        return self.with_values(self.values - other.values, self.symmetrized and other.symmetrized)

    def exchanged(self) -> np.ndarray:
        """Values with the two argument blocks swapped."""
        if self.spec.N == 1:
            return self.values
        d = self.spec.d
        return np.moveaxis(self.values, list(range(d)), list(range(d, 2 * d)))

    def exchange_defect(self) -> float:
        return float(np.max(np.abs(self.values - self.exchanged()))) if self.spec.N == 2 else 0.0

    def norm2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)))

    # serialization ------------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Header (N, d, points, box lengths; little-endian 64-bit) then interleaved re/im."""
        s = self.spec
        head = struct.pack("<qq", s.N, s.d)
        head += struct.pack(f"<{len(s.points)}q", *s.points)
        head += struct.pack(f"<{len(s.lengths)}d", *s.lengths)
        body = np.ascontiguousarray(self.values).view(np.float64).astype("<f8").tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes, periodic: Sequence[bool] = ()) -> "WaveField":
        N, d = struct.unpack_from("<qq", data, 0)
        n_axes = N * d
        off = 16
        points = struct.unpack_from(f"<{n_axes}q", data, off)
        off += 8 * n_axes
        lengths = struct.unpack_from(f"<{n_axes}d", data, off)
        off += 8 * n_axes
        spec = GridSpec(N, d, points, lengths, tuple(periodic))
        flat = np.frombuffer(data, dtype="<f8", offset=off)
        if flat.size != 2 * math.prod(points):
            raise SpecMismatch("payload size does not match header")
        vals = flat.reshape(-1, 2)
        return cls(spec, (vals[:, 0] + 1j * vals[:, 1]).reshape(points))

    def slice_csv(self, ax: int, index: Optional[Sequence[int]] = None) -> str:
        """One-dimensional cut along ``ax`` (other axes at ``index`` or 0) as CSV text."""
        idx = list(index) if index is not None else [0] * len(self.spec.points)
        idx[ax] = slice(None)
        cut = self.values[tuple(idx)]
        buf = io.StringIO()
        buf.write("coord,re,im\n")
        for c, v in zip(self.spec.coords(ax), cut):
            buf.write(f"{c:.17g},{v.real:.17g},{v.imag:.17g}\n")
        return buf.getvalue()


def _match(a: WaveField, b: WaveField):
    if a.spec != b.spec:
        raise SpecMismatch("fields live on different grids")


# ---------------------------------------------------------------------------
# factories


def make_plane_wave(
    spec: GridSpec,
    wavevectors: Sequence[Sequence[float]],
    amplitude: Optional[complex] = None,
    symmetrize: bool = False,
) -> WaveField:
    """Product of exp(i k_j . x_j) over slots, normalized when ``amplitude`` is omitted."""
    ks = [np.asarray(k, dtype=float) for k in wavevectors]
    if len(ks) != spec.N or any(k.shape != (spec.d,) for k in ks):
        raise SpecMismatch(f"need {spec.N} wavevectors of dimension {spec.d}")
    for k in ks:
        for slot in range(spec.N):
            for mu in range(spec.d):
                ax = spec.axis(slot, mu)
                if spec.periodic[ax]:
                    m = k[mu] * spec.lengths[ax] / (2 * math.pi)
                    if abs(m - round(m)) > 1e-9:
                        raise IncommensurateWavevector(
                            f"k_{mu} = {k[mu]} is not a multiple of 2pi/L on a box of length {spec.lengths[ax]}"
                        )
    perms = list(itertools.permutations(range(spec.N))) if symmetrize else [tuple(range(spec.N))]
    vals = np.zeros(spec.shape, dtype=complex)
    for perm in perms:
        term = np.ones(spec.shape, dtype=complex)
        for slot, j in enumerate(perm):
            phase = sum(ks[j][mu] * c for mu, c in enumerate(spec.mesh(slot)))
            term = term * np.exp(1j * phase)
        vals += term
    f = WaveField(spec, vals, symmetrized=symmetrize)
    if amplitude is None:
        n = math.sqrt(full_inner(f, f).real)
        return f.with_values(vals / n)
    return f.with_values(vals * amplitude / len(perms))


def symmetrize(field: WaveField) -> WaveField:
    if field.spec.N == 1:
        return field.with_values(field.values, symmetrized=True)
    return field.with_values(0.5 * (field.values + field.exchanged()), symmetrized=True)


def random_field(spec: GridSpec, rng: np.random.Generator, modes: int = 2, symmetric: bool = True) -> WaveField:
    """Normalized band-limited random field with |k| <= ``modes`` * 2pi/L per axis."""
    shape = spec.shape
    coef = np.zeros(shape, dtype=complex)
    idx = tuple(np.r_[0 : modes + 1, -modes:0] % n for n in shape)
    sub = rng.normal(size=[len(i) for i in idx]) + 1j * rng.normal(size=[len(i) for i in idx])
    coef[np.ix_(*idx)] = sub
    vals = np.fft.ifftn(coef)
    f = WaveField(spec, vals)
    if symmetric:
        f = symmetrize(f)
    n = math.sqrt(full_inner(f, f).real)
    return f.with_values(f.values / n)


# ---------------------------------------------------------------------------
# derivatives

_FD_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FD_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_FD_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def _spectral_wavenumbers(n: int, h: float) -> np.ndarray:
    k = 2 * math.pi * np.fft.fftfreq(n, d=h)
    if n % 2 == 0:
        k[n // 2] = 0.0
    return k


def derivative_array(values: np.ndarray, spec: GridSpec, ax: int) -> np.ndarray:
    n, h = spec.points[ax], spec.spacing(ax)
    if spec.periodic[ax]:
        k = _spectral_wavenumbers(n, h)
        shape = [1] * values.ndim
        shape[ax] = n
        return np.fft.ifft(np.fft.fft(values, axis=ax) * (1j * k.reshape(shape)), axis=ax)
    v = np.moveaxis(values, ax, 0)
    out = np.empty_like(v)
    out[2:-2] = sum(w * v[j : n - 4 + j] for j, w in enumerate(_FD_INTERIOR) if w)
    out[0] = sum(w * v[j] for j, w in enumerate(_FD_EDGE0))
    out[1] = sum(w * v[j] for j, w in enumerate(_FD_EDGE1))
    out[-1] = -sum(w * v[-1 - j] for j, w in enumerate(_FD_EDGE0))
    out[-2] = -sum(w * v[-1 - j] for j, w in enumerate(_FD_EDGE1))
    return np.moveaxis(out / h, 0, ax)


def partial_derivative(field: WaveField, slot: int, mu: int) -> WaveField:
    ax = field.spec.axis(slot, mu)
    return WaveField(field.spec, derivative_array(field.values, field.spec, ax))


def gradient(field: WaveField, slot: int) -> list:
    """[d_{slot,mu} psi for mu in 0..d-1] as raw arrays."""
    return [derivative_array(field.values, field.spec, field.spec.axis(slot, mu)) for mu in range(field.spec.d)]


# ---------------------------------------------------------------------------
# inner products


def _as_values(a) -> np.ndarray:
    return a.values if isinstance(a, WaveField) else np.asarray(a)


def _integrate(arr: np.ndarray, spec: GridSpec, axes: Sequence[int], weight: Optional[np.ndarray]) -> np.ndarray:
    out = arr
    # integrate slot by slot from the last requested axis so indices stay valid
    axes = sorted(axes)
    if weight is not None:
        d = spec.d
        for slot_start in range(0, len(axes), d):
            ax0 = axes[slot_start]
            shape = [1] * arr.ndim
            for j in range(d):
                shape[ax0 + j] = spec.points[ax0 + j]
            out = out * weight.reshape(shape)
    for ax in reversed(axes):
        out = np.tensordot(out, spec.weights(ax), axes=([ax], [0]))
    return out


def reduced_inner(A, B, spec: GridSpec, keep: int = 1, weight: Optional[np.ndarray] = None) -> np.ndarray:
    """<A|B> integrated over the first N - keep slots; ``weight`` is sqrt|g| on a slot grid."""
    if keep > spec.N or keep < 0:
        raise SpecMismatch("cannot keep more slots than the field has")
    a, b = _as_values(A), _as_values(B)
    if a.shape != spec.shape or b.shape != spec.shape:
        raise SpecMismatch("operands do not match the grid")
    axes = range(0, (spec.N - keep) * spec.d)
    return _integrate(np.conj(a) * b, spec, axes, weight)


def reduced_inner_1(A: WaveField, B: WaveField, weight: Optional[np.ndarray] = None) -> np.ndarray:
    _match(A, B)
    return reduced_inner(A, B, A.spec, 1, weight)


def full_inner(A, B, spec: Optional[GridSpec] = None, weight: Optional[np.ndarray] = None) -> complex:
    if spec is None:
        if not isinstance(A, WaveField):
            raise SpecMismatch("a grid spec is required for raw arrays")
        if isinstance(B, WaveField):
            _match(A, B)
        spec = A.spec
    return complex(reduced_inner(A, B, spec, 0, weight))


# ---------------------------------------------------------------------------
# Lagrangian terms and the dispersion expression


@dataclass(frozen=True)
class LagrangianParams:
    a: float = 0.0
    b: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise ValueError("a, b, c must be finite")

    @classmethod
    def flat_limit(cls, N: int, c: float = 1.0) -> "LagrangianParams":
        """b/c = -N and a/c = N - 1."""
        return cls(a=(N - 1) * c, b=-N * c, c=c)


def _real(value: complex, what: str) -> float:
    if abs(value.imag) > 1e-6 * max(1.0, abs(value.real)):
        raise NumericalHermiticityFailure(f"{what} has imaginary part {value.imag:.3e}")
    return float(value.real)


def _flat_spec(field: WaveField):
    if not all(field.spec.periodic):
        raise SpecMismatch("Lagrangian terms need a fully periodic grid")


def lagrangian_terms(field: WaveField, params: LagrangianParams) -> tuple:
    """(L_a, L_b, L_c) in the flat limit h = g = eta; x is slot 0 and y the last slot."""
    _flat_spec(field)
    spec = field.spec
    g = eta(spec.d)
    last = spec.N - 1
    dy = gradient(field, last)
    Lc = sum(g[m, m] * full_inner(dy[m], dy[m], spec) for m in range(spec.d))
    Lc = params.c * _real(Lc, "L_c")
    if spec.N < 2:
        return 0.0, 0.0, Lc
    dx = gradient(field, 0)
    La = sum(g[m, m] * full_inner(dx[m], dy[m], spec) for m in range(spec.d))
    La = params.a * _real(La, "L_a")
    psi = field.values
    Lb = sum(g[m, m] * full_inner(dy[m], psi, spec) * full_inner(psi, dy[m], spec) for m in range(spec.d))
    Lb = params.b * _real(Lb, "L_b")
    return La, Lb, Lc


def mp_dispersion(field: WaveField) -> float:
    """Sum over slot pairs of eta-contracted momentum covariance, normalized by <psi|psi>."""
    _flat_spec(field)
    spec = field.spec
    g = eta(spec.d)
    grads = [gradient(field, i) for i in range(spec.N)]
    psi = field.values
    nrm = full_inner(psi, psi, spec)
    mean = [[full_inner(psi, grads[i][m], spec) for m in range(spec.d)] for i in range(spec.N)]
    total = 0.0 + 0.0j
    for i in range(spec.N):
        for j in range(spec.N):
            for m in range(spec.d):
                cov = full_inner(grads[i][m], grads[j][m], spec)
                total += g[m, m] * (cov - np.conj(mean[i][m]) * mean[j][m] / nrm)
    return _real(total, "dispersion")
