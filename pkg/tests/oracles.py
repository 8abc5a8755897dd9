"""Closed-form results for fields given as finite sums of Fourier modes.

A field is a list of (coefficient, [k_slot0, k_slot1, ...]) with every k an
integer multiple of 2pi/L.  Modes are orthogonal on the periodic box, so all
inner products reduce to sums over |C|^2.
"""

import itertools
import math

import numpy as np

from nlqm_workbench.wavefield import GridSpec, WaveField


def eta(d):
    return np.diag([-1.0] + [1.0] * (d - 1))


def random_modes(rng, N, d, L, count=3, kmax=2, symmetric=True):
    base = 2 * math.pi / L
    modes = {}
    while len(modes) < count:
        ks = tuple(tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=d)) for _ in range(N))
        if ks in modes:
            continue
        modes[ks] = complex(rng.normal(), rng.normal())
    if symmetric:
        sym = {}
        for ks, c in modes.items():
            perms = set(itertools.permutations(ks))
            for p in perms:
                sym[p] = sym.get(p, 0) + c / len(perms)
        modes = sym
    out = [(c, [np.array(k, float) * base for k in ks]) for ks, c in modes.items()]
    vol = L ** (N * d)
    nrm = math.sqrt(vol * sum(abs(c) ** 2 for c, _ in out))
    return [(c / nrm, ks) for c, ks in out]


def grid_values(modes, spec: GridSpec):
    vals = np.zeros(spec.shape, dtype=complex)
    for c, ks in modes:
        term = np.full(spec.shape, c, dtype=complex)
        for slot, k in enumerate(ks):
            phase = sum(k[m] * x for m, x in enumerate(spec.mesh(slot)))
            term = term * np.exp(1j * phase)
        vals += term
    return vals


def to_field(modes, spec):
    return WaveField(spec, grid_values(modes, spec))


def _weights(modes, vol):
    return np.array([vol * abs(c) ** 2 for c, _ in modes])


def lagrangian(modes, N, d, L, a, b, c):
    vol = L ** (N * d)
    w = _weights(modes, vol)
    g = eta(d)
    K = [np.array([ks[i] for _, ks in modes]) for i in range(N)]
    last = N - 1
    Lc = c * np.sum(w * np.einsum("nm,mm,nm->n", K[last], g, K[last]))
    if N == 1:
        return 0.0, 0.0, Lc
    La = a * np.sum(w * np.einsum("nm,mm,nm->n", K[0], g, K[last]))
    mean = w @ K[last]
    Lb = b * mean @ g @ mean
    return La, Lb, Lc


def dispersion(modes, N, d, L):
    vol = L ** (N * d)
    w = _weights(modes, vol)
    g = eta(d)
    K = [np.array([ks[i] for _, ks in modes]) for i in range(N)]
    total = 0.0
    for i in range(N):
        for j in range(N):
            cov = np.sum(w * np.einsum("nm,mm,nm->n", K[i], g, K[j]))
            total += cov - (w @ K[i]) @ g @ (w @ K[j]) / w.sum()
    return total


def operator_modes(modes, N, d, L, a, b, c):
    """Coefficients of (D_a + D_b + D_c) psi for the unsymmetrized operators."""
    vol = L ** (N * d)
    w = _weights(modes, vol)
    g = eta(d)
    K = [np.array([ks[i] for _, ks in modes]) for i in range(N)]
    out = []
    M = [w @ K[i] for i in range(N)]
    for n, (coef, ks) in enumerate(modes):
        f = -c * sum(K[i][n] @ g @ K[i][n] for i in range(N))
        if N == 2:
            f += -a * (K[0][n] @ g @ K[1][n])
            f += b * (M[1] @ g @ K[0][n] - M[0] @ g @ K[1][n])
        out.append((coef * f, ks))
    return out
