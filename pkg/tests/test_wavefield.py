import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dispersion, lagrangian, random_modes, to_field
from nlqm_workbench.errors import IncommensurateWavevector, NumericalHermiticityFailure, SpecMismatch
from nlqm_workbench.wavefield import (
    GridSpec,
    LagrangianParams,
    WaveField,
    _real,
    derivative_array,
    full_inner,
    lagrangian_terms,
    make_plane_wave,
    mp_dispersion,
    partial_derivative,
    random_field,
    reduced_inner,
    symmetrize,
)

L = 2 * math.pi


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(N=3, d=2, points=8, lengths=L),
        dict(N=1, d=3, points=8, lengths=L),
        dict(N=1, d=2, points=12, lengths=L),
        dict(N=1, d=2, points=(4, 8), lengths=L, periodic=(False, True)),
        dict(N=1, d=2, points=8, lengths=-1.0),
        dict(N=2, d=4, points=32, lengths=L),
    ],
)
def test_grid_spec_rejects_bad_input(kwargs):
    with pytest.raises(SpecMismatch):
        GridSpec(**kwargs)


def test_plane_wave_derivative_is_exact():
    spec = GridSpec.uniform(1, 2, 16, L)
    k = [3.0, -2.0]
    f = make_plane_wave(spec, [k])
    for mu in range(2):
        assert np.allclose(partial_derivative(f, 0, mu).values, 1j * k[mu] * f.values, atol=1e-12)


def test_incommensurate_wavevector():
    with pytest.raises(IncommensurateWavevector):
        make_plane_wave(GridSpec.uniform(1, 2, 16, L), [[0.5, 1.0]])


def test_finite_difference_axis_is_fourth_order():
    errs = []
    for n in (33, 65, 129):
        spec = GridSpec(1, 2, (n, 8), (1.0, L), (False, True))
        t = spec.coords(0)[:, None] * np.ones((1, 8))
        d = derivative_array(np.exp(np.sin(3 * t)), spec, 0)
        errs.append(np.max(np.abs(d - 3 * np.cos(3 * t) * np.exp(np.sin(3 * t)))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 3.5)


def test_normalized_plane_wave_and_reduced_inner():
    spec = GridSpec.uniform(2, 2, 8, L)
    f = make_plane_wave(spec, [[1, 0], [0, 2]])
    assert full_inner(f, f).real == pytest.approx(1.0)
    red = reduced_inner(f, f, spec, 1)
    assert red.shape == (8, 8)
    assert np.allclose(red, 1 / L**2)


def test_trapezoid_weights_on_open_axis():
    spec = GridSpec(1, 2, (33, 8), (2.0, L), (False, True))
    f = WaveField(spec, np.ones(spec.shape))
    assert full_inner(f, f).real == pytest.approx(2.0 * L)


def test_symmetrize_and_exchange():
    spec = GridSpec.uniform(2, 2, 8, L)
    f = random_field(spec, np.random.default_rng(1), symmetric=False)
    assert f.exchange_defect() > 1e-3
    s = symmetrize(f)
    assert s.exchange_defect() < 1e-15
    assert s.symmetrized


def test_binary_round_trip():
    spec = GridSpec.uniform(2, 2, 8, L)
    f = random_field(spec, np.random.default_rng(2))
    g = WaveField.from_bytes(f.to_bytes())
    assert g.spec.points == spec.points and np.array_equal(g.values, f.values)
    with pytest.raises(SpecMismatch):
        WaveField.from_bytes(f.to_bytes()[:-8])


def test_slice_csv():
    spec = GridSpec.uniform(1, 2, 4, L)
    text = make_plane_wave(spec, [[0, 1]], amplitude=1.0).slice_csv(1)
    lines = text.strip().splitlines()
    assert lines[0] == "coord,re,im" and len(lines) == 5
    assert lines[2].split(",")[1].startswith("6.1")  # cos(pi/2) ~ 6e-17


@pytest.mark.parametrize("seed", range(4))
def test_lagrangian_terms_match_mode_sums(seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec.uniform(2, 2, 8, L)
    modes = random_modes(rng, 2, 2, L)
    p = LagrangianParams(0.7, -1.1, 0.9)
    got = lagrangian_terms(to_field(modes, spec), p)
    assert np.allclose(got, lagrangian(modes, 2, 2, L, p.a, p.b, p.c), atol=1e-12)
    assert mp_dispersion(to_field(modes, spec)) == pytest.approx(dispersion(modes, 2, 2, L), abs=1e-12)


def test_plane_wave_terms():
    spec = GridSpec.uniform(2, 2, 8, L)
    k, l = np.array([1.0, 2.0]), np.array([2.0, 1.0])
    f = make_plane_wave(spec, [k, l])
    eta = np.diag([-1.0, 1.0])
    La, Lb, Lc = lagrangian_terms(f, LagrangianParams(1, 1, 1))
    assert La == pytest.approx(k @ eta @ l)
    assert Lb == pytest.approx(l @ eta @ l)
    assert Lc == pytest.approx(l @ eta @ l)
    assert mp_dispersion(f) == pytest.approx(0.0, abs=1e-12)


def test_single_slot_has_only_c_term():
    f = make_plane_wave(GridSpec.uniform(1, 2, 8, L), [[1.0, 3.0]])
    La, Lb, Lc = lagrangian_terms(f, LagrangianParams(1, 1, 2))
    assert (La, Lb) == (0.0, 0.0) and Lc == pytest.approx(2 * 8.0)


def test_hermiticity_guard():
    assert _real(2.0 + 1e-9j, "x") == 2.0
    with pytest.raises(NumericalHermiticityFailure):
        _real(2.0 + 1e-3j, "x")


def test_flat_limit_ratios():
    p = LagrangianParams.flat_limit(2, 1.5)
    assert (p.a, p.b, p.c) == (1.5, -3.0, 1.5)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.1, 5.0))
def test_reassembly_constant_is_c_over_n(seed, c):
    rng = np.random.default_rng(seed)
    modes = random_modes(rng, 2, 2, L, count=3)
    disp = dispersion(modes, 2, 2, L)
    if abs(disp) < 1e-6:
        return
    f = to_field(modes, GridSpec.uniform(2, 2, 8, L))
    total = sum(lagrangian_terms(f, LagrangianParams.flat_limit(2, c)))
    assert total / mp_dispersion(f) == pytest.approx(c / 2, rel=1e-9)
