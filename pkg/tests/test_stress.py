import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlqm_workbench.charts import get_chart
from nlqm_workbench.dynamics import evolve_n1_flat
from nlqm_workbench.stress import (
    StressField,
    I_a,
    I_b,
    I_c,
    audit_conditions,
    classify,
    divergence_T,
    observer_density,
    orthonormal_frame,
    sample_observers,
    sec_margin_field,
    stress_c,
    stress_total_flat,
)
from nlqm_workbench.wavefield import GridSpec, LagrangianParams, eta, make_plane_wave, random_field

L = 2 * math.pi
C_ONLY = LagrangianParams(0.0, 0.0, 1.0)


def test_null_plane_wave_stress():
    k = np.array([2.0, 2.0])
    f = make_plane_wave(GridSpec.uniform(1, 2, 16, L), [k])
    st_ = stress_c(f, LagrangianParams(0, 0, 1.5))
    assert np.allclose(st_.T, 1.5 * np.outer(k, k) / L**2, atol=1e-13)
    assert np.max(np.abs(st_.trace())) < 1e-13
    assert np.max(np.abs(divergence_T(st_))) < 1e-7


def test_timelike_plane_wave_stress():
    k = np.array([3.0, 1.0])
    f = make_plane_wave(GridSpec.uniform(1, 2, 16, L), [k], amplitude=1.0)
    g = eta(2)
    kk = k @ g @ k
    T = stress_c(f, C_ONLY).T[3, 5]
    assert np.allclose(T, np.outer(k, k) - 0.5 * g * kk)


def test_pair_integrals_on_a_plane_wave_product():
    spec = GridSpec.uniform(2, 2, 8, L)
    k, l = np.array([1.0, 2.0]), np.array([2.0, -1.0])
    f = make_plane_wave(spec, [k, l])
    g = eta(2)
    p = LagrangianParams(0.7, -1.2, 0.9)
    assert np.allclose(I_a(f, p), 2 * p.a * (k @ g @ l) / L**2)
    assert np.allclose(I_b(f, p), 4 * p.b * (l @ g @ l) / L**2)
    assert np.allclose(I_c(f, p), p.c * (l @ g @ l) / L**2)


def test_single_slot_has_no_pair_integral():
    f = make_plane_wave(GridSpec.uniform(1, 2, 8, L), [[1.0, 2.0]])
    assert np.all(I_c(f, C_ONLY) == 0)


def _null_products():
    spec = GridSpec.uniform(2, 2, 16, L)
    return (
        make_plane_wave(spec, [[1, 1], [2, -2]], symmetrize=True)
        + make_plane_wave(spec, [[3, 3], [1, -1]], symmetrize=True) * (0.5 - 0.3j)
    )


def test_I_c_vanishes_when_each_argument_solves_the_wave_equation():
    assert np.max(np.abs(I_c(_null_products(), C_ONLY))) < 1e-7


def test_I_c_does_not_vanish_in_general():
    f = random_field(GridSpec.uniform(2, 2, 8, L), np.random.default_rng(0))
    assert np.max(np.abs(I_c(f, C_ONLY))) > 1e-3


def test_I_a_vanishes_on_orthogonal_products():
    spec = GridSpec.uniform(2, 2, 16, L)
    # k.l = 0 with eta: (1,1).(2,2) and (2,1).(1,2)
    f = make_plane_wave(spec, [[1, 1], [2, 2]], symmetrize=True) + make_plane_wave(spec, [[2, 1], [1, 2]], symmetrize=True)
    assert np.max(np.abs(I_a(f, LagrangianParams(1.0, 0.0, 0.0)))) < 1e-7


def test_total_stress_is_symmetric():
    f = random_field(GridSpec.uniform(2, 2, 8, L), np.random.default_rng(3))
    T = stress_total_flat(f, LagrangianParams.flat_limit(2, 1.0))
    assert T.symmetry_defect() == 0.0
    assert set(T.I) == {"I_a", "I_b", "I_c"}


@pytest.mark.parametrize("d", [2, 4])
def test_observers_are_unit_future_timelike(d):
    g = eta(d)
    W = sample_observers(g, 200, seed=1)
    assert np.allclose(np.einsum("na,ab,nb->n", W, g, W), -1.0, atol=1e-10)
    assert np.all(W[:, 0] > 0)
    assert np.max(np.arccosh(W[:, 0])) <= 3.0 + 1e-12


def test_orthonormal_frame_in_schwarzschild():
    g = get_chart("schwarzschild:M=1").metric(np.array([0.0, 6.0, 1.2, 0.0]))
    e = orthonormal_frame(g)
    assert np.allclose(e @ g @ e.T, eta(4), atol=1e-12)


def test_sampling_is_reproducible():
    assert np.array_equal(sample_observers(eta(4), 5, seed=9), sample_observers(eta(4), 5, seed=9))


def _point_stress(T, d=4):
    spec = GridSpec.uniform(1, 2, 4, L) if d == 2 else GridSpec.uniform(1, 4, 4, L)
    shape = spec.shape + (d, d)
    return StressField(spec, np.broadcast_to(T, shape).copy(), np.broadcast_to(eta(d), shape).copy())


def test_dust_passes_and_superluminal_flux_fails():
    T = np.zeros((4, 4))
    T[0, 0] = 1.0
    verdicts = {r.condition: r.verdict for r in audit_conditions(_point_stress(T))}
    assert verdicts == {"WEC": "pass", "DEC": "pass", "SEC": "pass"}
    T[0, 1] = T[1, 0] = -2.0  # T^{01} = 2 with eta raising
    dec = audit_conditions(_point_stress(T), ["DEC"])[0]
    assert dec.verdict == "fail"


def test_negative_energy_fails_weak_condition():
    T = np.diag([-1.0, 0.0, 0.0, 0.0])
    assert audit_conditions(_point_stress(T), ["WEC"])[0].verdict == "fail"


def test_verdict_bands():
    assert classify(0.0) == "pass"
    assert classify(-5e-9) == "pass"
    assert classify(-5e-8) == "indeterminate"
    assert classify(-1e-6) == "fail"


@pytest.mark.parametrize("seed", range(3))
def test_sec_margin_is_observer_density_in_four_dimensions(seed):
    f = random_field(GridSpec.uniform(1, 4, 8, L), np.random.default_rng(seed))
    st_ = stress_c(f, C_ONLY)
    for W in sample_observers(eta(4), 10, seed=seed):
        gap = sec_margin_field(st_, W) - observer_density(f, W, C_ONLY)
        assert np.max(np.abs(gap)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(m=st.integers(-3, 3), n=st.integers(1, 3), amp=st.floats(0.1, 2.0))
def test_sec_margin_for_null_fields_in_two_dimensions(m, n, amp):
    spec = GridSpec.uniform(1, 2, 16, L)
    f = make_plane_wave(spec, [[n, n]], amplitude=amp) + make_plane_wave(spec, [[abs(m), abs(m)]], amplitude=0.5)
    st_ = stress_c(f, C_ONLY)
    for W in sample_observers(eta(2), 5, seed=n):
        assert np.max(np.abs(sec_margin_field(st_, W) - observer_density(f, W, C_ONLY))) < 1e-8


def test_minkowski_chart_reproduces_flat_stress():
    f = random_field(GridSpec.uniform(2, 2, 8, L), np.random.default_rng(2))
    a, b = stress_c(f, C_ONLY), stress_c(f, C_ONLY, get_chart("minkowski2"))
    assert np.allclose(a.T, b.T, atol=1e-14)
    assert np.allclose(divergence_T(a), divergence_T(b), atol=1e-12)


def _packet_divergence(n):
    dx = L / n
    dt = dx / 2
    x = np.arange(n) * dx
    f = np.exp(np.cos(x))
    F = evolve_n1_flat(f, np.sin(x) * f, L, int(round(1.0 / dt)), dt)
    return np.max(np.abs(divergence_T(stress_c(F, C_ONLY))))


def test_conservation_converges_on_an_evolved_packet():
    e1, e2 = _packet_divergence(64), _packet_divergence(128)
    assert math.log2(e1 / e2) >= 1.8
