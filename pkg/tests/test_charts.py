import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlqm_workbench.charts import (
    curvature_at,
    find_transition,
    get_chart,
    metric_at,
    numeric_christoffel,
    parse_chart_spec,
    transform_tensor,
    volume_density_at,
)
from nlqm_workbench.errors import ChartSpecError, NoTransition, OutOfDomain, OutOfOverlap


def test_sphere_christoffel_closed_form():
    S = get_chart("sphere2:r=1")
    th = math.pi / 4
    gam = S.christoffel(np.array([th, 0.3]))
    assert gam[0, 1, 1] == pytest.approx(-math.sin(th) * math.cos(th))
    assert gam[1, 0, 1] == pytest.approx(1 / math.tan(th))
    assert gam[1, 1, 0] == pytest.approx(1 / math.tan(th))


@pytest.mark.parametrize(
    "name, x",
    [
        ("sphere2:r=2", [1.1, 0.4]),
        ("schwarzschild:M=1", [0.0, 5.0, 1.2, 0.3]),
        ("schwarzschild-ef:M=1", [0.5, 4.0, 1.0, 0.2]),
        ("desitter:L=1", [0.0, 0.4, 1.3, 0.1]),
        ("sphere2rot:r=1,alpha=1.57079632679", [1.4, 0.7]),
    ],
)
def test_analytic_christoffels_match_metric_derivatives(name, x):
    chart = get_chart(name)
    x = np.array(x)
    assert np.allclose(chart.christoffel(x), numeric_christoffel(chart, x), atol=1e-7)


@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_sphere_scalar_curvature(r):
    S = get_chart(f"sphere2:r={r}")
    assert curvature_at(S, [1.0, 0.5]).scalar == pytest.approx(2 / r**2, rel=1e-6)


def test_schwarzschild_is_ricci_flat():
    ch = get_chart("schwarzschild:M=1")
    R = curvature_at(ch, [0.0, 6.0, 1.3, 0.2])
    assert np.max(np.abs(R.ricci)) < 1e-8
    # tidal component R^r_{trt} = 2M/r^3 (1 - 2M/r) for the static observer
    r = 6.0
    assert R.riemann[1, 0, 1, 0] == pytest.approx(-2 / r**3 * (1 - 2 / r), rel=1e-6)


def test_de_sitter_scalar_curvature():
    L = 2.0
    ch = get_chart(f"desitter:L={L}")
    assert curvature_at(ch, [0.0, 0.7, 1.2, 0.3]).scalar == pytest.approx(12 / L**2, rel=1e-6)


def test_minkowski_is_flat_and_volume_one():
    ch = get_chart("minkowski4")
    R = curvature_at(ch, [0.1, 0.2, 0.3, 0.4])
    assert np.max(np.abs(R.riemann)) == 0.0
    assert volume_density_at(ch, [0, 0, 0, 0]) == 1.0


def test_sphere_volume_density():
    assert volume_density_at(get_chart("sphere2:r=1"), [math.pi / 6, 0.0]) == pytest.approx(0.5)


def test_schwarzschild_metric_transforms_into_ingoing_chart():
    s, ef = get_chart("schwarzschild:M=1"), get_chart("schwarzschild-ef:M=1")
    x = np.array([0.3, 5.0, 1.1, 0.4])
    xp, gp = transform_tensor(s, ef, x, s.metric(x), "dd")
    assert np.allclose(gp, ef.metric(xp), atol=1e-12)


def test_vector_transform_preserves_norm():
    s, rot = get_chart("sphere2:r=1"), get_chart("sphere2rot:r=1,alpha=1.57079632679")
    x = np.array([1.2, 0.5])
    V = np.array([0.3, -0.7])
    xp, Vp = transform_tensor(s, rot, x, V, "u")
    assert Vp @ rot.metric(xp) @ Vp == pytest.approx(V @ s.metric(x) @ V, rel=1e-12)


@pytest.mark.parametrize(
    "a, b, x",
    [
        ("sphere2:r=1", "sphere2rot:r=1,alpha=1.57079632679", [1.2, 0.5]),
        ("schwarzschild:M=1", "schwarzschild-ef:M=1", [0.1, 4.5, 1.0, 0.2]),
        ("minkowski2", "minkowski2:scale=2", [0.3, -0.4]),
    ],
)
def test_transition_round_trip_and_jacobian(a, b, x):
    ca, cb = get_chart(a), get_chart(b)
    tr, back = find_transition(ca, cb), find_transition(cb, ca)
    x = np.array(x)
    assert np.allclose(ca.wrap(back.forward(tr.forward(x)) - x), 0, atol=1e-10)
    h = 1e-6
    fd = np.stack([(tr.forward(x + h * e) - tr.forward(x - h * e)) / (2 * h) for e in np.eye(len(x))], axis=1)
    assert np.allclose(tr.jacobian(x), fd, atol=1e-6)


def test_missing_transition():
    with pytest.raises(NoTransition):
        find_transition(get_chart("sphere2:r=1"), get_chart("minkowski2"))


def test_transform_outside_overlap():
    s, ef = get_chart("schwarzschild:M=1"), get_chart("schwarzschild-ef:M=1")
    with pytest.raises(OutOfOverlap):
        transform_tensor(s, ef, [0.0, 1.0, 1.0, 0.0], np.eye(4), "dd")


def test_out_of_domain_inside_horizon():
    with pytest.raises(OutOfDomain):
        metric_at(get_chart("schwarzschild:M=1"), [0.0, 1.5, 1.0, 0.0])


@pytest.mark.parametrize("spec", ["sphere2:r=-1", "sphere3", "sphere2:q=1", "", "schwarzschild:M=abc", "minkowski2:scale=nan"])
def test_bad_chart_specs(spec):
    with pytest.raises(ChartSpecError):
        get_chart(spec)


def test_parse_chart_spec():
    assert parse_chart_spec("schwarzschild:M=2") == ("schwarzschild", {"M": 2.0})


@settings(max_examples=40, deadline=None)
@given(th=st.floats(0.2, math.pi - 0.2), ph=st.floats(-3.0, 3.0), r=st.floats(0.3, 5.0))
def test_sphere_metric_properties(th, ph, r):
    S = get_chart(f"sphere2:r={r}")
    x = np.array([th, ph])
    g = S.metric(x)
    gam = S.christoffel(x)
    assert np.allclose(g, g.T)
    assert np.all(np.linalg.eigvalsh(g) > 0)
    assert np.allclose(gam, np.swapaxes(gam, 1, 2))


@settings(max_examples=30, deadline=None)
@given(r=st.floats(2.3, 30.0), th=st.floats(0.3, 2.8))
def test_schwarzschild_signature(r, th):
    g = get_chart("schwarzschild:M=1").metric(np.array([0.0, r, th, 0.0]))
    ev = np.sort(np.linalg.eigvalsh(g))
    assert ev[0] < 0 < ev[1]
