import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlqm_workbench.charts import get_chart
from nlqm_workbench.errors import MismatchedBase
from nlqm_workbench.geodesics import connect, integrate_geodesic, trivial_geodesic
from nlqm_workbench.scenarios import random_geodesic
from nlqm_workbench.transport import (
    holonomy,
    isometry_defect,
    propagator,
    transport_residual,
    transport_vector,
)

S2 = get_chart("sphere2:r=1")
CHARTS = ["minkowski2", "minkowski4", "sphere2:r=1", "sphere2rot:r=1,alpha=1.57079632679",
          "schwarzschild:M=1", "schwarzschild-ef:M=1", "desitter:L=1"]


def _unit(x):
    th, ph = x
    return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def test_flat_propagator_is_identity():
    ch = get_chart("minkowski4")
    g = connect(ch, np.zeros(4), [1.0, 2.0, 0.0, -1.0]).geodesics[0]
    assert np.allclose(propagator(g).matrix, np.eye(4), atol=1e-13)


def test_equator_keeps_coordinate_basis():
    g = integrate_geodesic(S2, [math.pi / 2, 0.0], [0.0, 1.3])
    assert np.allclose(propagator(g).matrix, np.eye(2), atol=1e-10)


def test_tangent_is_transported_into_tangent():
    g = connect(S2, [1.2, 0.1], [1.6, 1.0]).geodesics[0]
    assert np.allclose(transport_vector(g, g.v[0]), g.v[-1], atol=1e-9)


def test_holonomy_equals_enclosed_area():
    pts = [np.array(p) for p in ([1.2, 0.1], [1.6, 1.0], [1.9, 0.2])]
    legs = []
    for a, b in zip(pts, pts[1:] + pts[:1]):
        bundle = connect(S2, a, b)
        legs.append(min(bundle.geodesics, key=lambda g: g.arc_length))
    M = holonomy(legs)
    th = pts[0][0]
    E = np.diag([1.0, math.sin(th)])  # orthonormal components
    R = E @ M @ np.linalg.inv(E)
    angle = abs(math.atan2(R[1, 0], R[0, 0]))
    a, b, c = (_unit(p) for p in pts)
    excess = 2 * math.atan(abs(a @ np.cross(b, c)) / (1 + a @ b + b @ c + c @ a))
    assert angle == pytest.approx(excess, abs=1e-8)


def test_fourth_order_convergence():
    ch = get_chart("schwarzschild:M=1")
    x, v = [0.0, 8.0, 1.3, 0.1], [1.5, 0.4, 0.05, 0.08]
    ref = propagator(integrate_geodesic(ch, x, v, 2.0, steps=2048)).matrix
    errs = [np.max(np.abs(propagator(integrate_geodesic(ch, x, v, 2.0, steps=n)).matrix - ref)) for n in (16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 3.5)


def test_mismatched_base():
    g = connect(S2, [1.2, 0.1], [1.6, 1.0]).geodesics[0]
    with pytest.raises(MismatchedBase):
        transport_vector(g, [1.0, 0.0], base=[1.0, 0.0])


def test_trivial_geodesic_has_identity_propagator():
    assert np.allclose(propagator(trivial_geodesic(S2, [1.0, 0.2])).matrix, np.eye(2))


@pytest.mark.parametrize("name", CHARTS)
def test_transport_equation_and_isometry(name):
    ch = get_chart(name)
    rng = np.random.default_rng(7)
    for _ in range(4):
        g = random_geodesic(ch, rng)
        X, Y = rng.normal(size=(2, ch.dim))
        assert isometry_defect(g, X, Y) < 1e-7 * max(1.0, abs(X @ ch.metric(g.start) @ Y))
        assert transport_residual(g, X) < 1e-5 * max(1.0, np.max(np.abs(X)))


@settings(max_examples=15, deadline=None)
@given(th=st.floats(0.6, 2.5), ph=st.floats(-1, 1), a=st.floats(-1, 1), b=st.floats(-1, 1))
def test_sphere_transport_is_isometric(th, ph, a, b):
    v = np.array([a, b])
    if np.linalg.norm(v) < 1e-3:
        v = np.array([0.0, 0.5])
    g = integrate_geodesic(S2, [th, ph], 0.5 * v)
    X, Y = np.array([1.0, 0.3]), np.array([-0.2, 0.7])
    assert isometry_defect(g, X, Y) < 1e-9
