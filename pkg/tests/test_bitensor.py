import math

import numpy as np
import pytest

from nlqm_workbench.bitensor import (
    bitensor_embedding,
    bitensor_geodesic,
    embedding_for,
    validate_bitensor_axioms,
)
from nlqm_workbench.charts import get_chart
from nlqm_workbench.errors import ExceptionalPair, UnsupportedGeometry
from nlqm_workbench.sampling import antipode

S2 = get_chart("sphere2:r=1")
QUARTER = (np.array([math.pi / 2, 0.0]), np.array([math.pi / 2, math.pi / 2]))


@pytest.mark.parametrize("name, x", [("sphere2:r=1", [1.1, 0.3]), ("schwarzschild:M=1", [0.0, 9.0, 1.4, 0.2])])
def test_coincidence_gives_metric(name, x):
    ch = get_chart(name)
    h = bitensor_geodesic(ch, x, x)
    assert np.allclose(h.covariant, ch.metric(np.array(x)), atol=1e-12)


def test_quarter_equator_values():
    # both equatorial arcs carry d_theta and d_phi into themselves
    hg = bitensor_geodesic(S2, *QUARTER).covariant
    assert np.allclose(hg, np.eye(2), atol=1e-8)
    # ambient tangents: d_phi(0) = e_y is orthogonal to d_phi(pi/2) = -e_x
    he = bitensor_embedding(embedding_for(S2), *QUARTER).covariant
    assert np.allclose(he, np.diag([1.0, 0.0]), atol=1e-12)


def test_flat_constructions_agree_with_eta():
    ch = get_chart("minkowski4")
    x, y = np.zeros(4), np.array([0.4, 1.0, -0.3, 0.2])
    eta = np.diag([-1.0, 1, 1, 1])
    assert np.allclose(bitensor_geodesic(ch, x, y).covariant, eta, atol=1e-10)
    assert np.allclose(bitensor_embedding(embedding_for(ch), x, y).covariant, eta)


def test_raised_form_inverts_metrics():
    x, y = np.array([1.2, 0.1]), np.array([1.6, 1.0])
    h = bitensor_geodesic(S2, x, y)
    expected = np.linalg.inv(S2.metric(x)) @ h.covariant @ np.linalg.inv(S2.metric(y)).T
    assert np.allclose(h.contravariant, expected)
    assert h.n == 2


def test_exchange_symmetry_and_halves():
    x, y = np.array([1.2, 0.1]), np.array([1.6, 1.0])
    hxy, hyx = bitensor_geodesic(S2, x, y), bitensor_geodesic(S2, y, x)
    assert np.allclose(hxy.covariant, hyx.covariant.T, atol=1e-8)
    assert hxy.halves_gap < 2e-7


def test_antipodal_pair_is_excluded():
    x = np.array([1.0, 0.4])
    with pytest.raises(ExceptionalPair):
        bitensor_geodesic(S2, x, antipode(S2, x))


def test_no_embedding_for_schwarzschild():
    with pytest.raises(UnsupportedGeometry):
        embedding_for(get_chart("schwarzschild:M=1"))


@pytest.mark.parametrize("name", ["sphere2:r=1", "sphere2rot:r=1,alpha=1.57079632679", "minkowski2"])
def test_embedding_induces_metric(name):
    ch = get_chart(name)
    emb = embedding_for(ch)
    x = np.array([1.1, 0.4])
    assert np.allclose(emb.induced_metric(x), ch.metric(x), atol=1e-12)


@pytest.mark.parametrize("construction", ["geodesic-average", "embedding"])
def test_axioms_on_a_small_sphere_sample(construction):
    rep = validate_bitensor_axioms(construction, S2, sample=5, seed=3)
    assert rep.ok, rep.passed
    assert not rep.exceptional
