import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinetic_pg.mesh import gauss_rule, make_uniform_mesh, tensor_elements, tensor_rule


def test_uniform_mesh_examples():
    m = make_uniform_mesh(0.0, 1.0, 16)
    assert m.h == pytest.approx(1 / 16)
    assert m.n_nodes == 17
    p = make_uniform_mesh(0.0, 2 * np.pi, 4, periodic=True)
    assert p.h == pytest.approx(np.pi / 2)
    assert p.n_nodes == 4
    assert make_uniform_mesh(0.0, 0.75, 16).h == pytest.approx(0.046875)


@pytest.mark.parametrize("args", [(0.0, 1.0, 0), (0.0, 1.0, -2), (1.0, 1.0, 4), (2.0, 1.0, 4)])
def test_uniform_mesh_rejects_bad_input(args):
    with pytest.raises(ValueError):
        make_uniform_mesh(*args)


def test_gauss_rule_examples():
    r1 = gauss_rule(1)
    np.testing.assert_allclose(r1.points, [0.0], atol=1e-15)
    np.testing.assert_allclose(r1.weights, [2.0])
    r2 = gauss_rule(2)
    np.testing.assert_allclose(np.sort(r2.points), [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    np.testing.assert_allclose(r2.weights, [1.0, 1.0])
    r3 = gauss_rule(3)
    order = np.argsort(r3.points)
    np.testing.assert_allclose(r3.points[order], [-np.sqrt(0.6), 0.0, np.sqrt(0.6)], atol=1e-15)
    np.testing.assert_allclose(r3.weights[order], [5 / 9, 8 / 9, 5 / 9], atol=1e-15)


@pytest.mark.parametrize("n", [0, 11])
def test_gauss_rule_rejects_unsupported_counts(n):
    with pytest.raises(ValueError):
        gauss_rule(n)


@pytest.mark.parametrize("n", range(1, 11))
def test_gauss_rule_exactness(n):
    rule = gauss_rule(n)
    assert rule.weights.sum() == pytest.approx(2.0, abs=1e-14)
    for k in range(2 * n):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.dot(rule.weights, rule.points**k) == pytest.approx(exact, abs=1e-13)


def test_tensor_rule_order_and_weights():
    pts, wts = tensor_rule(gauss_rule(2), 3)
    assert pts.shape == (8, 3)
    assert wts.sum() == pytest.approx(8.0)
    # last axis fastest
    assert pts[0, 2] != pts[1, 2] and pts[0, 0] == pts[1, 0]


@given(st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_tensor_traversal_visits_each_element_once(cells):
    meshes = [make_uniform_mesh(0.0, 1.0, n) for n in cells]
    els = tensor_elements(meshes)
    assert len(els) == np.prod(cells)
    assert len({tuple(e) for e in els}) == len(els)
