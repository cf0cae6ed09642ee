import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinetic_pg.mesh import gauss_rule, make_uniform_mesh, tensor_rule
from kinetic_pg.spacetime import build_q2_space, eval_basis_and_gradient, lagrange_q2, reference_basis


def box(*cells):
    return build_q2_space([make_uniform_mesh(0.0, 1.0, n) for n in cells])


def test_counts():
    s = box(4, 4)
    assert s.n_dofs == 81 and s.n_elements == 16
    assert box(16, 16, 16).n_dofs == 35937


def test_first_element_maps_to_low_corner_block():
    s = box(16, 16, 16)
    conn = s.connectivity[0]
    expected = [np.ravel_multi_index(m, s.shape) for m in itertools.product(range(3), repeat=3)]
    np.testing.assert_array_equal(conn, expected)
    assert len(conn) == 27


def test_rejects_bad_axes():
    with pytest.raises(ValueError):
        build_q2_space([make_uniform_mesh(0.0, 1.0, 2), make_uniform_mesh(0.0, 2 * np.pi, 4, periodic=True)])
    with pytest.raises(ValueError):
        build_q2_space([make_uniform_mesh(0.0, 1.0, 2)])
    with pytest.raises(ValueError):
        eval_basis_and_gradient(box(2, 2), 4, [0.0, 0.0])


def test_lagrange_weights_at_half():
    np.testing.assert_allclose(lagrange_q2(np.array([0.5]))[0], [-0.125, 0.75, 0.375], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_partition_of_unity(ref):
    s = box(3, 2, 5)
    vals, grads = eval_basis_and_gradient(s, 7, ref)
    assert vals.sum() == pytest.approx(1.0, abs=1e-13)
    np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-11)


def test_nodal_property():
    s = box(2, 3)
    for loc, multi in enumerate(itertools.product([-1.0, 0.0, 1.0], repeat=2)):
        vals, _ = eval_basis_and_gradient(s, 3, multi)
        expected = np.zeros(9)
        expected[loc] = 1.0
        np.testing.assert_allclose(vals, expected, atol=1e-14)


def test_gradient_consistency_with_finite_differences():
    s = box(3, 4)
    ref = np.array([0.3, -0.2])
    _, grads = eval_basis_and_gradient(s, 5, ref)
    errs = []
    for step in (1e-3, 1e-4):
        fd = np.zeros_like(grads)
        for a in range(2):
            e = np.zeros(2)
            e[a] = step
            vp, _ = eval_basis_and_gradient(s, 5, ref + e)
            vm, _ = eval_basis_and_gradient(s, 5, ref - e)
            fd[:, a] = (vp - vm) / (2 * step) * 2.0 / s.h[a]
        errs.append(np.abs(fd - grads).max())
    # quadratics in each direction: central differences are exact up to roundoff
    assert max(errs) < 1e-6


def test_interpolation_exactness():
    s = build_q2_space([make_uniform_mesh(0.0, 0.75, 3), make_uniform_mesh(0.0, 1.0, 2), make_uniform_mesh(0.0, 1.0, 2)])
    f = lambda x: 1 + x[..., 0] ** 2 * x[..., 1] - 3 * x[..., 1] * x[..., 2] ** 2 + x[..., 0] * x[..., 1] * x[..., 2]
    coeffs = f(s.dof_coords())
    pts, wts = tensor_rule(gauss_rule(4), 3)
    vals, _ = reference_basis(pts, s.h)
    phys = s.all_points(pts)
    interp = np.einsum("qk,ek->eq", vals, coeffs[s.connectivity])
    err2 = np.sum((interp - f(phys)) ** 2 * wts * np.prod(0.5 * s.h))
    assert np.sqrt(err2) <= 1e-12


@pytest.mark.parametrize("cells", [(2, 3), (4, 1, 3)])
def test_boundary_face_counts(cells):
    s = box(*cells)
    bnd = s.boundary
    for a in range(s.dim):
        others = np.prod([2 * n + 1 for k, n in enumerate(cells) if k != a])
        assert bnd.on_low[a].sum() == others
        assert bnd.on_high[a].sum() == others
    interior = np.ravel_multi_index(tuple(np.array(s.shape) // 2), s.shape)
    assert bnd.faces(int(interior)) == []
    assert len(bnd.faces(0)) == s.dim
