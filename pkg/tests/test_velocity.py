import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinetic_pg.mesh import make_uniform_mesh
from kinetic_pg.problems import ProblemSpec
from kinetic_pg.velocity import assemble_velocity_matrices, compute_lifted_basis, make_velocity_form, velocity_space

from oracles import hat, velocity_quadrature


@pytest.mark.parametrize("n_v", [3, 4, 8, 17])
def test_mass_and_stiffness_entries(n_v):
    vs = velocity_space(n_v)
    h = 2 * np.pi / n_v
    assert np.diag(vs.M) == pytest.approx(np.full(n_v, 2 * h / 3))
    assert vs.M[0, 1] == pytest.approx(h / 6) and vs.M[0, n_v - 1] == pytest.approx(h / 6)
    assert np.diag(vs.K) == pytest.approx(np.full(n_v, 2 / h))
    assert vs.K[0, 1] == pytest.approx(-1 / h)
    np.testing.assert_allclose(vs.K @ np.ones(n_v), 0.0, atol=1e-12)
    np.testing.assert_allclose(vs.M @ np.ones(n_v), h, rtol=1e-13)
    for A in (vs.M, vs.K, vs.A_V):
        assert np.max(np.abs(A - A.T)) <= 1e-14
    assert np.all(np.linalg.eigvalsh(vs.M) > 0)
    assert np.min(np.linalg.eigvalsh(vs.K)) > -1e-12


@pytest.mark.parametrize("n_v", [4, 8, 16])
def test_weighted_masses_match_quadrature_oracle(n_v):
    vs = velocity_space(n_v)
    phi, w = velocity_quadrature(n_v, 12)
    psi = np.array([hat(n_v, j, phi) for j in range(n_v)])
    np.testing.assert_allclose(vs.M_cos, (psi * w * np.cos(phi)) @ psi.T, atol=1e-12)
    np.testing.assert_allclose(vs.M_sin, (psi * w * np.sin(phi)) @ psi.T, atol=1e-12)


def test_rejects_degenerate_meshes():
    with pytest.raises(ValueError):
        velocity_space(2)
    with pytest.raises(ValueError):
        assemble_velocity_matrices(make_uniform_mesh(0.0, 2 * np.pi, 8, periodic=False))
    with pytest.raises(ValueError):
        assemble_velocity_matrices(make_uniform_mesh(0.0, 1.0, 8, periodic=True))


def test_velocity_forms():
    vs = velocity_space(8)
    f = make_velocity_form(vs, ProblemSpec.stationary(c=0.1, d=0.1, n_x=2, n_v=8))
    np.testing.assert_allclose(f.A, 0.1 * vs.A_V, atol=1e-15)
    f = make_velocity_form(vs, ProblemSpec.time_dependent(0.8, 2, n_v=8))
    np.testing.assert_allclose(f.A, 0.8 * vs.A_V, atol=1e-15)
    assert f.alpha == 0.8
    f = make_velocity_form(vs, ProblemSpec.stationary(c=1.0, d=0.4, n_x=2, n_v=8))
    np.testing.assert_allclose(f.A, 0.4 * vs.K + vs.M, atol=1e-15)
    assert f.alpha == 0.4 and f.continuity == 1.0


@settings(max_examples=25, deadline=None)
@given(c=st.floats(0.05, 5.0), d=st.floats(0.05, 5.0), n_v=st.integers(3, 24))
def test_coercivity_witness(c, d, n_v):
    vs = velocity_space(n_v)
    f = make_velocity_form(vs, ProblemSpec.stationary(c=c, d=d, n_x=1, n_v=n_v))
    x = np.random.default_rng(n_v).standard_normal((n_v, 100))
    lhs = np.einsum("ik,ij,jk->k", x, f.A, x)
    rhs = min(c, d) * np.einsum("ik,ij,jk->k", x, vs.A_V, x)
    assert np.all(lhs >= rhs - 1e-12 * np.maximum(1.0, np.abs(rhs)))


@pytest.mark.parametrize("problem", [
    ProblemSpec.stationary(c=1.0, d=0.4, n_x=2, n_v=12),
    ProblemSpec.stationary(c=0.1, d=0.1, n_x=2, n_v=5),
    ProblemSpec.time_dependent(0.4, 2, n_v=9),
])
def test_lift_residuals_and_identities(problem):
    vs = velocity_space(problem.n_v)
    form = make_velocity_form(vs, problem)
    lifts = compute_lifted_basis(vs, form)
    for rho, rhs in ((lifts.rho_one, vs.M), (lifts.rho_v1, vs.M_cos), (lifts.rho_v2, vs.M_sin)):
        res = np.linalg.norm(form.A @ rho - rhs, axis=0) / np.linalg.norm(rhs, axis=0)
        assert res.max() <= 1e-12
    total = lifts.rho_one.sum(axis=1)
    expected = 1 / problem.q_inv if problem.is_time_dependent else 1 / problem.c
    np.testing.assert_allclose(total, expected, rtol=1e-12)


def test_lift_matches_dense_solve_oracle():
    vs = velocity_space(4)
    form = make_velocity_form(vs, ProblemSpec.time_dependent(1.0, 1, n_v=4))
    np.testing.assert_allclose(form.A, vs.A_V, atol=1e-15)
    lifts = compute_lifted_basis(vs, form)
    oracle = np.linalg.solve(vs.A_V, vs.M_cos[:, 0])
    np.testing.assert_allclose(lifts.rho_v1[:, 0], oracle, rtol=1e-12, atol=1e-14)


def test_eval_matrices_reproduce_mass_and_stiffness():
    vs = velocity_space(10)
    _, w, E, dE = vs.eval_matrices(5)
    np.testing.assert_allclose((E.T * w) @ E, vs.M, atol=1e-14)
    np.testing.assert_allclose((dE.T * w) @ dE, vs.K, atol=1e-12)
