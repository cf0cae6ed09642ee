import numpy as np
import pytest
import scipy.sparse as sp

from kinetic_pg import assembly as asm
from kinetic_pg.problems import INITIAL_MASS, ProblemSpec
from kinetic_pg.spaces import StableTrialBasis, build_test_space
from kinetic_pg.spacetime import q2_space_for
from kinetic_pg.velocity import compute_lifted_basis, make_velocity_form, velocity_space

from oracles import OneElementStationary


def setup(problem):
    vel = velocity_space(problem.n_v)
    form = make_velocity_form(vel, problem)
    st = q2_space_for(problem)
    test = build_test_space(st, vel, problem)
    trial = StableTrialBasis(test, compute_lifted_basis(vel, form))
    return vel, form, test, trial


STATIONARY = ProblemSpec.stationary(1.0, 0.4, 2, 8)
TIME_DEP = ProblemSpec.time_dependent(0.4, 2, n_v=6)


@pytest.mark.parametrize("problem", [STATIONARY, TIME_DEP])
def test_matrices_symmetric(problem):
    vel, form, test, trial = setup(problem)
    for A in (asm.assemble_system(trial, test, form, vel), asm.assemble_gram_X(trial, vel), asm.assemble_gram_Y(test, vel)):
        assert A.shape == (test.N, test.N)
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()


@pytest.mark.parametrize("problem", [STATIONARY, TIME_DEP])
def test_quadrature_order_is_exact(problem):
    vel, form, test, trial = setup(problem)
    B3 = asm.assemble_system(trial, test, form, vel, order=3)
    B4 = asm.assemble_system(trial, test, form, vel, order=4)
    assert abs(B3 - B4).max() <= 1e-12 * abs(B4).max()


def test_gram_matrices_positive_definite():
    vel, form, test, trial = setup(STATIONARY)
    for A in (asm.assemble_gram_X(trial, vel), asm.assemble_gram_Y(test, vel), asm.assemble_system(trial, test, form, vel)):
        assert np.linalg.eigvalsh(A.toarray()).min() > 0


@pytest.mark.parametrize("c,d", [(1.0, 0.4), (0.1, 0.1)])
def test_one_element_matches_oracle(c, d):
    problem = ProblemSpec.stationary(c, d, 1, 4)
    vel, form, test, trial = setup(problem)
    oracle = OneElementStationary(c, d, 4)
    B_o, MX_o, MY_o = oracle.matrices([tuple(p) for p in test.pairs])
    for A, ref in ((asm.assemble_system(trial, test, form, vel), B_o),
                   (asm.assemble_gram_X(trial, vel), MX_o), (asm.assemble_gram_Y(test, vel), MY_o)):
        np.testing.assert_allclose(A.toarray(), ref, rtol=0, atol=1e-10 * np.abs(ref).max())


@pytest.mark.parametrize("problem", [STATIONARY, TIME_DEP])
def test_matrix_free_operator_matches_csr(problem):
    vel, form, test, trial = setup(problem)
    terms = asm.system_terms(trial, form, vel)
    A = asm.kron_to_csr(terms, test)
    op = asm.KroneckerOperator(terms, test)
    x = np.random.default_rng(0).standard_normal(test.N)
    np.testing.assert_allclose(op @ x, A @ x, atol=1e-12 * abs(A).max() * np.abs(x).sum())
    np.testing.assert_allclose(op.rmatvec(x), A.T @ x, atol=1e-12 * abs(A).max() * np.abs(x).sum())


def test_block_jacobi_inverts_diagonal_blocks():
    vel, form, test, trial = setup(STATIONARY)
    terms = asm.system_terms(trial, form, vel)
    A = asm.kron_to_csr(terms, test).toarray()
    P = asm.KroneckerOperator(terms, test).block_jacobi()
    owner = test.pairs[:, 0]
    D = np.where(owner[:, None] == owner[None, :], A, 0.0)
    x = np.random.default_rng(1).standard_normal(test.N)
    np.testing.assert_allclose(P @ (D @ x), x, atol=1e-10)


def test_load_vector_properties():
    problem = ProblemSpec.time_dependent(0.8, 8, n_v=8, n_t=1)
    vel, form, test, trial = setup(problem)
    f = asm.assemble_load(test, vel, problem)
    assert f.shape == (test.N,) and np.all(np.isfinite(f))
    st_test = setup(STATIONARY)[2]
    f_st = asm.assemble_load(st_test, velocity_space(8), STATIONARY)
    assert f_st.shape == (st_test.N,) and np.abs(f_st).max() > 0
    # initial data enters on the t = 0 face, away from the spatial boundary; Q2 functions and
    # velocity hats both sum to one, so the entries add up to the initial mass
    st = test.st
    full = test.to_full(f).sum(axis=1)
    assert full[st.boundary.on_high[0]].sum() == 0.0
    assert full.sum() == pytest.approx(INITIAL_MASS, rel=1e-4)


def test_kron_term_outside_pattern_rejected():
    vel, form, test, trial = setup(STATIONARY)
    n = test.st.n_dofs
    S = sp.csr_matrix(([1.0], ([0], [n - 1])), shape=(n, n))
    with pytest.raises(ValueError):
        asm.kron_to_csr([asm.KronTerm(S, np.eye(8))], test)
