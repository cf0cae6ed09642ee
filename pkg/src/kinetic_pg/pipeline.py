"""End-to-end drivers: discretize a problem, solve it, and run the inf-sup,
sparsity and convergence studies."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .infsup import InfSupResult, infsup_result
from .linalg import EigenOptions, SolverOptions, solve_linear
from .postprocess import ErrorReport, SparsityStats, error_norms, sparsity_stats
from .problems import ProblemSpec, manufactured_dphi, manufactured_pair
from .spaces import StableTrialBasis, TestSpace, build_test_space
from .spacetime import Q2Space, q2_space_for
from .velocity import LiftedBasis, VelocityForm, VelocitySpace, compute_lifted_basis, make_velocity_form, velocity_space

log = logging.getLogger(__name__)

#: Refuse to build test spaces larger than this.
MAX_TEST_DOFS = 2_000_000
#: Assemble B explicitly (and factorize it) only below this many estimated entries.
EXPLICIT_NNZ_LIMIT = 16_000_000


class CapacityError(ValueError):
    """The requested discretization exceeds the configured size cap."""


@dataclass
class Discretization:
    problem: ProblemSpec
    vel: VelocitySpace
    form: VelocityForm
    lifts: LiftedBasis
    st: Q2Space
    test: TestSpace
    trial: StableTrialBasis
    timings: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.test.N

    def estimated_nnz(self) -> int:
        """Upper bound on the stored entries of ``B``: Q2 couplings times dense velocity blocks."""
        return int(asm._pattern(self.st).indices.size) * self.vel.n_v**2


def check_size(problem: ProblemSpec, cap: int = MAX_TEST_DOFS):
    n_st = (2 * problem.n_x + 1) ** 2 * ((2 * problem.n_t + 1) if problem.is_time_dependent else 1)
    if n_st * problem.n_v > cap:
        raise CapacityError(f"{problem.mesh_tag} needs about {n_st * problem.n_v:.3g} test dofs, "
                            f"above the cap of {cap:.3g}")


def discretize(problem: ProblemSpec, cap: int = MAX_TEST_DOFS) -> Discretization:
    """Velocity space, form and lifts, the Q2 space and the test/trial spaces."""
    check_size(problem, cap)
    t0 = time.perf_counter()
    vel = velocity_space(problem.n_v)
    form = make_velocity_form(vel, problem)
    lifts = compute_lifted_basis(vel, form)
    t1 = time.perf_counter()
    st = q2_space_for(problem)
    test = build_test_space(st, vel, problem)
    trial = StableTrialBasis(test, lifts, problem.d_coeff)
    t2 = time.perf_counter()
    return Discretization(problem, vel, form, lifts, st, test, trial, {"lifts": t1 - t0, "spaces": t2 - t1})


def system_operator(disc: Discretization, explicit: bool | None = None):
    """``B`` as CSR when it is small enough (or ``explicit``), else matrix-free."""
    if explicit is None:
        explicit = disc.estimated_nnz() <= EXPLICIT_NNZ_LIMIT
    terms = asm.system_terms(disc.trial, disc.form, disc.vel)
    if explicit:
        return asm.kron_to_csr(terms, disc.test)
    return asm.KroneckerOperator(terms, disc.test)


def gram_operators(disc: Discretization, explicit: bool | None = None):
    if explicit is None:
        explicit = disc.estimated_nnz() <= EXPLICIT_NNZ_LIMIT // 4
    x_terms = asm.gram_x_terms(disc.trial, disc.vel)
    y_terms = asm.gram_y_terms(disc.test, disc.vel)
    if explicit:
        return asm.kron_to_csr(x_terms, disc.test), asm.kron_to_csr(y_terms, disc.test)
    return asm.KroneckerOperator(x_terms, disc.test), asm.KroneckerOperator(y_terms, disc.test)


@dataclass
class SolveResult:
    disc: Discretization
    x: np.ndarray  # trial coefficients on the kept pairs
    residual: float
    method: str
    iterations: int
    timings: dict

    @property
    def U(self) -> np.ndarray:
        """Trial coefficients as an (n_st, n_v) array."""
        return self.disc.test.to_full(self.x)

    @property
    def assembly_share(self) -> float:
        """Share of the lifted-basis computation plus assembly in the total time."""
        t = self.timings
        return (t["lifts"] + t["assembly"]) / t["total"]


def solve(problem: ProblemSpec, opts: SolverOptions | None = None, explicit: bool | None = None,
          cap: int = MAX_TEST_DOFS) -> SolveResult:
    """Lifted basis, assembly, linear solve and composition of the discrete solution."""
    opts = opts or SolverOptions(method="auto")
    t_start = time.perf_counter()
    disc = discretize(problem, cap)
    if explicit is None and opts.method == "direct":
        explicit = True
    if opts.preconditioner in ("jacobi", "ilu0", "ic0") and explicit is None:
        explicit = True
    t0 = time.perf_counter()
    B = system_operator(disc, explicit)
    f = asm.assemble_load(disc.test, disc.vel, problem)
    t1 = time.perf_counter()
    info: dict = {}
    x = solve_linear(B, f, opts, info=info)
    t2 = time.perf_counter()
    # composing u = sum x_ij (p_ij + z_ij) is implicit in the coefficient array
    U = disc.test.to_full(x)
    t3 = time.perf_counter()
    timings = dict(disc.timings, assembly=t1 - t0, solve=t2 - t1, compose=t3 - t2, total=t3 - t_start)
    timings["assembly_share"] = (timings["lifts"] + timings["assembly"]) / timings["total"]
    del U
    log.info("%s %s: N=%d, %s, %d iterations, residual %.2e, %.1fs", problem.tag, problem.mesh_tag, disc.N,
             info["method"], info["iterations"], info["residual"], timings["total"])
    return SolveResult(disc, x, info["residual"], info["method"], info["iterations"], timings)


def infsup(problem: ProblemSpec, opts: EigenOptions | None = None, cap: int = MAX_TEST_DOFS) -> InfSupResult:
    """Assemble ``B``, ``M_X``, ``M_Y`` and compute the discrete inf-sup constant."""
    disc = discretize(problem, cap)
    opts = opts or EigenOptions()
    dense = disc.N <= opts.dense_limit and not opts.force_iterative
    B = system_operator(disc, explicit=True)
    M_X, M_Y = gram_operators(disc, explicit=True if dense else None)
    return infsup_result(problem, B, M_X, M_Y, opts)


def sparsity(problem: ProblemSpec, cap: int = MAX_TEST_DOFS) -> SparsityStats:
    disc = discretize(problem, cap)
    B = system_operator(disc, explicit=True)
    return sparsity_stats(B, problem.n_x, problem.n_x, problem.n_v)


def stationary_errors(result: SolveResult) -> ErrorReport:
    p = result.disc.problem
    u, _ = manufactured_pair(p.c, p.d)
    return error_norms(result.U, u, result.disc.trial, result.disc.vel, exact_dphi=manufactured_dphi)


def convergence_study(c: float, d: float, pairs, opts: SolverOptions | None = None,
                      cap: int = MAX_TEST_DOFS) -> dict:
    """Errors ``{(n_x, n_v): ErrorReport}`` of the manufactured stationary problem."""
    out = {}
    for n_x, n_v in pairs:
        res = solve(ProblemSpec.stationary(c, d, n_x, n_v), opts, cap=cap)
        out[(n_x, n_v)] = stationary_errors(res)
        log.info("n_x=%d n_v=%d: L2 %.3e, X %.3e", n_x, n_v, out[(n_x, n_v)].l2_error, out[(n_x, n_v)].x_error)
    return out


def is_explicit(A) -> bool:
    return sp.issparse(A)
