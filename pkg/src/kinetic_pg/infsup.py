"""Discrete inf-sup constant of the Petrov-Galerkin pair and its analytic lower bound."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import DENSE_EIGEN_LIMIT, DirectInverse, EigenOptions, SolverError, dominant_eigenvalues
from .problems import ProblemSpec

log = logging.getLogger(__name__)


@dataclass
class InfSupResult:
    problem: str
    mesh: str
    beta_delta: float
    beta_lb: float
    method: str = "dense"
    seconds: float = 0.0
    history: list = field(default_factory=list, repr=False)

    @property
    def ratio(self) -> float:
        return self.beta_delta / self.beta_lb

    def row(self) -> dict:
        return {"problem": self.problem, "mesh": self.mesh, "beta_delta": self.beta_delta,
                "beta_lb": self.beta_lb, "ratio": self.ratio}


def lower_bound(problem: ProblemSpec) -> float:
    """``alpha_a / (sqrt(2) max(1, c_a))`` from the coercivity and continuity constants."""
    return float(problem.alpha_a / (np.sqrt(2.0) * max(1.0, problem.c_a)))


def _dense_beta_sq(B, M_X, M_Y) -> float:
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
    Xd = M_X.toarray() if sp.issparse(M_X) else np.asarray(M_X)
    Yd = M_Y.toarray() if sp.issparse(M_Y) else np.asarray(M_Y)
    L = sla.cholesky(0.5 * (Xd + Xd.T), lower=True)
    Z = sla.solve_triangular(L, Bd.T, lower=True)  # L^{-1} B^T
    S = Z.T @ Z  # B M_X^{-1} B^T
    del Z
    w = sla.eigh(0.5 * (S + S.T), 0.5 * (Yd + Yd.T), eigvals_only=True, subset_by_index=[0, 0])
    return float(w[0])


def compute_beta(B, M_X, M_Y, opts: EigenOptions | None = None, B_inverse=None):
    """Return ``(beta, method, history)`` for the discrete inf-sup constant.

    ``beta^2`` is the smallest eigenvalue of ``B M_X^{-1} B^T x = lam M_Y x``
    (rows of ``B`` are test functions). The dense route reduces with a Cholesky
    factor of ``M_X``. The iterative route finds the largest eigenvalue
    ``1 / beta^2`` of ``B^{-T} M_X B^{-1} M_Y``, which only needs solves with
    ``B`` and products with the Gram matrices.
    """
    opts = opts or EigenOptions()
    n = B.shape[0]
    if B.shape != M_X.shape or B.shape != M_Y.shape:
        raise ValueError("B, M_X and M_Y must have the same square shape")
    if n <= opts.dense_limit and not opts.force_iterative:
        val = _dense_beta_sq(B, M_X, M_Y)
        if not val > 0:
            raise SolverError(f"nonpositive smallest eigenvalue {val:.3e}: the pair is not inf-sup stable")
        return float(np.sqrt(val)), "dense", []

    Binv = B_inverse if B_inverse is not None else DirectInverse(B)
    count = [0]

    def apply_K(x):
        count[0] += 1
        return Binv.rmatvec(M_X @ Binv.matvec(M_Y @ np.ravel(x)))

    # K = B^{-T} M_X B^{-1} M_Y is self-adjoint in the M_Y inner product, eigenvalues 1 / lam
    K = spla.LinearOperator((n, n), matvec=apply_K, dtype=float)
    mu = dominant_eigenvalues(K, n, k=opts.block_size, rel_tol=opts.rel_tol * 1e-2, max_iter=opts.max_iter,
                              seed=opts.seed)
    if not mu[0] > 0:
        raise SolverError(f"nonpositive dominant eigenvalue {mu[0]:.3e}")
    log.debug("ARPACK used %d operator applications", count[0])
    return float(1.0 / np.sqrt(mu[0])), "arpack", [count[0]]


def infsup_result(problem: ProblemSpec, B, M_X, M_Y, opts: EigenOptions | None = None, B_inverse=None) -> InfSupResult:
    t0 = time.perf_counter()
    beta, method, hist = compute_beta(B, M_X, M_Y, opts, B_inverse)
    return InfSupResult(problem.tag, problem.mesh_tag, beta, lower_bound(problem), method,
                        time.perf_counter() - t0, hist)


__all__ = ["InfSupResult", "lower_bound", "compute_beta", "infsup_result", "DENSE_EIGEN_LIMIT"]
