"""Periodic piecewise-linear elements on the circle of directions.

The angle phi in [0, 2pi) parametrizes S^1, so v = (cos phi, sin phi). All
velocity matrices are small (n_v <= 512) and stored dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .mesh import Mesh1D, gauss_rule, make_uniform_mesh
from .problems import ProblemSpec

VELOCITY_QUAD_POINTS = 8


@dataclass(frozen=True)
class VelocitySpace:
    mesh: Mesh1D
    M: np.ndarray
    K: np.ndarray
    M_cos: np.ndarray
    M_sin: np.ndarray

    @property
    def n_v(self) -> int:
        return self.mesh.n_cells

    @property
    def h(self) -> float:
        return self.mesh.h

    @property
    def A_V(self) -> np.ndarray:
        """Gram matrix of the H^1(S^1) scalar product."""
        return self.M + self.K

    @property
    def weighted_masses(self) -> list[np.ndarray]:
        """Mass matrices weighted by the components of the transport field (without time)."""
        return [self.M_cos, self.M_sin]

    def eval_matrices(self, n_points: int = 5):
        """Evaluation matrices of the hat basis on a per-cell Gauss grid.

        Returns ``(phi, weights, E, dE)`` where ``E @ coeffs`` gives function
        values at the points ``phi`` and ``dE @ coeffs`` the angular derivative.
        """
        rule = gauss_rule(n_points)
        n, h = self.n_v, self.h
        s = 0.5 * (rule.points + 1.0)
        phi = (np.arange(n)[:, None] + s[None, :]) * h
        wts = np.broadcast_to(0.5 * h * rule.weights, phi.shape)
        E = np.zeros((n, n_points, n))
        dE = np.zeros_like(E)
        cells = np.arange(n)
        E[cells, :, cells] = 1.0 - s
        E[cells, :, (cells + 1) % n] = s
        dE[cells, :, cells] = -1.0 / h
        dE[cells, :, (cells + 1) % n] = 1.0 / h
        return phi.ravel(), wts.ravel().copy(), E.reshape(-1, n), dE.reshape(-1, n)


def assemble_velocity_matrices(mesh: Mesh1D) -> VelocitySpace:
    """Assemble mass, stiffness and cos/sin-weighted masses of periodic P1 elements."""
    if not mesh.periodic:
        raise ValueError("velocity mesh must be periodic")
    if not np.isclose(mesh.a, 0.0) or not np.isclose(mesh.b, 2 * np.pi):
        raise ValueError("velocity mesh must cover [0, 2pi)")
    n = mesh.n_cells
    if n < 3:
        raise ValueError("need at least 3 velocity cells for periodic P1 elements")
    h = mesh.h
    rule = gauss_rule(VELOCITY_QUAD_POINTS)
    s = 0.5 * (rule.points + 1.0)
    w = 0.5 * h * rule.weights
    shape = np.stack([1.0 - s, s])  # (2, nq)

    M = np.zeros((n, n))
    K = np.zeros((n, n))
    M_cos = np.zeros((n, n))
    M_sin = np.zeros((n, n))
    k_loc = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    for cell in range(n):
        idx = np.array([cell, (cell + 1) % n])
        phi = (cell + s) * h
        block = np.ix_(idx, idx)
        M[block] += np.einsum("q,aq,bq->ab", w, shape, shape)
        M_cos[block] += np.einsum("q,aq,bq->ab", w * np.cos(phi), shape, shape)
        M_sin[block] += np.einsum("q,aq,bq->ab", w * np.sin(phi), shape, shape)
        K[block] += k_loc
    return VelocitySpace(mesh, M, K, M_cos, M_sin)


def velocity_space(n_v: int) -> VelocitySpace:
    return assemble_velocity_matrices(make_uniform_mesh(0.0, 2 * np.pi, n_v, periodic=True))


@dataclass(frozen=True)
class VelocityForm:
    """Constant-coefficient velocity bilinear form, ``A_tilde = diff * K + react * M``.

    For the time-dependent problem this is the transformed form
    ``q_inv * (M + K)``; for the stationary problem ``d * K + c * M``.
    """

    kind: str
    diffusion: float
    reaction: float
    A: np.ndarray
    alpha: float
    continuity: float


def make_velocity_form(space: VelocitySpace, problem: ProblemSpec) -> VelocityForm:
    if problem.is_time_dependent:
        q_inv = problem.q_inv
        if not q_inv > 0:
            raise ValueError("q_inv must be positive")
        diff, react = q_inv, q_inv
    else:
        if not (problem.c > 0 and problem.d > 0):
            raise ValueError("c and d must be positive")
        diff, react = problem.d, problem.c
    A = diff * space.K + react * space.M
    A = 0.5 * (A + A.T)
    return VelocityForm(problem.kind, diff, react, A, min(diff, react), max(diff, react))


@dataclass(frozen=True)
class LiftedBasis:
    """Velocity lifts; column ``j`` of each array is the coefficient vector of the lift of hat ``j``.

    ``rho_one`` solves ``A rho = M e_j``, ``rho_v1``/``rho_v2`` use the
    cos/sin-weighted masses.
    """

    rho_one: np.ndarray
    rho_v1: np.ndarray
    rho_v2: np.ndarray

    def for_directions(self, time_dependent: bool) -> list[np.ndarray]:
        """Lifts in the order of the space(-time) gradient components."""
        if time_dependent:
            return [self.rho_one, self.rho_v1, self.rho_v2]
        return [self.rho_v1, self.rho_v2]


def compute_lifted_basis(space: VelocitySpace, form: VelocityForm) -> LiftedBasis:
    """Solve the 3 n_v small velocity problems with one shared Cholesky factor."""
    try:
        factor = sla.cho_factor(form.A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("velocity form matrix is not positive definite") from exc
    return LiftedBasis(
        rho_one=sla.cho_solve(factor, space.M),
        rho_v1=sla.cho_solve(factor, space.M_cos),
        rho_v2=sla.cho_solve(factor, space.M_sin),
    )
