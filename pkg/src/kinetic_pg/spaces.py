"""Discrete test space (tensor pairs vanishing on the outflow boundary) and the
stable trial space obtained by adding velocity lifts of the transported test
functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problems import ProblemSpec
from .spacetime import Q2Space, reference_basis
from .velocity import LiftedBasis, VelocitySpace

#: Angle (center) of the outflow half circle {v . n > 0} for outward normals +-e_x1, +-e_x2.
_OUTFLOW_CENTER = {(0, +1): 0.0, (0, -1): np.pi, (1, +1): 0.5 * np.pi, (1, -1): 1.5 * np.pi}
_ARC_TOL = 1e-12


def _angular_distance(a, b):
    d = np.mod(np.asarray(a) - b, 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def outflow_velocity_mask(n_v: int, spatial_axis: int, sign: int) -> np.ndarray:
    """Hats whose open support arc meets the outflow half circle of a face in positive measure.

    Arcs that merely touch the half circle at an endpoint are not flagged.
    """
    h = 2 * np.pi / n_v
    centers = h * np.arange(n_v)
    dist = _angular_distance(centers, _OUTFLOW_CENTER[(spatial_axis, sign)])
    return dist < 0.5 * np.pi + h - _ARC_TOL


@dataclass(frozen=True)
class TestSpace:
    """Kept (space-time dof, velocity dof) pairs with their global numbering.

    Pairs are numbered in lexicographic order of ``i * n_v + j``.
    """

    st: Q2Space
    n_v: int
    kept: np.ndarray  # (n_st, n_v) bool

    @property
    def N(self) -> int:
        return int(self.kept.sum())

    @property
    def flat_index(self) -> np.ndarray:
        """Full-tensor flat indices ``i * n_v + j`` of the kept pairs."""
        return np.flatnonzero(self.kept.ravel())

    @property
    def pairs(self) -> np.ndarray:
        idx = self.flat_index
        return np.stack([idx // self.n_v, idx % self.n_v], axis=1)

    @property
    def row_of(self) -> np.ndarray:
        """Map full-tensor flat index -> row, -1 for dropped pairs."""
        out = -np.ones(self.kept.size, dtype=np.int64)
        out[self.flat_index] = np.arange(self.N)
        return out

    def index(self, i: int, j: int) -> int:
        r = self.row_of[i * self.n_v + j]
        if r < 0:
            raise KeyError(f"pair ({i}, {j}) is not in the test space")
        return int(r)

    def to_full(self, x: np.ndarray) -> np.ndarray:
        """Scatter kept-pair coefficients into an (n_st, n_v) array (zeros elsewhere)."""
        x = np.asarray(x)
        tail = x.shape[1:]
        out = np.zeros((self.kept.size,) + tail, dtype=x.dtype)
        out[self.flat_index] = x
        return out.reshape((self.st.n_dofs, self.n_v) + tail)

    def from_full(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U)
        return U.reshape((self.kept.size,) + U.shape[2:])[self.flat_index]


def build_test_space(st: Q2Space, vel: VelocitySpace, problem: ProblemSpec) -> TestSpace:
    """Drop every pair whose trace is nonzero on part of the outflow boundary."""
    if st.has_time != problem.is_time_dependent:
        raise ValueError("space-time space does not match the problem kind")
    if vel.n_v != problem.n_v:
        raise ValueError("velocity space does not match the problem resolution")
    bnd = st.boundary
    kept = np.ones((st.n_dofs, vel.n_v), dtype=bool)
    offset = 1 if st.has_time else 0
    if st.has_time:
        # final time face: k . n = 1 > 0 for every direction
        kept[bnd.on_high[0]] = False
    for sa in range(2):
        axis = sa + offset
        for sign, flags in ((-1, bnd.on_low[axis]), (+1, bnd.on_high[axis])):
            bad = outflow_velocity_mask(vel.n_v, sa, sign)
            kept[np.ix_(flags, bad)] = False
    return TestSpace(st, vel.n_v, kept)


@dataclass(frozen=True)
class StableTrialBasis:
    """Trial functions ``p_i psi_j + z_ij`` built from the test pairs and velocity lifts."""

    test: TestSpace
    lifts: LiftedBasis
    d_coeff: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def time_dependent(self) -> bool:
        return self.test.st.has_time

    @property
    def directional_lifts(self) -> list[np.ndarray]:
        return self.lifts.for_directions(self.time_dependent)

    def d_at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.d_coeff is None:
            return np.ones(points.shape[:-1])
        return np.asarray(self.d_coeff(points), dtype=float) * np.ones(points.shape[:-1])

    def field_coefficients(self, U: np.ndarray, ref_points: np.ndarray, elements=None) -> np.ndarray:
        """Velocity coefficient vectors of ``sum_ij U_ij chi_ij`` at element points.

        ``U`` is the (n_st, n_v) coefficient array (zero on dropped pairs).
        Returns shape (n_el, nq, n_v).
        """
        st = self.test.st
        if elements is None:
            elements = np.arange(st.n_elements)
        elements = np.atleast_1d(elements)
        vals, grads = reference_basis(ref_points, st.h)
        conn = st.connectivity[elements]
        U_loc = U[conn]  # (n_el, n_loc, n_v)
        out = np.einsum("qk,ekj->eqj", vals, U_loc)
        pts = st.all_points(ref_points)[elements]
        inv_d = 1.0 / self.d_at(pts)
        for a, rho in enumerate(self.directional_lifts):
            gU = np.einsum("qk,ekj->eqj", grads[:, :, a], U_loc)
            out -= inv_d[..., None] * (gU @ rho.T)
        return out


def _local_gradient(basis: StableTrialBasis, i: int, element: int, ref_point):
    st = basis.test.st
    if not 0 <= element < st.n_elements:
        raise ValueError(f"element index {element} out of range")
    vals, grads = reference_basis(np.asarray(ref_point, dtype=float).reshape(1, -1), st.h)
    loc = np.flatnonzero(st.connectivity[element] == i)
    if loc.size == 0:
        return 0.0, np.zeros(st.dim)
    return vals[0, loc[0]], grads[0, loc[0]]


def eval_z(basis: StableTrialBasis, pair, element: int, ref_point) -> np.ndarray:
    """Coefficient vector of ``z_ij(t, x, .)`` at a point of ``element``."""
    i, j = pair
    _, grad = _local_gradient(basis, i, element, ref_point)
    point = basis.test.st.map_points(element, np.asarray(ref_point).reshape(1, -1))[0]
    inv_d = 1.0 / basis.d_at(point)
    z = np.zeros(basis.test.n_v)
    for a, rho in enumerate(basis.directional_lifts):
        z -= grad[a] * rho[:, j]
    return inv_d * z


def eval_trial(basis: StableTrialBasis, pair, element: int, ref_point) -> np.ndarray:
    """Coefficient vector of the trial function ``p_i psi_j + z_ij`` at a point."""
    i, j = pair
    value, _ = _local_gradient(basis, i, element, ref_point)
    out = eval_z(basis, pair, element, ref_point)
    out[j] += value
    return out
