"""Continuous tensor-product Q2 elements on a box in space or space-time."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Mesh1D, make_uniform_mesh, tensor_elements
from .problems import ProblemSpec

REF_NODES = np.array([-1.0, 0.0, 1.0])


def lagrange_q2(s):
    """1D quadratic Lagrange basis at nodes (-1, 0, 1); returns shape (..., 3)."""
    s = np.asarray(s, dtype=float)
    return np.stack([0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)], axis=-1)


def lagrange_q2_deriv(s):
    s = np.asarray(s, dtype=float)
    return np.stack([s - 0.5, -2.0 * s, s + 0.5], axis=-1)


def reference_basis(ref_points: np.ndarray, h: np.ndarray):
    """Tensor basis values (nq, 3^dim) and physical gradients (nq, 3^dim, dim).

    ``h`` holds the cell widths per axis; local numbering is lexicographic with
    the last axis fastest.
    """
    ref_points = np.atleast_2d(np.asarray(ref_points, dtype=float))
    nq, dim = ref_points.shape
    vals1 = [lagrange_q2(ref_points[:, a]) for a in range(dim)]
    ders1 = [lagrange_q2_deriv(ref_points[:, a]) * (2.0 / h[a]) for a in range(dim)]
    n_loc = 3**dim
    values = np.ones((nq, n_loc))
    grads = np.ones((nq, n_loc, dim))
    for loc, multi in enumerate(itertools.product(range(3), repeat=dim)):
        for a in range(dim):
            values[:, loc] *= vals1[a][:, multi[a]]
            for g in range(dim):
                grads[:, loc, g] *= (ders1 if g == a else vals1)[a][:, multi[a]]
    return values, grads


@dataclass(frozen=True)
class BoundaryNodeInfo:
    """Which box faces carry a nonzero trace of each global basis function.

    ``on_low[a]`` / ``on_high[a]`` flag dofs whose node lies on the face with
    outward normal ``-e_a`` / ``+e_a``.
    """

    on_low: np.ndarray  # (dim, n_dofs) bool
    on_high: np.ndarray

    def faces(self, dof: int) -> list[tuple[int, int]]:
        """Incident faces as ``(axis, sign)`` pairs, sign being the normal orientation."""
        out = []
        for a in range(self.on_low.shape[0]):
            if self.on_low[a, dof]:
                out.append((a, -1))
            if self.on_high[a, dof]:
                out.append((a, +1))
        return out


@dataclass(frozen=True)
class Q2Space:
    axes: tuple[Mesh1D, ...]
    #: True if axis 0 is time.
    has_time: bool = False

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(2 * m.n_cells + 1 for m in self.axes)

    @property
    def n_dofs(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> np.ndarray:
        return np.array([m.h for m in self.axes])

    @property
    def n_elements(self) -> int:
        return int(np.prod([m.n_cells for m in self.axes]))

    @cached_property
    def elements(self) -> np.ndarray:
        return tensor_elements(self.axes)

    @cached_property
    def axis_nodes(self) -> list[np.ndarray]:
        return [np.linspace(m.a, m.b, 2 * m.n_cells + 1) for m in self.axes]

    @cached_property
    def connectivity(self) -> np.ndarray:
        """(n_elements, 3^dim) local-to-global dof map."""
        offsets = np.array(list(itertools.product(range(3), repeat=self.dim)))
        node_multi = 2 * self.elements[:, None, :] + offsets[None, :, :]
        return np.ravel_multi_index(tuple(node_multi[..., a] for a in range(self.dim)), self.shape)

    def dof_coords(self) -> np.ndarray:
        grids = np.meshgrid(*self.axis_nodes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def element_origin(self, element) -> np.ndarray:
        e = self.elements[element]
        return np.array([m.a + e[a] * m.h for a, m in enumerate(self.axes)])

    def map_points(self, element, ref_points) -> np.ndarray:
        ref_points = np.atleast_2d(ref_points)
        return self.element_origin(element) + 0.5 * self.h * (ref_points + 1.0)

    def all_points(self, ref_points) -> np.ndarray:
        """Physical points (n_elements, nq, dim) for a set of reference points."""
        ref_points = np.atleast_2d(ref_points)
        a = np.array([m.a for m in self.axes])
        origins = a + self.elements * self.h
        return origins[:, None, :] + 0.5 * self.h * (ref_points[None, :, :] + 1.0)

    @cached_property
    def boundary(self) -> BoundaryNodeInfo:
        multi = np.indices(self.shape).reshape(self.dim, -1)
        low = np.stack([multi[a] == 0 for a in range(self.dim)])
        high = np.stack([multi[a] == self.shape[a] - 1 for a in range(self.dim)])
        return BoundaryNodeInfo(low, high)


def build_q2_space(axes, has_time: bool = False) -> Q2Space:
    axes = tuple(axes)
    if len(axes) not in (2, 3):
        raise ValueError("Q2 spaces are supported on 2 or 3 axes")
    if any(m.periodic for m in axes):
        raise ValueError("Q2 space axes must not be periodic")
    return Q2Space(axes, has_time)


def q2_space_for(problem: ProblemSpec) -> Q2Space:
    x_axes = [make_uniform_mesh(0.0, 1.0, problem.n_x), make_uniform_mesh(0.0, 1.0, problem.n_x)]
    if problem.is_time_dependent:
        return build_q2_space([make_uniform_mesh(0.0, problem.T, problem.n_t)] + x_axes, has_time=True)
    return build_q2_space(x_axes)


def eval_basis_and_gradient(space: Q2Space, element: int, ref_point):
    """Local basis values (3^dim,) and physical gradients (3^dim, dim) at one point."""
    if not 0 <= element < space.n_elements:
        raise ValueError(f"element index {element} out of range")
    ref_point = np.asarray(ref_point, dtype=float).reshape(1, -1)
    if ref_point.shape[1] != space.dim:
        raise ValueError("reference point has wrong dimension")
    values, grads = reference_basis(ref_point, space.h)
    return values[0], grads[0]
