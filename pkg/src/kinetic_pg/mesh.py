"""Uniform 1D meshes, tensor-product element traversal and Gauss-Legendre rules."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_GAUSS_POINTS = 10


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh of the interval ``[a, b]`` with ``n_cells`` cells.

    For a periodic mesh the nodes ``a`` and ``b`` are identified, so only
    ``n_cells`` distinct nodes exist.
    """

    a: float
    b: float
    n_cells: int
    periodic: bool = False

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        x = self.a + self.h * np.arange(self.n_cells + 1)
        return x[:-1] if self.periodic else x

    @property
    def n_nodes(self) -> int:
        return self.n_cells if self.periodic else self.n_cells + 1

    def cell_map(self, cell: int, ref: np.ndarray) -> np.ndarray:
        """Map reference coordinates in [-1, 1] to physical points of ``cell``."""
        x0 = self.a + cell * self.h
        return x0 + 0.5 * self.h * (np.asarray(ref) + 1.0)


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.points)


def make_uniform_mesh(a: float, b: float, n_cells: int, periodic: bool = False) -> Mesh1D:
    if int(n_cells) != n_cells or n_cells < 1:
        raise ValueError(f"n_cells must be a positive integer, got {n_cells!r}")
    if not b > a:
        raise ValueError(f"need b > a, got a={a}, b={b}")
    return Mesh1D(float(a), float(b), int(n_cells), bool(periodic))


@lru_cache(maxsize=None)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_rule(n_points: int) -> QuadRule:
    """Gauss-Legendre rule with ``n_points`` nodes on the reference cell [-1, 1]."""
    if int(n_points) != n_points or not 1 <= n_points <= MAX_GAUSS_POINTS:
        raise ValueError(f"unsupported number of Gauss points: {n_points!r}")
    x, w = _leggauss(int(n_points))
    return QuadRule(x, w)


def tensor_rule(rule: QuadRule, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product rule on [-1, 1]^dim; points (nq, dim), weights (nq,).

    Ordering is lexicographic with the last axis fastest.
    """
    pts = np.array(list(itertools.product(rule.points, repeat=dim)), dtype=float).reshape(-1, dim)
    wts = np.array([np.prod(c) for c in itertools.product(rule.weights, repeat=dim)], dtype=float)
    return pts, wts


def tensor_elements(meshes) -> np.ndarray:
    """Multi-indices of all cells of a product mesh, last axis fastest."""
    shape = tuple(m.n_cells for m in meshes)
    return np.array(list(np.ndindex(*shape)), dtype=np.int64).reshape(-1, len(shape))
