"""Error norms, convergence slopes, angular moments, sparsity statistics and CSV output."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import gauss_rule, tensor_rule
from .spaces import StableTrialBasis
from .spacetime import reference_basis
from .velocity import VelocitySpace

ERROR_QUAD_ORDER = 5
MOMENT_GRID = 101
SATURATION_FACTOR = 2.0


@dataclass(frozen=True)
class ErrorReport:
    """``l2_error`` in L2(domain x S^1); ``x_error`` in L2(domain; H^1(S^1))."""

    l2_error: float
    x_error: float


@dataclass(frozen=True)
class SparsityStats:
    nnz: int
    n_dofs: int
    ratio_entries: float
    scaled: float


# -- field evaluation --------------------------------------------------------------------------

def field_at_points(trial: StableTrialBasis, U: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Velocity coefficient vectors (m, n_v) of the discrete field at physical points (m, dim).

    ``U`` holds the trial coefficients as an (n_st, n_v) array, zero on dropped pairs.
    """
    st = trial.test.st
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.array([m.a for m in st.axes])
    hi = np.array([m.b for m in st.axes])
    if np.any(points < lo - 1e-12) or np.any(points > hi + 1e-12):
        raise ValueError("evaluation points outside the domain")
    n_cells = np.array([m.n_cells for m in st.axes])
    cell = np.clip(np.floor((points - lo) / st.h).astype(np.int64), 0, n_cells - 1)
    element = np.ravel_multi_index(tuple(cell.T), tuple(n_cells))
    ref = 2.0 * (points - (lo + cell * st.h)) / st.h - 1.0
    vals, grads = reference_basis(ref, st.h)
    U_loc = U[st.connectivity[element]]  # (m, n_loc, n_v)
    out = np.einsum("mk,mkj->mj", vals, U_loc)
    inv_d = 1.0 / trial.d_at(points)
    for a, rho in enumerate(trial.directional_lifts):
        out -= inv_d[:, None] * (np.einsum("mk,mkj->mj", grads[:, :, a], U_loc) @ rho.T)
    return out


def _as_full(trial: StableTrialBasis, solution) -> np.ndarray:
    solution = np.asarray(solution, dtype=float)
    if solution.ndim == 1:
        return trial.test.to_full(solution)
    return solution


# -- error norms -------------------------------------------------------------------------------

def error_norms(solution, exact: Callable, trial: StableTrialBasis, vel: VelocitySpace,
                exact_dphi: Callable | None = None, order: int = ERROR_QUAD_ORDER) -> ErrorReport:
    """L2 and L2(V) errors of a discrete field against an exact function.

    ``exact(*coords, phi)`` broadcasts over the space(-time) coordinates and the
    angle. ``exact_dphi`` is its angular derivative; without it a central
    difference quotient is used. The discrete angular derivative is the P1
    derivative of the velocity coefficient vector.
    """
    st = trial.test.st
    U = _as_full(trial, solution)
    pts, wts = tensor_rule(gauss_rule(order), st.dim)
    jac = float(np.prod(0.5 * st.h))
    phi, wphi, E, dE = vel.eval_matrices(order)
    if exact_dphi is None:
        step = 1e-6

        def exact_dphi(*args):
            *xs, p = args
            return (exact(*xs, p + step) - exact(*xs, p - step)) / (2.0 * step)

    l2 = seminorm = 0.0
    chunk = max(1, 100000 // (len(wts) * len(phi)))
    for start in range(0, st.n_elements, chunk):
        els = np.arange(start, min(start + chunk, st.n_elements))
        coeff = trial.field_coefficients(U, pts, els)  # (e, q, n_v)
        xq = st.all_points(pts)[els]
        coords = [xq[..., a, None] for a in range(st.dim)]
        diff = coeff @ E.T - exact(*coords, phi[None, None, :])
        ddiff = coeff @ dE.T - exact_dphi(*coords, phi[None, None, :])
        w = (wts * jac)[None, :, None] * wphi[None, None, :]
        l2 += float(np.sum(w * diff**2))
        seminorm += float(np.sum(w * ddiff**2))
    return ErrorReport(float(np.sqrt(l2)), float(np.sqrt(l2 + seminorm)))


def fit_slope(ns, errors, floor: float | None = None) -> float:
    """Least-squares slope of ``-log(error)`` against ``log(n)``.

    Points whose error is within a factor 2 of ``floor`` (the error level set
    by the resolution of the other axis) are treated as saturated and left out.
    """
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.shape != errors.shape or ns.size < 2:
        raise ValueError("need at least two (n, error) pairs")
    if np.any(errors <= 0) or np.any(ns <= 0):
        raise ValueError("errors and resolutions must be positive")
    mask = np.ones(ns.size, dtype=bool)
    if floor is not None:
        mask = errors > SATURATION_FACTOR * floor
        if mask.sum() < 2:
            mask = np.zeros(ns.size, dtype=bool)
            mask[:2] = True
    slope, _ = np.polyfit(np.log(ns[mask]), np.log(errors[mask]), 1)
    return float(-slope)


# -- moments -----------------------------------------------------------------------------------

def moments(solution, trial: StableTrialBasis, vel: VelocitySpace, times, lambda_a: float = 0.0,
            n_grid: int = MOMENT_GRID) -> dict:
    """Spatial density ``int u dphi`` on a uniform ``n_grid x n_grid`` grid per time.

    The angular integral of a P1 expansion is ``1^T M c``. Values are mapped
    back from the transformed unknown with ``exp(lambda_a t)``. Returns
    ``{t: array (n_grid, n_grid)}`` indexed as ``[i1, i2]``.
    """
    st = trial.test.st
    if not st.has_time:
        raise ValueError("moments need a time-dependent solution")
    U = _as_full(trial, solution)
    t_axis, x1_axis, x2_axis = st.axes
    weights = vel.M @ np.ones(vel.n_v)
    g1 = np.linspace(x1_axis.a, x1_axis.b, n_grid)
    g2 = np.linspace(x2_axis.a, x2_axis.b, n_grid)
    X1, X2 = np.meshgrid(g1, g2, indexing="ij")
    out = {}
    for t in times:
        t = float(t)
        if not (t_axis.a - 1e-12 <= t <= t_axis.b + 1e-12):
            raise ValueError(f"time {t} outside [{t_axis.a}, {t_axis.b}]")
        pts = np.column_stack([np.full(X1.size, t), X1.ravel(), X2.ravel()])
        coeff = field_at_points(trial, U, pts)
        out[t] = (coeff @ weights).reshape(X1.shape) * np.exp(lambda_a * t)
    return out


def grid_integral(values: np.ndarray, box=((0.0, 1.0), (0.0, 1.0))) -> float:
    """Trapezoidal integral of a uniform 2D sample grid."""
    (a1, b1), (a2, b2) = box
    g1 = np.linspace(a1, b1, values.shape[0])
    g2 = np.linspace(a2, b2, values.shape[1])
    return float(np.trapezoid(np.trapezoid(values, g2, axis=1), g1))


# -- sparsity ----------------------------------------------------------------------------------

def sparsity_stats(B, n_x1: int, n_x2: int, n_v: int) -> SparsityStats:
    """Stored entries of ``B`` relative to ``N^2`` and to ``n_x1 n_x2 n_v^2``."""
    nnz = int(B.nnz) if sp.issparse(B) else int(np.count_nonzero(B))
    n = B.shape[0]
    return SparsityStats(nnz, n, nnz / float(n) ** 2, nnz / float(n_x1 * n_x2 * n_v**2))


# -- CSV output --------------------------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else f"{x:.10e}"


def write_error_table(path, n_xs, n_vs, errors: dict):
    """One row per ``n_x``, one column per ``n_v``; missing cells stay empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_x"] + [f"n_v={n}" for n in n_vs])
        for nx in n_xs:
            w.writerow([nx] + [_fmt(errors.get((nx, nv))) for nv in n_vs])


def write_infsup_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["problem", "n", "beta_delta", "beta_lb", "ratio"])
        for r in rows:
            w.writerow([r["problem"], r["n"], _fmt(r["beta_delta"]), _fmt(r["beta_lb"]), _fmt(r["ratio"])])


def write_sparsity_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "N", "nnz", "ratio_entries", "scaled"])
        for n, s in rows:
            w.writerow([n, s.n_dofs, s.nnz, _fmt(s.ratio_entries), _fmt(s.scaled)])


def write_slopes(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "fixed", "norm", "slope"])
        for r in rows:
            w.writerow([r["sweep"], r["fixed"], r["norm"], f"{r['slope']:.6f}"])


def write_grid(path, values: np.ndarray):
    np.savetxt(path, values, delimiter=",", fmt="%.10e")


def moment_filename(t: float) -> str:
    return f"moments_t{t:g}.csv"


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
