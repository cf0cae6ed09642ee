"""Assembly of the Petrov-Galerkin system, the load vector and the Gram matrices.

Every matrix here is a sum of Kronecker products ``S (x) V`` of a sparse
space(-time) Q2 matrix ``S`` and a dense velocity block ``V``, restricted to the
kept test pairs. Entry ``((k, l), (i, j))`` of ``S (x) V`` is ``S[k, i] V[l, j]``;
rows are indexed by test pairs, columns by trial pairs. The spatial matrices are
assembled element by element with Gauss quadrature, which is also where a
non-constant prefactor d(t, x) of the velocity form enters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import gauss_rule, tensor_rule
from .problems import ProblemSpec, initial_condition, manufactured_pair
from .spaces import StableTrialBasis, TestSpace
from .spacetime import Q2Space, reference_basis
from .velocity import VelocityForm, VelocitySpace

SYSTEM_QUAD_ORDER = 3
LOAD_QUAD_ORDER = 5
DROP_TOL = 1e-14


# -- spatial (space-time) matrices -------------------------------------------------------------

@dataclass
class _Pattern:
    indptr: np.ndarray
    indices: np.ndarray
    scatter: np.ndarray  # position in data of every (element, k, i) local entry
    n: int

    def build(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.scatter, weights=local.ravel(), minlength=len(self.indices))
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


_pattern_cache: dict = {}


def _pattern(st: Q2Space) -> _Pattern:
    key = (tuple((m.a, m.b, m.n_cells) for m in st.axes), st.has_time)
    if key not in _pattern_cache:
        conn = st.connectivity
        n_loc = conn.shape[1]
        rows = np.repeat(conn, n_loc, axis=1).ravel()
        cols = np.tile(conn, (1, n_loc)).ravel()
        keys = rows * st.n_dofs + cols
        uniq, scatter = np.unique(keys, return_inverse=True)
        r, c = np.divmod(uniq, st.n_dofs)
        indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=st.n_dofs))])
        _pattern_cache.clear()
        _pattern_cache[key] = _Pattern(indptr, c.astype(np.int32), scatter, st.n_dofs)
    return _pattern_cache[key]


@dataclass
class SpatialMatrices:
    """Weighted Q2 matrices with a common sparsity pattern.

    ``mass[k, i] = int w p_i p_k``, ``C[b][k, i] = int w p_i d_b p_k`` and
    ``D[a][b][k, i] = int w d_a p_i d_b p_k``.
    """

    mass: sp.csr_matrix
    C: list
    D: list


def spatial_matrices(st: Q2Space, weight=None, order: int = SYSTEM_QUAD_ORDER) -> SpatialMatrices:
    """Element-by-element Gauss assembly; ``weight`` maps points (..., dim) to values."""
    pts, wts = tensor_rule(gauss_rule(order), st.dim)
    vals, grads = reference_basis(pts, st.h)
    jac = float(np.prod(0.5 * st.h))
    w = np.broadcast_to(wts * jac, (st.n_elements, len(wts)))
    if weight is not None:
        w = w * np.asarray(weight(st.all_points(pts)), dtype=float)
    pat = _pattern(st)
    uniform = weight is None

    def local(a_kq, b_iq):
        if uniform:
            loc = np.einsum("q,qk,qi->ki", w[0], a_kq, b_iq)
            return np.broadcast_to(loc, (st.n_elements,) + loc.shape)
        return np.einsum("eq,qk,qi->eki", w, a_kq, b_iq)

    mass = pat.build(local(vals, vals))
    C = [pat.build(local(grads[:, :, b], vals)) for b in range(st.dim)]
    D = [[pat.build(local(grads[:, :, b], grads[:, :, a])) for b in range(st.dim)] for a in range(st.dim)]
    return SpatialMatrices(mass, C, D)


# -- Kronecker terms ---------------------------------------------------------------------------

@dataclass
class KronTerm:
    S: sp.csr_matrix
    V: np.ndarray


def _d_weights(trial: StableTrialBasis, order: int):
    """Spatial matrices with weights d, 1, 1/d, 1/d^2 (shared when d is absent)."""
    st = trial.test.st
    plain = spatial_matrices(st, order=order)
    if trial.d_coeff is None:
        return {"d": plain, "1": plain, "1/d": plain, "1/d2": plain}
    d = trial.d_coeff
    return {
        "d": spatial_matrices(st, lambda x: d(x), order),
        "1": plain,
        "1/d": spatial_matrices(st, lambda x: 1.0 / d(x), order),
        "1/d2": spatial_matrices(st, lambda x: 1.0 / d(x) ** 2, order),
    }


def _transport_masses(vel: VelocitySpace, time_dependent: bool) -> list[np.ndarray]:
    return ([vel.M] if time_dependent else []) + vel.weighted_masses


def system_terms(trial: StableTrialBasis, form: VelocityForm, vel: VelocitySpace,
                 order: int = SYSTEM_QUAD_ORDER) -> list[KronTerm]:
    """Terms of ``b(p_ij + z_ij, p_kl)``.

    With ``r_a = W_a e_j`` the transported velocity moments the entry is
    ``int d A(i,j;k,l) + (1/d) grad-grad G - (p_i d_b p_k + p_k d_b p_i) W_b``.
    """
    W = _transport_masses(vel, trial.time_dependent)
    mats = _d_weights(trial, order)
    A = form.A
    R = trial.directional_lifts  # R[a] = A^{-1} W_a
    terms = [KronTerm(mats["d"].mass, A)]
    for b, Wb in enumerate(W):
        Cb = mats["1"].C[b]
        terms.append(KronTerm(-(Cb + Cb.T).tocsr(), Wb))
    for a in range(len(W)):
        for b in range(len(W)):
            terms.append(KronTerm(mats["1/d"].D[a][b], W[b] @ R[a]))
    return terms


def gram_x_terms(trial: StableTrialBasis, vel: VelocitySpace, order: int = SYSTEM_QUAD_ORDER) -> list[KronTerm]:
    """Terms of ``int (chi_ij, chi_kl)_V`` with the H^1(S^1) Gram matrix."""
    AV = vel.A_V
    mats = _d_weights(trial, order)
    R = trial.directional_lifts
    terms = [KronTerm(mats["1"].mass, AV)]
    for a, Ra in enumerate(R):
        Ca = mats["1/d"].C[a]
        terms.append(KronTerm(-Ca.T.tocsr(), AV @ Ra))
        terms.append(KronTerm(-Ca, Ra.T @ AV))
    for a in range(len(R)):
        for b in range(len(R)):
            terms.append(KronTerm(mats["1/d2"].D[a][b], R[b].T @ AV @ R[a]))
    return terms


def gram_y_terms(test: TestSpace, vel: VelocitySpace, order: int = SYSTEM_QUAD_ORDER) -> list[KronTerm]:
    """Terms of the discrete test norm: V-norm part plus the V_h-dual norm of the transport."""
    mats = spatial_matrices(test.st, order=order)
    AV = vel.A_V
    W = _transport_masses(vel, test.st.has_time)
    AVinv_W = [np.linalg.solve(AV, Wa) for Wa in W]
    terms = [KronTerm(mats.mass, AV)]
    for a in range(len(W)):
        for b in range(len(W)):
            terms.append(KronTerm(mats.D[a][b], W[b] @ AVinv_W[a]))
    return terms


def dual_norm_blocks(vel: VelocitySpace, time_dependent: bool) -> list[list[np.ndarray]]:
    """The blocks ``G_ab = W_a^T A_V^{-1} W_b`` of the discrete dual-norm part."""
    W = _transport_masses(vel, time_dependent)
    return [[Wa.T @ np.linalg.solve(vel.A_V, Wb) for Wb in W] for Wa in W]


def kron_to_csr(terms: list[KronTerm], test: TestSpace, drop_tol: float = DROP_TOL) -> sp.csr_matrix:
    """Sum of Kronecker terms restricted to the kept pairs, small entries dropped.

    An entry is dropped when ``|value| <= drop_tol * max|row|``.
    """
    pat = _pattern(test.st)
    n_st = pat.n
    pat_rows = np.repeat(np.arange(n_st), np.diff(pat.indptr))
    pat_keys = pat_rows.astype(np.int64) * n_st + pat.indices
    data = np.zeros((len(pat_keys), len(terms)))
    for col, t in enumerate(terms):
        S = t.S.tocoo()
        keys = S.row.astype(np.int64) * n_st + S.col
        pos = np.searchsorted(pat_keys, keys)
        if np.any(pos >= len(pat_keys)) or np.any(pat_keys[np.minimum(pos, len(pat_keys) - 1)] != keys):
            raise ValueError("Kronecker term lies outside the Q2 sparsity pattern")
        np.add.at(data[:, col], pos, S.data)
    n_v = terms[0].V.shape[0]
    Vs = np.stack([np.asarray(t.V) for t in terms]).reshape(len(terms), -1)
    blocks = (data @ Vs).reshape(-1, n_v, n_v)
    full = sp.bsr_matrix((blocks, pat.indices, pat.indptr), shape=(n_st * n_v, n_st * n_v)).tocsr()
    del blocks
    keep = test.flat_index
    A = full[keep][:, keep].tocsr()
    del full
    return drop_small(A, drop_tol)


def drop_small(A: sp.csr_matrix, drop_tol: float = DROP_TOL) -> sp.csr_matrix:
    A = A.tocsr()
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    absval = np.abs(A.data)
    rowmax = np.zeros(A.shape[0])
    np.maximum.at(rowmax, rows, absval)
    mask = absval > drop_tol * rowmax[rows]
    out = sp.csr_matrix((A.data[mask], A.indices[mask], np.concatenate([[0], np.cumsum(np.bincount(rows[mask], minlength=A.shape[0]))])),
                        shape=A.shape)
    out.sort_indices()
    return out


class KroneckerOperator(spla.LinearOperator):
    """Matrix-free action of a sum of Kronecker terms on the kept pairs."""

    def __init__(self, terms: list[KronTerm], test: TestSpace):
        self.terms = terms
        self.test = test
        super().__init__(np.float64, (test.N, test.N))

    def _matvec(self, x):
        U = self.test.to_full(np.ravel(x))
        Y = np.zeros_like(U)
        for t in self.terms:
            Y += t.S @ (U @ t.V.T)
        return self.test.from_full(Y)

    def _rmatvec(self, x):
        U = self.test.to_full(np.ravel(x))
        Y = np.zeros_like(U)
        for t in self.terms:
            Y += t.S.T @ (U @ t.V)
        return self.test.from_full(Y)

    def block_diagonal(self) -> np.ndarray:
        """Velocity blocks on the space-time diagonal, (n_st, n_v, n_v), restricted to kept pairs."""
        n_st, n_v = self.test.st.n_dofs, self.test.n_v
        blocks = np.zeros((n_st, n_v, n_v))
        for t in self.terms:
            blocks += t.S.diagonal()[:, None, None] * t.V[None, :, :]
        mask = self.test.kept[:, :, None] & self.test.kept[:, None, :]
        blocks = np.where(mask, blocks, 0.0)
        eye = np.broadcast_to(np.eye(n_v), blocks.shape)
        dropped = ~self.test.kept
        return np.where(dropped[:, :, None] & (eye > 0), 1.0, blocks)

    def block_jacobi(self) -> spla.LinearOperator:
        """Inverse of the velocity blocks on the space-time diagonal, as a preconditioner."""
        inv = np.linalg.inv(self.block_diagonal())

        def apply(x):
            U = self.test.to_full(np.ravel(x))
            return self.test.from_full(np.einsum("kij,kj->ki", inv, U))

        return spla.LinearOperator(self.shape, matvec=apply, dtype=float)


# -- assembled objects -------------------------------------------------------------------------

@dataclass
class AssembledSystem:
    B: sp.csr_matrix
    load: np.ndarray
    M_X: sp.csr_matrix | None = None
    M_Y: sp.csr_matrix | None = None
    timings: dict = field(default_factory=dict)


def _check_consistent(trial: StableTrialBasis, test: TestSpace, form: VelocityForm):
    if trial.test is not test:
        if trial.test.st.shape != test.st.shape or not np.array_equal(trial.test.kept, test.kept):
            raise ValueError("trial and test spaces are built over different meshes")
    if form.A.shape[0] != test.n_v:
        raise ValueError("velocity form does not match the velocity resolution")


def assemble_system(trial: StableTrialBasis, test: TestSpace, form: VelocityForm, vel: VelocitySpace,
                    order: int = SYSTEM_QUAD_ORDER) -> sp.csr_matrix:
    """Sparse system matrix ``B[(k,l), (i,j)] = b(p_ij + z_ij, p_kl)``."""
    _check_consistent(trial, test, form)
    return kron_to_csr(system_terms(trial, form, vel, order), test)


def assemble_gram_X(trial: StableTrialBasis, vel: VelocitySpace, order: int = SYSTEM_QUAD_ORDER) -> sp.csr_matrix:
    return kron_to_csr(gram_x_terms(trial, vel, order), trial.test)


def assemble_gram_Y(test: TestSpace, vel: VelocitySpace, order: int = SYSTEM_QUAD_ORDER) -> sp.csr_matrix:
    return kron_to_csr(gram_y_terms(test, vel, order), test)


def _load_tensor(st: Q2Space, vel: VelocitySpace, func, order: int) -> np.ndarray:
    """``F[k, l] = int int func(x, phi) p_k(x) psi_l(phi)`` over ``st``'s box times S^1.

    ``func(points, phi)`` receives points (n_el, nq, dim) and phi (n_phi,)
    and returns values (n_el, nq, n_phi).
    """
    pts, wts = tensor_rule(gauss_rule(order), st.dim)
    vals, _ = reference_basis(pts, st.h)
    jac = float(np.prod(0.5 * st.h))
    phi, wphi, E, _ = vel.eval_matrices(order)
    F = np.zeros((st.n_dofs, vel.n_v))
    conn = st.connectivity
    chunk = max(1, 200000 // (len(wts) * len(phi)))
    for start in range(0, st.n_elements, chunk):
        els = np.arange(start, min(start + chunk, st.n_elements))
        g = func(st.all_points(pts)[els], phi)  # (e, q, r)
        gw = g * (wts * jac)[None, :, None] * wphi[None, None, :]
        loc = np.einsum("qk,eqr,rl->ekl", vals, gw, E)
        np.add.at(F, conn[els], loc)
    return F


def assemble_load(test: TestSpace, vel: VelocitySpace, problem: ProblemSpec, order: int = LOAD_QUAD_ORDER) -> np.ndarray:
    """Load vector on the kept pairs.

    Time-dependent: the initial-boundary functional on ``{t = 0}`` (the spatial
    inflow data is zero and ``|k . n| = 1`` there). Stationary: the source term.
    """
    st = test.st
    if problem.is_time_dependent:
        from .spacetime import build_q2_space

        face = build_q2_space(st.axes[1:])
        F_face = _load_tensor(face, vel, lambda x, phi: initial_condition(x)[..., None] * np.ones_like(phi), order)
        F = np.zeros((st.n_dofs, vel.n_v))
        # t is the slowest axis, so the t = 0 face dofs come first in the same order
        F[: face.n_dofs] = F_face
    else:
        _, f0 = manufactured_pair(problem.c, problem.d)
        F = _load_tensor(st, vel, lambda x, phi: f0(x[..., 0, None], x[..., 1, None], phi[None, None, :]), order)
    return test.from_full(F)
