"""Sparse linear algebra: CSR helpers, linear solvers with simple preconditioners,
and generalized symmetric eigenvalue solvers."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numba
import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

#: CSR matrices are plain :class:`scipy.sparse.csr_matrix` objects with sorted indices.
CsrMatrix = sp.csr_matrix

METHODS = ("auto", "direct", "gmres", "bicgstab", "cg")
PRECONDITIONERS = ("none", "jacobi", "ilu0", "ic0", "block_jacobi")
DENSE_EIGEN_LIMIT = 6000


class SolverError(RuntimeError):
    """Raised on breakdown, non-convergence or a singular matrix."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


@dataclass
class SolverOptions:
    method: str = "direct"
    rel_tol: float = 1e-10
    max_iter: int = 5000
    preconditioner: str = "none"
    restart: int = 50

    def __post_init__(self):
        self.method = self.method.lower()
        self.preconditioner = self.preconditioner.lower()
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


# -- incomplete factorizations -----------------------------------------------------------------

@numba.njit(cache=True)
def _ilu0_kernel(indptr, indices, data, n):
    lu = data.copy()
    diag = np.empty(n, dtype=np.int64)
    for i in range(n):
        diag[i] = -1
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag[i] = p
        if diag[i] < 0:
            return lu, diag, i
    iw = -np.ones(n, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = p
        for p in range(indptr[i], indptr[i + 1]):
            k = indices[p]
            if k >= i:
                break
            pivot = lu[diag[k]]
            if pivot == 0.0:
                return lu, diag, k
            lu[p] /= pivot
            for q in range(diag[k] + 1, indptr[k + 1]):
                pos = iw[indices[q]]
                if pos >= 0:
                    lu[pos] -= lu[p] * lu[q]
        for p in range(indptr[i], indptr[i + 1]):
            iw[indices[p]] = -1
        if lu[diag[i]] == 0.0:
            return lu, diag, i
    return lu, diag, -1


@numba.njit(cache=True)
def _ilu0_solve(indptr, indices, lu, diag, b):
    n = len(b)
    x = b.copy()
    for i in range(n):
        s = x[i]
        for p in range(indptr[i], diag[i]):
            s -= lu[p] * x[indices[p]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            s -= lu[p] * x[indices[p]]
        x[i] = s / lu[diag[i]]
    return x


@numba.njit(cache=True)
def _ic0_kernel(indptr, indices, data, n):
    # lower-triangular part in CSR: L[i, k] for k <= i, same pattern as tril(A)
    L = np.zeros(len(data))
    iw = -np.ones(n, dtype=np.int64)
    diag = np.empty(n, dtype=np.int64)
    for i in range(n):
        diag[i] = -1
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag[i] = p
        if diag[i] < 0:
            return L, diag, i
    for i in range(n):
        for p in range(indptr[i], diag[i] + 1):
            iw[indices[p]] = p
        for p in range(indptr[i], diag[i] + 1):
            k = indices[p]
            s = data[p]
            # subtract sum_{j < k} L[i, j] L[k, j]
            for q in range(indptr[k], diag[k]):
                pos = iw[indices[q]]
                if pos >= 0 and indices[q] < k:
                    s -= L[pos] * L[q]
            if k < i:
                L[p] = s / L[diag[k]]
            else:
                if s <= 0.0:
                    return L, diag, i
                L[p] = np.sqrt(s)
        for p in range(indptr[i], diag[i] + 1):
            iw[indices[p]] = -1
    return L, diag, -1


@numba.njit(cache=True)
def _ic0_solve(indptr, indices, L, diag, b):
    n = len(b)
    y = b.copy()
    for i in range(n):
        s = y[i]
        for p in range(indptr[i], diag[i]):
            s -= L[p] * y[indices[p]]
        y[i] = s / L[diag[i]]
    # backward with L^T: scatter column-wise
    x = y.copy()
    for i in range(n - 1, -1, -1):
        x[i] = x[i] / L[diag[i]]
        for p in range(indptr[i], diag[i]):
            x[indices[p]] -= L[p] * x[i]
    return x


def ilu0(A) -> spla.LinearOperator:
    """Zero-fill incomplete LU factorization as a preconditioner."""
    A = as_csr(A)
    lu, diag, bad = _ilu0_kernel(A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data.astype(float), A.shape[0])
    if bad >= 0:
        raise SolverError(f"ILU(0) breakdown: zero pivot in row {bad}")
    ip, ix = A.indptr.astype(np.int64), A.indices.astype(np.int64)
    return spla.LinearOperator(A.shape, matvec=lambda b: _ilu0_solve(ip, ix, lu, diag, np.ravel(b).astype(float)))


def ic0(A) -> spla.LinearOperator:
    """Zero-fill incomplete Cholesky factorization for SPD matrices.

    On a nonpositive pivot the diagonal is shifted by increasing multiples of
    its mean until the factorization succeeds.
    """
    A = as_csr(A)
    lower = as_csr(sp.tril(A))
    ip, ix = lower.indptr.astype(np.int64), lower.indices.astype(np.int64)
    shift = 0.0
    scale = float(np.mean(np.abs(A.diagonal())))
    for _ in range(20):
        data = lower.data.astype(float).copy()
        if shift:
            data[np.flatnonzero(ix == np.repeat(np.arange(A.shape[0]), np.diff(ip)))] += shift
        L, diag, bad = _ic0_kernel(ip, ix, data, A.shape[0])
        if bad < 0:
            break
        shift = 1e-3 * scale if shift == 0.0 else 4.0 * shift
    else:
        raise SolverError("IC(0) breakdown: matrix is not positive definite enough")
    if shift:
        log.debug("IC(0) used diagonal shift %.3e", shift)
    return spla.LinearOperator(A.shape, matvec=lambda b: _ic0_solve(ip, ix, L, diag, np.ravel(b).astype(float)))


def jacobi(A) -> spla.LinearOperator:
    d = as_csr(A).diagonal()
    if np.any(d == 0):
        raise SolverError("Jacobi preconditioner needs a nonzero diagonal")
    inv = 1.0 / d
    return spla.LinearOperator((len(d), len(d)), matvec=lambda b: inv * np.ravel(b))


def make_preconditioner(A, kind: str):
    if kind == "none":
        return None
    if kind == "block_jacobi":
        if not hasattr(A, "block_jacobi"):
            raise ValueError("block_jacobi needs an operator that exposes its diagonal blocks")
        return A.block_jacobi()
    if not sp.issparse(A):
        raise ValueError(f"preconditioner {kind!r} needs an explicit sparse matrix")
    return {"jacobi": jacobi, "ilu0": ilu0, "ic0": ic0}[kind](A)


# -- linear solves -----------------------------------------------------------------------------

def solve_linear(A, b, opts: SolverOptions | None = None, M=None, x0=None, info: dict | None = None) -> np.ndarray:
    """Solve ``A x = b`` with ``||A x - b|| <= rel_tol ||b||``.

    ``A`` is a sparse matrix or (for iterative methods) any linear operator.
    ``M`` optionally overrides the preconditioner named in ``opts``. If given,
    ``info`` receives the method used, the iteration count and the final
    relative residual.
    """
    info = {} if info is None else info
    opts = opts or SolverOptions()
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError("dimension mismatch in linear solve")
    if opts.method == "auto":
        # explicit matrices are factorized, matrix-free operators use preconditioned CG
        if sp.issparse(A):
            opts = replace(opts, method="direct")
        else:
            pc = opts.preconditioner if opts.preconditioner != "none" else (
                "block_jacobi" if hasattr(A, "block_jacobi") else "none")
            opts = replace(opts, method="cg", preconditioner=pc)
    bnorm = np.linalg.norm(b)
    info.update(method=opts.method, preconditioner=opts.preconditioner, iterations=0, residual=0.0)
    if bnorm == 0.0:
        return np.zeros_like(b)

    if opts.method == "direct":
        if not sp.issparse(A):
            raise ValueError("direct solves need an explicit sparse matrix")
        try:
            lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"direct solve failed: {exc}") from exc
        x = lu.solve(b)
        # one step of iterative refinement
        r = b - A @ x
        x += lu.solve(r)
        res = np.linalg.norm(b - A @ x) / bnorm
        if not np.isfinite(res) or res > opts.rel_tol:
            raise SolverError(f"direct solve residual {res:.3e} exceeds {opts.rel_tol:.1e}", [res])
        info.update(residual=res)
        return x

    if M is None:
        M = make_preconditioner(A, opts.preconditioner)
    history: list[float] = []
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=float).copy()
    solver = {"gmres": spla.gmres, "bicgstab": spla.bicgstab, "cg": spla.cg}[opts.method]
    used = 0
    tol = opts.rel_tol
    while used < opts.max_iter:
        count = [0]

        def cb(_):
            count[0] += 1

        chunk = opts.max_iter - used
        kwargs = dict(rtol=0.5 * tol * bnorm / max(np.linalg.norm(b - A @ x), 1e-300), atol=0.0, maxiter=chunk, M=M, callback=cb)
        kwargs["rtol"] = min(kwargs["rtol"], 0.5)
        if opts.method == "gmres":
            kwargs.update(restart=opts.restart, callback_type="pr_norm")
        x, flag = solver(A, b, x0=x, **kwargs)
        used += max(count[0], 1)
        res = np.linalg.norm(b - A @ x) / bnorm
        history.append(res)
        if not np.isfinite(res):
            raise SolverError(f"{opts.method} broke down", history)
        if res <= tol:
            log.debug("%s converged: %d iterations, residual %.2e", opts.method, used, res)
            info.update(iterations=used, residual=res, history=history)
            return x
        if flag < 0:
            raise SolverError(f"{opts.method} breakdown (flag {flag})", history)
        if flag > 0 and len(history) > 1 and history[-1] > 0.9 * history[-2]:
            break
    raise SolverError(f"{opts.method} did not reach rel_tol {tol:.1e} within {opts.max_iter} iterations "
                      f"(residual {history[-1]:.3e})", history)


class DirectInverse(spla.LinearOperator):
    """Reusable sparse LU factorization applied as an operator (and its transpose)."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        self.A = A
        self.lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
        super().__init__(np.float64, A.shape)

    def _matvec(self, b):
        return self.lu.solve(np.ravel(b))

    def _matmat(self, B):
        return self.lu.solve(np.asarray(B))

    def _rmatvec(self, b):
        return self.lu.solve(np.ravel(b), trans="T")

    def _rmatmat(self, B):
        return self.lu.solve(np.asarray(B), trans="T")


# -- eigenvalues -------------------------------------------------------------------------------

@dataclass
class EigenOptions:
    rel_tol: float = 1e-6
    max_iter: int = 500
    block_size: int = 4
    dense_limit: int = DENSE_EIGEN_LIMIT
    force_iterative: bool = False
    preconditioner: object = None
    seed: int = 0
    history: list = field(default_factory=list)


def _materialize(A, dim):
    if sp.issparse(A):
        return A.toarray()
    if isinstance(A, np.ndarray):
        return A
    return np.asarray(A @ np.eye(dim))


def _as_operator(A, dim):
    if sp.issparse(A) or isinstance(A, np.ndarray):
        return spla.aslinearoperator(A)
    return A


def generalized_eigenvalue(A_apply, M, dim: int, opts: EigenOptions | None = None, largest: bool = False):
    """Extreme eigenpair of the symmetric pencil ``A x = lam M x`` (``M`` SPD).

    Dense (reduce with a Cholesky factor of ``M``, symmetric eigensolve) for
    ``dim <= dense_limit``; block LOBPCG otherwise.
    """
    opts = opts or EigenOptions()
    if dim <= opts.dense_limit and not opts.force_iterative:
        Ad = _materialize(A_apply, dim)
        Md = _materialize(M, dim)
        Ad = 0.5 * (Ad + Ad.T)
        Md = 0.5 * (Md + Md.T)
        idx = [dim - 1, dim - 1] if largest else [0, 0]
        w, v = sla.eigh(Ad, Md, subset_by_index=idx)
        return float(w[0]), v[:, 0]

    A_op = _as_operator(A_apply, dim)
    M_op = _as_operator(M, dim)
    k = min(opts.block_size, dim)
    rng = np.random.default_rng(opts.seed)
    X = rng.standard_normal((dim, k))
    lam, vecs = _lobpcg_until(A_op, M_op, X, opts, largest)
    order = np.argsort(lam)
    i = order[-1] if largest else order[0]
    return float(lam[i]), vecs[:, i]


def _lobpcg_until(A_op, M_op, X, opts: EigenOptions, largest: bool):
    """Run LOBPCG in rounds until the eigen residual criterion holds."""
    history = opts.history
    total = 0
    while True:
        rounds = min(50, opts.max_iter - total)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            lam, X = spla.lobpcg(A_op, X, B=M_op, M=opts.preconditioner, tol=1e-12, maxiter=rounds,
                                 largest=largest)
        total += rounds
        i = int(np.argmax(lam) if largest else np.argmin(lam))
        v = X[:, i]
        Mv = M_op @ v
        res = np.linalg.norm(A_op @ v - lam[i] * Mv) / (abs(lam[i]) * np.linalg.norm(Mv))
        history.append((total, float(lam[i]), float(res)))
        if res <= opts.rel_tol:
            return lam, X
        if total >= opts.max_iter:
            raise SolverError(f"LOBPCG did not converge in {total} iterations (relative residual {res:.2e})",
                              [h[2] for h in history])


def dominant_eigenvalues(op, n: int, k: int = 4, rel_tol: float = 1e-8, max_iter: int | None = None, seed: int = 0):
    """Largest-magnitude eigenvalues of an operator with a real positive spectrum (ARPACK).

    Several values are requested because the dominant ones often come in
    degenerate pairs; they are returned in descending order.
    """
    k = min(k, n - 2)
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        w = spla.eigs(op, k=k, which="LM", tol=rel_tol, ncv=min(n - 1, max(20, 2 * k + 1)),
                      maxiter=max_iter, v0=v0, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"ARPACK did not converge: {exc}") from exc
    if np.max(np.abs(w.imag)) > 1e-6 * np.max(np.abs(w.real)):
        log.warning("dominant eigenvalues have imaginary parts up to %.2e", np.max(np.abs(w.imag)))
    return np.sort(w.real)[::-1]


def smallest_generalized_eigenvalue(S_apply, M, dim: int, opts: EigenOptions | None = None):
    """Smallest eigenpair of ``S x = lam M x`` with ``S`` symmetric positive semidefinite."""
    return generalized_eigenvalue(S_apply, M, dim, opts, largest=False)


# -- Matrix Market -----------------------------------------------------------------------------

def write_matrix_market(path, A, comment: str = ""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A) if sp.issparse(A) else np.asarray(A), comment=comment)


def read_matrix_market(path):
    out = scipy.io.mmread(str(path))
    return as_csr(out) if sp.issparse(out) else np.asarray(out)
