"""Generalized Hermitian eigenpairs (block LOBPCG or shift-invert) and SPD linear solves."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DENSE_CUTOFF = 200
PRECONDITIONERS = ("none", "jacobi", "ilu", "amg")
MODES = ("lobpcg", "shift_invert")


class ConvergenceError(RuntimeError):
    """Iteration limit reached; carries the best iterates found so far."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NotSPDError(ValueError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    k: int = 1
    tol: float = 1e-8
    max_iter: int = 500
    shift: float | None = None
    seed: int = 0
    mode: str = "lobpcg"
    preconditioner: str = "amg"
    inner: str = "direct"
    block_extra: int = 2

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if self.inner not in ("cg", "direct"):
            raise ValueError("inner solver must be 'cg' or 'direct'")
        if self.mode == "shift_invert" and self.shift is None:
            raise ValueError("shift-invert mode needs a shift")


@dataclass
class EigenResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool = True
    history: list = field(default_factory=list, repr=False)


def _mass_diag(M):
    d = M.diagonal().real
    return d


def _check_operators(A, M):
    if A.shape[0] != A.shape[1] or M.shape != A.shape:
        raise ValueError("A and M must be square and of equal size")
    if abs(A - A.conj().T).max() > 1e-12 * max(1.0, abs(A).max()):
        raise ValueError("A is not Hermitian")
    if abs(M - M.conj().T).max() > 1e-12 * max(1.0, abs(M).max()):
        raise NotSPDError("M is not symmetric")
    d = _mass_diag(M)
    if np.any(d <= 0):
        raise NotSPDError("M has nonpositive diagonal entries")
    if M.nnz > M.shape[0]:
        # LU without pivoting of a Hermitian matrix has positive pivots iff it is positive definite
        try:
            lu = spla.splu(sp.csc_matrix(M), permc_spec="NATURAL", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NotSPDError(f"M is singular: {exc}") from None
        piv = lu.U.diagonal()
        if np.any(piv.real <= 0):
            raise NotSPDError("M is not positive definite")


def _residual_norms(R, mdiag):
    """Residual size in the diag(M)^{-1} norm, the discrete L2 norm of the residual function."""
    return np.sqrt(np.sum(np.abs(R) ** 2 / mdiag[:, None], axis=0))


def _dominant_shifted(A, M, sigma):
    """SPD surrogate of A - sigma M for building preconditioners.

    Rows with a negative row sum (attractive potential wells) are lifted until
    the row sum vanishes, and a mass-sized margin is added.
    """
    B = sp.csr_matrix(A - sigma * M) if sigma else sp.csr_matrix(A)
    rowsum = np.asarray(B.sum(axis=1)).ravel().real
    return (B + sp.diags(np.maximum(0.0, -rowsum)) + M).tocsr()


def make_preconditioner(A, M, kind: str, sigma: float = 0.0):
    """Callable approximating (A - sigma M)^{-1} on blocks of columns."""
    if kind == "none":
        return None
    B = _dominant_shifted(A, M, sigma)
    if kind == "jacobi":
        inv = 1.0 / B.diagonal()
        return lambda R: inv[:, None] * R
    if kind == "ilu":
        ilu = spla.spilu(sp.csc_matrix(B), drop_tol=1e-6, fill_factor=10)
        return lambda R: _columns(ilu.solve, R)
    import pyamg

    if np.iscomplexobj(B.data):
        # pyamg's compiled kernels need a contiguous data array, not a view of the real part
        B = sp.csr_matrix((np.ascontiguousarray(B.data.real), B.indices, B.indptr), shape=B.shape)
    Br = B
    # local Jacobi weighting avoids pyamg's randomized spectral radius estimate
    ml = pyamg.smoothed_aggregation_solver(Br, symmetry="hermitian", max_coarse=500,
                                           smooth=("jacobi", {"weighting": "local"}))

    def apply(R):
        def one(col):
            if np.iscomplexobj(col):
                return ml.solve(col.real, tol=1e-12, maxiter=1, cycle="V") + 1j * ml.solve(
                    col.imag, tol=1e-12, maxiter=1, cycle="V")
            return ml.solve(col, tol=1e-12, maxiter=1, cycle="V")

        return _columns(one, R)

    return apply


def _columns(fn, R):
    out = np.empty_like(R)
    for j in range(R.shape[1]):
        out[:, j] = fn(R[:, j])
    return out


def _m_orthonormalize(X, MX, drop=1e-12):
    """SVQB: orthonormalize X in the M inner product, dropping near-dependent columns."""
    G = X.conj().T @ MX
    G = (G + G.conj().T) / 2
    d = np.sqrt(np.abs(np.diag(G)).real)
    d[d == 0] = 1.0
    Gs = G / np.outer(d, d)
    w, V = np.linalg.eigh(Gs)
    keep = w > drop * max(w.max(), 1e-300)
    T = (V[:, keep] / np.sqrt(w[keep])) / d[:, None]
    return X @ T, MX @ T


def _ritz(A_sub, M_sub, n_keep):
    A_sub = (A_sub + A_sub.conj().T) / 2
    M_sub = (M_sub + M_sub.conj().T) / 2
    try:
        w, C = sla.eigh(A_sub, M_sub)
    except np.linalg.LinAlgError:
        # fall back to an explicitly orthonormalized basis
        w_m, V = np.linalg.eigh(M_sub)
        keep = w_m > 1e-12 * w_m.max()
        T = V[:, keep] / np.sqrt(w_m[keep])
        w, C = np.linalg.eigh(T.conj().T @ A_sub @ T)
        C = T @ C
    return w[:n_keep], C[:, :n_keep]


def _initial_block(n, bs, seed, is_complex):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, bs))
    if is_complex:
        X = X + 1j * rng.standard_normal((n, bs))
    return X


def _dense_eigs(A, M, k):
    Ad = A.toarray()
    Md = M.toarray()
    w, V = sla.eigh((Ad + Ad.conj().T) / 2, (Md + Md.conj().T) / 2)
    return w[:k], V[:, :k]


def _normalize_phase(V, M):
    """Fix the arbitrary scalar of each eigenvector: unit M-norm, largest entry real positive."""
    V = V.copy()
    for j in range(V.shape[1]):
        v = V[:, j]
        nrm = np.sqrt(np.real(np.vdot(v, M @ v)))
        i = int(np.argmax(np.abs(v)))
        phase = v[i] / abs(v[i]) if abs(v[i]) > 0 else 1.0
        V[:, j] = v / (nrm * phase)
    if not np.iscomplexobj(V):
        return V.real
    return V


def lowest_eigenpairs(A, M, opts: SolveOptions = SolveOptions()) -> EigenResult:
    """k smallest eigenpairs of A x = lambda M x, ascending, M-orthonormal."""
    A = sp.csr_matrix(A)
    M = sp.csr_matrix(M)
    _check_operators(A, M)
    n = A.shape[0]
    k = min(opts.k, n)
    mdiag = _mass_diag(M)
    if n <= DENSE_CUTOFF:
        w, V = _dense_eigs(A, M, k)
        V = _normalize_phase(V, M)
        R = A @ V - (M @ V) * w
        return EigenResult(w, V, _residual_norms(R, mdiag), 0)
    if opts.mode == "shift_invert":
        return _shift_invert(A, M, opts, k, mdiag)
    return _lobpcg(A, M, opts, k, mdiag)


def _finish(w, X, A, M, mdiag, it, converged, history, opts):
    X = _normalize_phase(X, M)
    R = A @ X - (M @ X) * w
    res = _residual_norms(R, mdiag)
    result = EigenResult(w, X, res, it, converged, history)
    if not converged:
        raise ConvergenceError(
            f"no convergence after {it} iterations (residuals {res.tolist()}, tol {opts.tol:g})", result)
    return result


def _lobpcg(A, M, opts, k, mdiag):
    n = A.shape[0]
    bs = min(n // 3, k + opts.block_extra)
    is_complex = np.iscomplexobj(A.data)
    T = make_preconditioner(A, M, opts.preconditioner, opts.shift or 0.0)
    X = _initial_block(n, bs, opts.seed, is_complex)
    X, MX = _m_orthonormalize(X, M @ X)
    AX = A @ X
    w, C = _ritz(X.conj().T @ AX, X.conj().T @ MX, bs)
    X, AX, MX = X @ C, AX @ C, MX @ C
    P = AP = MP = None
    history = []
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        R = AX - MX * w
        res = _residual_norms(R, mdiag)
        history.append(res[:k].max())
        if np.all(res[:k] <= opts.tol):
            converged = True
            break
        Wb = T(R) if T is not None else R / mdiag[:, None]
        for _ in range(2):
            Wb = Wb - X @ (MX.conj().T @ Wb)
        blocks = [Wb]
        if P is not None:
            P = P - X @ (MX.conj().T @ P)
            blocks.append(P)
        Q = np.hstack(blocks)
        Q, MQ = _m_orthonormalize(Q, M @ Q)
        AQ = A @ Q
        Z = np.hstack([X, Q])
        AZ = np.hstack([AX, AQ])
        MZ = np.hstack([MX, MQ])
        w, C = _ritz(Z.conj().T @ AZ, Z.conj().T @ MZ, bs)
        Cx, Cq = C[:bs], C[bs:]
        P, AP, MP = Q @ Cq, AQ @ Cq, MQ @ Cq
        X = X @ Cx + P
        AX = AX @ Cx + AP
        MX = MX @ Cx + MP
        if it % 20 == 0:
            # refresh products against drift
            X, MX = _m_orthonormalize(X, M @ X)
            AX = A @ X
            w, C = _ritz(X.conj().T @ AX, X.conj().T @ MX, bs)
            X, AX, MX = X @ C, AX @ C, MX @ C
    return _finish(w[:k], X[:, :k], A, M, mdiag, it, converged, history, opts)


def _shift_solver(A, M, opts):
    S = sp.csc_matrix(A - opts.shift * M)
    if opts.inner == "direct":
        lu = spla.splu(S)
        return lambda B: _columns(lu.solve, B)
    T = make_preconditioner(A, M, opts.preconditioner if opts.preconditioner != "none" else "jacobi", opts.shift)
    inner_tol = min(1e-10, opts.tol * 1e-2)
    return lambda B: _columns(lambda b: linear_solve(S, b, inner_tol, precond=T), B)


def _shift_invert(A, M, opts, k, mdiag):
    n = A.shape[0]
    bs = min(n // 3, k + opts.block_extra)
    solve = _shift_solver(A, M, opts)
    X = _initial_block(n, bs, opts.seed, np.iscomplexobj(A.data))
    history = []
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        X = solve(M @ X)
        X, MX = _m_orthonormalize(X, M @ X)
        AX = A @ X
        w, C = _ritz(X.conj().T @ AX, X.conj().T @ MX, X.shape[1])
        X, AX, MX = X @ C, AX @ C, MX @ C
        res = _residual_norms(AX - MX * w, mdiag)
        history.append(res[:k].max())
        if np.all(res[:k] <= opts.tol):
            converged = True
            break
    return _finish(w[:k], X[:, :k], A, M, mdiag, it, converged, history, opts)


def linear_solve(A, rhs, tol: float = 1e-10, max_iter: int | None = None, precond=None):
    """Preconditioned conjugate gradients for SPD A; relative residual <= tol."""
    A = sp.csr_matrix(A)
    rhs = np.asarray(rhs)
    if np.linalg.norm(rhs) == 0:
        return np.zeros_like(rhs, dtype=np.result_type(A.dtype, rhs.dtype))
    if precond is None:
        inv = 1.0 / A.diagonal()
        Mop = spla.LinearOperator(A.shape, matvec=lambda v: inv * v.ravel(), dtype=A.dtype)
    else:
        Mop = spla.LinearOperator(A.shape, matvec=lambda v: precond(v.reshape(-1, 1)).ravel(), dtype=A.dtype)
    max_iter = max_iter or max(10 * A.shape[0], 1000)
    x, info = spla.cg(A, rhs, rtol=tol, atol=0.0, maxiter=max_iter, M=Mop)
    if info != 0:
        raise ConvergenceError(f"conjugate gradients stopped with info={info}")
    return x


def condition_estimate(A, tol: float = 1e-8, B=None, max_iter: int = 5000, seed: int = 0):
    """(lambda_min, lambda_max, kappa) of the SPD pencil (A, B) by inverse and direct power iteration."""
    A = sp.csc_matrix(A)
    n = A.shape[0]
    B = sp.identity(n, format="csc") if B is None else sp.csc_matrix(B)
    lu_a = spla.splu(A)
    lu_b = spla.splu(B)
    rng = np.random.default_rng(seed)

    def power(step, quotient):
        x = rng.standard_normal(n)
        lam_old = np.inf
        for _ in range(max_iter):
            x = step(x)
            x /= np.linalg.norm(x)
            lam = quotient(x)
            if abs(lam - lam_old) <= tol * abs(lam):
                return lam
            lam_old = lam
        raise ConvergenceError("power iteration did not converge")

    rq = lambda x: float(np.real(np.vdot(x, A @ x)) / np.real(np.vdot(x, B @ x)))
    lam_max = power(lambda x: lu_b.solve(A @ x), rq)
    lam_min = power(lambda x: lu_a.solve(B @ x), rq)
    if lam_min <= 0:
        raise NotSPDError("pencil is not positive definite")
    return lam_min, lam_max, lam_max / lam_min
