"""Dense linear-algebra kernels shared by all analysis modules.

Structured builders (Hankel, lower block-Toeplitz), orthonormal kernel
bases and the symmetric eigenvalue / singular value routines used by the
semidefiniteness tests.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import ArgumentError, ConditioningError, DimensionError, NumericError

EPS = np.finfo(float).eps


def default_rank_tol(shape):
    """Relative singular-value threshold used for numerical rank decisions."""
    return max(shape) * EPS * 64


def _check_finite(A, name="matrix"):
    if not np.all(np.isfinite(A)):
        raise NumericError(f"{name} contains non-finite entries")


def as_signal(x):
    """Coerce a sequence of samples to a float array of shape ``(N, q)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionError(f"signal must be 1-D or 2-D, got ndim={x.ndim}")
    return x


@dataclass(frozen=True)
class HankelView:
    """Depth-``L`` Hankel matrix of a ``q``-channel signal of length ``N``."""

    matrix: np.ndarray
    block_size: int
    depth: int
    source_length: int

    @property
    def width(self):
        return self.source_length - self.depth + 1

    def block(self, i, j):
        q = self.block_size
        return self.matrix[i * q:(i + 1) * q, j]


@dataclass(frozen=True)
class BlockToeplitzView:
    """Finite section of a causal block-Toeplitz operator."""

    matrix: np.ndarray
    blocks: np.ndarray  # (L, n_r, q)
    depth: int

    def block(self, i, j):
        nr, q = self.blocks.shape[1:]
        return self.matrix[i * nr:(i + 1) * nr, j * q:(j + 1) * q]


@dataclass(frozen=True)
class KernelBasis:
    """Orthonormal basis of the null space of a matrix."""

    basis: np.ndarray
    rank: int
    rank_tol: float
    source_shape: tuple

    @property
    def dim(self):
        return self.basis.shape[1]


def hankel_matrix(x, L):
    """Build the depth-``L`` Hankel matrix of ``x``.

    Parameters
    ----------
    x : array_like, shape (N,) or (N, q)
        Samples ``x_0 .. x_{N-1}``.
    L : int
        Number of block rows.

    Returns
    -------
    HankelView
        Column ``j`` is the stacked window ``(x_j, ..., x_{j+L-1})``.
    """
    x = as_signal(x)
    N, q = x.shape
    if L < 1:
        raise ArgumentError(f"Hankel depth must be >= 1, got L={L}")
    if L > N:
        raise DimensionError(f"Hankel depth L={L} exceeds signal length N={N}")
    return HankelView(_kernels.hankel(x, L), q, L, N)


def _as_blocks(g):
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None, None]
    elif g.ndim == 2:
        raise DimensionError("impulse blocks must be a 1-D scalar sequence or a 3-D array")
    if g.ndim != 3 or g.shape[0] == 0:
        raise DimensionError("need at least one impulse block")
    return g


def stack_blocks(g):
    """Validate a list of equally shaped impulse blocks into a (K, nr, q) array."""
    if isinstance(g, np.ndarray):
        return _as_blocks(g)
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in g]
    if not blocks:
        raise DimensionError("need at least one impulse block")
    shape = blocks[0].shape
    for b in blocks:
        if b.shape != shape:
            raise DimensionError(f"inconsistent impulse block shapes {shape} vs {b.shape}")
    return np.stack(blocks)


def block_toeplitz(g, L):
    """Lower block-triangular Toeplitz matrix ``T_L(g)``.

    Block ``(i, j)`` is ``g[i-j]`` for ``i >= j`` and zero otherwise; blocks
    beyond ``len(g)`` are zero.
    """
    g = stack_blocks(g)
    if L < 1:
        raise ArgumentError(f"Toeplitz depth must be >= 1, got L={L}")
    K, nr, q = g.shape
    full = np.zeros((L, nr, q))
    full[:min(K, L)] = g[:L]
    T = np.zeros((nr * L, q * L))
    for d in range(L):
        if not full[d].any():
            continue
        for j in range(L - d):
            i = j + d
            T[i * nr:(i + 1) * nr, j * q:(j + 1) * q] = full[d]
    return BlockToeplitzView(T, full, L)


def toeplitz_apply(g, X, L):
    """Compute ``T_L(g) @ X`` without forming ``T_L(g)``."""
    g = stack_blocks(g)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    q = g.shape[2]
    if X.shape[0] != q * L:
        raise DimensionError(f"operand has {X.shape[0]} rows, expected q*L={q * L}")
    return _kernels.block_convolve(g[:L], X, L)


def blockwise_quadratic(R, M, L):
    """Return ``R.T @ kron(I_L, M) @ R`` by applying ``M`` per block."""
    nr = M.shape[0]
    c = R.shape[1]
    Rb = R.reshape(L, nr, c)
    MR = np.einsum("ij,tjc->tic", M, Rb, optimize=True).reshape(L * nr, c)
    return symmetrize(R.T @ MR)


def symmetrize(S):
    return 0.5 * (S + S.T)


def kernel_basis(A, rank_tol=None):
    """Orthonormal basis of ``ker A`` from the SVD.

    Singular values below ``rank_tol * sigma_max`` count as zero. The default
    tolerance is :func:`default_rank_tol`.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _check_finite(A)
    r, n = A.shape
    if rank_tol is None:
        rank_tol = default_rank_tol(A.shape)
    if A.size == 0:
        return KernelBasis(np.eye(n), 0, rank_tol, (r, n))
    _, s, Vt = sla.svd(A, full_matrices=True, lapack_driver="gesdd")
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    return KernelBasis(Vt[rank:].T.copy(), rank, rank_tol, (r, n))


def numerical_rank(A, rank_tol=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0
    s = sla.svd(A, compute_uv=False)
    if rank_tol is None:
        rank_tol = default_rank_tol(A.shape)
    return int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0


def min_eigenpair_sym(S):
    """Algebraically smallest eigenpair of a symmetric matrix."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    _check_finite(S)
    S = symmetrize(S)
    w, v = sla.eigh(S, subset_by_index=[0, 0])
    return float(w[0]), v[:, 0]


def min_eigenvalue_sym(S):
    S = symmetrize(np.atleast_2d(np.asarray(S, dtype=float)))
    _check_finite(S)
    if S.shape[0] == 0:
        return np.inf
    return float(sla.eigh(S, eigvals_only=True, subset_by_index=[0, 0])[0])


def max_singular_value(A):
    """Largest singular value (spectral norm) of ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _check_finite(A)
    if A.size == 0:
        return 0.0
    return float(sla.svd(A, compute_uv=False)[0])


def gen_eig_max(A, B, pd_tol=0.0):
    """Largest generalized eigenpair of ``A v = lambda B v``.

    ``B`` is factored by Cholesky; a failed factorization (or smallest
    eigenvalue ``<= pd_tol``) raises :class:`ConditioningError`. The returned
    eigenvector is ``B``-normalized.
    """
    A = symmetrize(np.atleast_2d(np.asarray(A, dtype=float)))
    B = symmetrize(np.atleast_2d(np.asarray(B, dtype=float)))
    _check_finite(A, "A")
    _check_finite(B, "B")
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    try:
        R = sla.cholesky(B, lower=False)
    except sla.LinAlgError:
        lmin = min_eigenvalue_sym(B)
        raise ConditioningError(
            f"B is not positive definite (min eigenvalue {lmin:.3e})", lmin
        ) from None
    if pd_tol > 0:
        lmin = min_eigenvalue_sym(B)
        if lmin <= pd_tol:
            raise ConditioningError(
                f"B is not positive definite (min eigenvalue {lmin:.3e} <= {pd_tol:.3e})", lmin
            )
    # R^-T A R^-1
    X = sla.solve_triangular(R, A, trans="T", lower=False)
    X = sla.solve_triangular(R, X.T, trans="T", lower=False)
    X = symmetrize(X)
    n = X.shape[0]
    w, y = sla.eigh(X, subset_by_index=[n - 1, n - 1])
    v = sla.solve_triangular(R, y[:, 0], lower=False)
    return float(w[0]), v
