"""Pure-Python (NumPy) kernels.

Reference implementations of the hot loops. ``_ckernels.pyx`` mirrors these
signatures exactly; :mod:`ddiqc._kernels` picks one at import time.
"""
import numpy as np

BACKEND = "python"


def hankel(x, L):
    """Stack all length-``L`` windows of ``x`` (shape ``(N, q)``) as columns."""
    x = np.ascontiguousarray(x, dtype=float)
    N, q = x.shape
    cols = N - L + 1
    out = np.empty((q * L, cols))
    for i in range(L):
        out[i * q:(i + 1) * q, :] = x[i:i + cols, :].T
    return out


def block_convolve(g, X, L):
    """Apply the lower block-triangular Toeplitz operator of ``g`` to ``X``.

    ``g`` has shape ``(K, nr, q)``, ``X`` has shape ``(q*L, c)``; returns
    ``(nr*L, c)``. Blocks with lag ``>= K`` are zero.
    """
    g = np.asarray(g, dtype=float)
    K, nr, q = g.shape
    c = X.shape[1]
    Xb = np.asarray(X, dtype=float).reshape(L, q, c)
    out = np.zeros((L, nr, c))
    for d in range(min(K, L)):
        if not g[d].any():
            continue
        out[d:] += np.einsum("ij,tjc->tic", g[d], Xb[:L - d], optimize=True)
    return out.reshape(nr * L, c)


def ss_simulate(A, B, C, D, u, x0):
    """Run ``x+ = Ax + Bu, y = Cx + Du`` from ``x0``; ``u`` is ``(N, m)``."""
    N = u.shape[0]
    p = D.shape[0]
    y = u @ D.T
    if A.shape[0] == 0:
        return y.reshape(N, p)
    x = np.array(x0, dtype=float)
    Bu = u @ B.T
    xs = np.empty((N, A.shape[0]))
    for k in range(N):
        xs[k] = x
        x = A @ x + Bu[k]
    return y + xs @ C.T
