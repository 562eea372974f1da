import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddiqc.errors import ArgumentError, ConditioningError, DimensionError, NumericError
from ddiqc.linalg import (block_toeplitz, blockwise_quadratic, gen_eig_max, hankel_matrix,
                          kernel_basis, max_singular_value, min_eigenpair_sym, numerical_rank,
                          stack_blocks, toeplitz_apply)


def _convolve(g, u):
    """Direct causal convolution ``y_k = sum_j g_{k-j} u_j``."""
    N = u.shape[0]
    y = np.zeros((N, g.shape[1]))
    for k in range(N):
        for j in range(k + 1):
            if k - j < g.shape[0]:
                y[k] += g[k - j] @ u[j]
    return y


# -- hankel ---------------------------------------------------------------------

def test_hankel_scalar_example():
    H = hankel_matrix([1, 2, 3, 4], 2)
    np.testing.assert_array_equal(H.matrix, [[1, 2, 3], [2, 3, 4]])
    assert (H.block_size, H.depth, H.width, H.source_length) == (1, 2, 3, 4)


def test_hankel_constant_signal_rank():
    v = np.array([1.0, -2.0])
    H = hankel_matrix(np.tile(v, (3, 1)), 2).matrix
    np.testing.assert_array_equal(H[:2], H[2:])
    assert numerical_rank(H) <= 2


def test_hankel_random_rank():
    x = np.random.default_rng(0).uniform(-1, 1, 13)
    H = hankel_matrix(x, 4).matrix
    s = np.linalg.svd(H, compute_uv=False)
    assert H.shape == (4, 10)
    assert np.sum(s > s[0] * 1e-12) == 4
    assert numerical_rank(H) == 4


def test_hankel_errors():
    with pytest.raises(DimensionError):
        hankel_matrix([1, 2], 3)
    with pytest.raises(ArgumentError):
        hankel_matrix([1, 2], 0)


@given(N=st.integers(3, 30), q=st.integers(1, 3), seed=st.integers(0, 999), data=st.data())
def test_hankel_block_definition_and_shift(N, q, seed, data):
    L = data.draw(st.integers(1, N - 2))
    x = np.random.default_rng(seed).standard_normal((N, q))
    H = hankel_matrix(x, L)
    for i in range(L):
        for j in range(N - L + 1):
            np.testing.assert_array_equal(H.block(i, j), x[i + j])
    H1 = hankel_matrix(x, L + 1).matrix
    np.testing.assert_array_equal(H1[q:], hankel_matrix(x[1:], L).matrix)
    np.testing.assert_array_equal(H1[q:, :-1], hankel_matrix(x[1:-1], L).matrix)


# -- toeplitz -------------------------------------------------------------------

def test_toeplitz_scalar_example():
    T = block_toeplitz([2, -1], 3).matrix
    np.testing.assert_array_equal(T, [[2, 0, 0], [-1, 2, 0], [0, -1, 2]])


def test_toeplitz_static_is_block_diagonal():
    g0 = np.array([[1.0, 2.0], [3.0, 4.0]])
    T = block_toeplitz([g0], 2).matrix
    np.testing.assert_array_equal(T, np.kron(np.eye(2), g0))


def test_toeplitz_inconsistent_blocks():
    with pytest.raises(DimensionError):
        block_toeplitz([np.eye(2), np.eye(3)], 2)


@given(L=st.integers(1, 64), K=st.integers(1, 10), seed=st.integers(0, 999))
def test_toeplitz_equals_convolution(L, K, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((K, 2, 2))
    u = rng.standard_normal((L, 2))
    T = block_toeplitz(g, L)
    y = (T.matrix @ u.reshape(-1)).reshape(L, 2)
    ref = _convolve(g, u)
    scale = 1 + np.abs(ref).max()
    assert np.abs(y - ref).max() <= 1e-12 * scale
    yk = toeplitz_apply(g, u.reshape(-1, 1), L).reshape(L, 2)
    assert np.abs(yk - ref).max() <= 1e-12 * scale
    for i in range(L):
        for j in range(i + 1, L):
            assert not T.block(i, j).any()


def test_stack_blocks_roundtrip():
    g = np.arange(12.0).reshape(3, 2, 2)
    np.testing.assert_array_equal(stack_blocks(list(g)), g)
    with pytest.raises(DimensionError):
        stack_blocks([])


def test_blockwise_quadratic_matches_kron(rng):
    L, q, c = 5, 3, 4
    R = rng.standard_normal((q * L, c))
    M = rng.standard_normal((q, q))
    M = M + M.T
    ref = R.T @ np.kron(np.eye(L), M) @ R
    np.testing.assert_allclose(blockwise_quadratic(R, M, L), ref, rtol=1e-12, atol=1e-12)


# -- kernels ---------------------------------------------------------------------

def test_kernel_basis_simple():
    K = kernel_basis(np.array([[1.0, 0.0]]))
    assert K.dim == 1
    np.testing.assert_allclose(np.abs(K.basis[:, 0]), [0, 1], atol=1e-15)


def test_kernel_basis_full_rank():
    K = kernel_basis(np.eye(3))
    assert K.basis.shape == (3, 0)
    assert K.rank == 3


def test_kernel_basis_outer_product(rng):
    A = np.outer(rng.standard_normal(5), rng.standard_normal(5))
    K = kernel_basis(A)
    assert K.dim == 4
    np.testing.assert_allclose(K.basis.T @ K.basis, np.eye(4), atol=1e-10)
    smax = np.linalg.svd(A, compute_uv=False)[0]
    assert np.abs(A @ K.basis).max() <= K.rank_tol * (1 + smax)


@given(r=st.integers(1, 8), n=st.integers(1, 8), k=st.integers(1, 8), seed=st.integers(0, 999))
def test_kernel_basis_invariants(r, n, k, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((r, k)) @ rng.standard_normal((k, n))
    K = kernel_basis(A)
    assert K.dim == n - numerical_rank(A)
    np.testing.assert_allclose(K.basis.T @ K.basis, np.eye(K.dim), atol=1e-10)
    smax = np.linalg.svd(A, compute_uv=False)[0]
    assert np.abs(A @ K.basis).max(initial=0) <= K.rank_tol * (1 + smax)


@given(N=st.integers(8, 30), nu=st.integers(1, 3), seed=st.integers(0, 999))
def test_kernel_of_prefix_zeroes_prefix(N, nu, seed):
    x = np.random.default_rng(seed).standard_normal((N, 2))
    L = nu + 3
    H = hankel_matrix(x, L).matrix
    K = kernel_basis(H[: 2 * nu])
    scale = 1 + np.abs(H).max()
    assert np.abs((H @ K.basis)[: 2 * nu]).max(initial=0) <= 1e-10 * scale


# -- eigenvalues -------------------------------------------------------------------

def test_min_eigenpair_diag():
    lam, v = min_eigenpair_sym(np.diag([3.0, -1.0]))
    assert lam == pytest.approx(-1.0)
    np.testing.assert_allclose(np.abs(v), [0, 1], atol=1e-14)


def test_min_eigenpair_zero():
    lam, v = min_eigenpair_sym(np.zeros((3, 3)))
    assert lam == 0.0
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_min_eigenpair_random(rng):
    A = rng.standard_normal((50, 50))
    S = A + A.T
    lam, v = min_eigenpair_sym(S)
    assert lam == pytest.approx(np.linalg.eigvalsh(S)[0], abs=1e-10)
    assert np.linalg.norm(S @ v - lam * v) <= 1e-8 * (1 + np.linalg.norm(S))


def test_eig_rejects_nonfinite():
    with pytest.raises(NumericError):
        min_eigenpair_sym(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(NumericError):
        max_singular_value(np.array([[np.inf]]))


def test_max_singular_value_examples():
    assert max_singular_value(np.diag([2.0, 5.0])) == pytest.approx(5.0, rel=1e-12)
    assert max_singular_value(np.zeros((3, 2))) == 0.0


def test_max_singular_value_fir_bounds():
    s = max_singular_value(block_toeplitz([1.0, 0.5], 40).matrix)
    assert (1 - 20 / 40) * 1.5 < s <= 1.5


@given(g=st.lists(st.floats(-2, 2), min_size=1, max_size=6), L=st.integers(1, 30))
def test_finite_sections_nondecreasing(g, L):
    a = max_singular_value(block_toeplitz(g, L).matrix)
    b = max_singular_value(block_toeplitz(g, L + 1).matrix)
    assert b >= a - 1e-12 * (1 + a)


def test_gen_eig_examples():
    assert gen_eig_max(np.diag([4.0, 1.0]), np.eye(2))[0] == pytest.approx(4.0)
    assert gen_eig_max(np.diag([4.0, 1.0]), np.diag([2.0, 1.0]))[0] == pytest.approx(2.0)


def test_gen_eig_not_pd():
    with pytest.raises(ConditioningError) as exc:
        gen_eig_max(np.eye(2), np.diag([1.0, -1.0]))
    assert exc.value.min_eigenvalue == pytest.approx(-1.0)


@given(n=st.integers(1, 6), seed=st.integers(0, 999))
def test_gen_eig_matches_explicit_inverse(n, seed):
    rng = np.random.default_rng(seed)
    M, N_ = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    A, B = M.T @ M, N_.T @ N_ + np.eye(n)
    lam, v = gen_eig_max(A, B)
    ref = np.max(np.linalg.eigvals(np.linalg.solve(B, A)).real)
    assert lam == pytest.approx(ref, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(A @ v, lam * B @ v, atol=1e-8 * (1 + lam))


@given(n=st.integers(1, 6), seed=st.integers(0, 999))
def test_gen_eig_congruence_invariance(n, seed):
    rng = np.random.default_rng(seed)
    M, N_ = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    A, B = M.T @ M, N_.T @ N_ + np.eye(n)
    T = rng.standard_normal((n, n)) + 3 * np.eye(n)
    if np.linalg.cond(T) > 1e3:
        return
    a = gen_eig_max(A, B)[0]
    b = gen_eig_max(T.T @ A @ T, T.T @ B @ T)[0]
    assert b == pytest.approx(a, rel=1e-8)
