import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddiqc.errors import ArgumentError, DegenerateDataError, DimensionError, DomainError
from ddiqc.iqc import (IqcForm, MultiplierFactorization, NoiseModel, NoiseRelaxation,
                       add_measurement_noise, build_data_matrices, model_oracle_l_iqc,
                       model_quadratic_form, noise_margin_delta, psd_decision,
                       separated_permutation, verify_l_iqc, verify_l_iqc_noisy)
from ddiqc.linalg import min_eigenvalue_sym
from ddiqc.lti import StateSpaceModel, Trajectory, random_stable_system, simulate

from helpers import make_data, random_case, toeplitz_gain

IDENTITY = StateSpaceModel.static([[1.0]])


def identity_data(L=6, nu=1, N=40, seed=0):
    u = np.random.default_rng(seed).uniform(-1, 1, N)
    return build_data_matrices(Trajectory(u, u), L, nu)


# -- multipliers ------------------------------------------------------------------

def test_multiplier_validation():
    with pytest.raises(DimensionError):
        MultiplierFactorization(StateSpaceModel.static(np.eye(2)), np.eye(3))
    with pytest.raises(ArgumentError):
        MultiplierFactorization(StateSpaceModel.static(np.eye(2)), [[1, 1], [0, 1]])
    unstable = StateSpaceModel([[1.2]], [[1, 0]], [[1], [0]], np.zeros((2, 2)))
    with pytest.raises(DomainError):
        MultiplierFactorization(unstable, np.eye(2))


def test_filtered_gain_multiplier_shape():
    mult = MultiplierFactorization.filtered_gain(2, 1, 1.5, 0.3, 3)
    assert mult.psi.m == 3 and mult.psi.p == 9 and mult.M.shape == (9, 9)
    assert mult.psi.stable()


# -- data matrices -------------------------------------------------------------------

def test_identity_kernel_example():
    u = np.array([1.0, 2.0, 3.0, 4.0])
    d = build_data_matrices(Trajectory(u, u), 2, 1)
    np.testing.assert_array_equal(d.Hw[:2], [[1, 2, 3], [1, 2, 3]])
    K = d.kernel
    assert K.shape == (3, 2)
    np.testing.assert_allclose(K.T @ K, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(np.array([1, 2, 3]) @ K, 0, atol=1e-12)
    # brute-force null space from the two-vector basis
    ref = np.array([[2.0, -1, 0], [3, 0, -1]]).T
    P = K @ K.T
    np.testing.assert_allclose(P @ ref, ref, atol=1e-12)


def test_nu_zero_is_unrestricted():
    rng = np.random.default_rng(0)
    u, y = rng.standard_normal((9, 1)), rng.standard_normal((9, 1))
    d = build_data_matrices(Trajectory(u, y), 5, 0)
    np.testing.assert_array_equal(d.V, np.eye(5))
    from ddiqc.linalg import hankel_matrix
    np.testing.assert_array_equal(d.Hu, hankel_matrix(u, 5).matrix)


def test_data_errors():
    t = Trajectory(np.ones((5, 1)), np.ones((5, 1)))
    with pytest.raises(ArgumentError):
        build_data_matrices(t, 3, 3)
    with pytest.raises(ArgumentError):
        build_data_matrices(t, 6, 1)
    rng = np.random.default_rng(1)
    t = Trajectory(rng.standard_normal((12, 1)), rng.standard_normal((12, 1)))
    with pytest.raises(DegenerateDataError):
        build_data_matrices(t, 6, 4)  # 7 columns, 8 prefix rows


@given(seed=st.integers(0, 200), nu=st.integers(0, 4))
def test_data_invariants(seed, nu):
    g = random_stable_system(3, 2, 1, seed=seed)
    L = nu + 6
    _, d = make_data(g, L, nu, seed)
    q = d.m + d.p
    scale = 1 + np.abs(d.Hw).max()
    assert np.abs(d.Hw[: q * nu] @ d.V).max(initial=0) <= 1e-10 * scale
    assert np.linalg.matrix_rank(np.vstack([d.Hu, d.Hy])) == d.dim
    np.testing.assert_array_equal(d.HwV[d.perm], np.vstack([d.Hu, d.Hy]))
    np.testing.assert_allclose(d.V.T @ d.V, np.eye(d.dim), atol=1e-10)


def test_columns_are_trajectories():
    g = random_stable_system(3, 1, 2, seed=4)
    _, d = make_data(g, 12, 3, seed=2)
    for j in range(d.dim):
        col = d.HwV[:, j].reshape(12, 3)
        u, y = col[:, :1], col[:, 1:]
        # zero prefix and zero state at k = 0 -> pure convolution
        np.testing.assert_allclose(simulate(g, u), y, atol=1e-9 * (1 + np.abs(col).max()))


def test_separated_permutation():
    perm = separated_permutation(2, 1, 3)
    # interleaved rows: u0a u0b y0 u1a u1b y1 ...
    np.testing.assert_array_equal(perm, [0, 1, 3, 4, 6, 7, 2, 5, 8])


# -- verification examples --------------------------------------------------------------

def test_identity_gain_examples():
    d = identity_data()
    assert verify_l_iqc(d, MultiplierFactorization.gain(1, 1, 1.0)).decision
    rep = verify_l_iqc(d, MultiplierFactorization.gain(1, 1, 0.9))
    assert not rep.decision and rep.min_eigenvalue < 0
    assert rep.decision == (rep.min_eigenvalue >= rep.threshold - rep.abs_tol)


def test_oracle_examples():
    mult = MultiplierFactorization.gain(1, 1, 1.0)
    assert model_oracle_l_iqc(IDENTITY, mult, 10)
    delay = StateSpaceModel([[0.0]], [[1.0]], [[1.0]], [[0.0]])
    assert model_oracle_l_iqc(delay, mult, 10)
    assert not model_oracle_l_iqc(IDENTITY, MultiplierFactorization.gain(1, 1, 0.9), 10)


def test_dimension_mismatch():
    d = identity_data()
    with pytest.raises(DimensionError):
        verify_l_iqc(d, MultiplierFactorization.gain(2, 1, 1.0))


@pytest.mark.parametrize("seed", range(5))
def test_soundness_gain(seed):
    g = random_stable_system(2, 1, 1, seed=seed)
    L, nu = 25, 3
    _, d = make_data(g, L, nu, seed)
    gam = toeplitz_gain(g, L - nu)
    for f in (0.99, 1.01):
        mult = MultiplierFactorization.gain(1, 1, f * gam)
        assert verify_l_iqc(d, mult).decision == model_oracle_l_iqc(g, mult, L - nu) == (f > 1)


@pytest.mark.parametrize("seed", range(4))
def test_soundness_dynamic_multiplier(seed):
    g = random_stable_system(2, 1, 1, seed=seed)
    L, nu = 20, 2
    _, d = make_data(g, L, nu, seed)
    h = L - nu
    # model-based threshold for the filtered gain family M(gamma) = M0 + gamma^2 M1
    m0 = model_quadratic_form(g, MultiplierFactorization.filtered_gain(1, 1, 0.0, 0.4, 2), h)
    m1 = model_quadratic_form(g, MultiplierFactorization.filtered_gain(1, 1, 1.0, 0.4, 2), h) - m0
    from ddiqc.linalg import gen_eig_max
    gam = np.sqrt(gen_eig_max(-m0, m1)[0])
    for f in (0.98, 1.02):
        mult = MultiplierFactorization.filtered_gain(1, 1, f * gam, 0.4, 2)
        assert verify_l_iqc(d, mult).decision == model_oracle_l_iqc(g, mult, h) == (f > 1)


def test_necessity_without_pe():
    g = random_stable_system(2, 1, 1, seed=9)
    N, L, nu = 60, 8, 2
    u = np.ones((N, 1))
    u[:5] = 0  # the rest-to-step transient is the only information
    d = build_data_matrices(Trajectory(u, simulate(g, u)), L, nu)
    assert not d.persistently_exciting
    hits = 0
    for gam in np.linspace(0.05, 3.0, 30):
        mult = MultiplierFactorization.gain(1, 1, gam)
        if not verify_l_iqc(d, mult).decision:
            hits += 1
            assert not model_oracle_l_iqc(g, mult, L - nu)
    assert hits > 0


@given(seed=st.integers(0, 100))
def test_ordering_invariance(seed):
    g = random_stable_system(2, 2, 1, seed=seed)
    _, d = make_data(g, 10, 2, seed)
    mult = MultiplierFactorization.gain(2, 1, 1.3)
    S = IqcForm(d, mult.psi).matrix(mult.M)
    sep = d.separated()
    Mfull = np.kron(np.eye(d.L), mult.M)
    Pm = np.eye(len(d.perm))[d.perm]
    S2 = sep.T @ (Pm @ Mfull @ Pm.T) @ sep
    assert abs(min_eigenvalue_sym(S) - min_eigenvalue_sym(S2)) <= 1e-10 * (1 + np.abs(S).max())


@given(seed=st.integers(0, 100), nu=st.integers(1, 4))
def test_monotone_in_nu(seed, nu):
    g = random_stable_system(2, 1, 1, seed=seed)
    L = 14
    traj, _ = make_data(g, L, nu, seed, N=80)
    gam = toeplitz_gain(g, L - nu) * 1.001
    mult = MultiplierFactorization.gain(1, 1, gam)
    if verify_l_iqc(build_data_matrices(traj, L, nu), mult).decision:
        assert verify_l_iqc(build_data_matrices(traj, L, nu + 1), mult).decision


def test_partial_sums_small():
    g = random_stable_system(2, 1, 1, seed=3)
    L = 12
    mult = MultiplierFactorization.gain(1, 1, 1.001 * toeplitz_gain(g, L))
    assert model_oracle_l_iqc(g, mult, L)
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = rng.standard_normal((L, 1))
        y = simulate(g, u)
        r = mult.psi.D @ np.hstack([u, y]).T
        s = np.cumsum(np.einsum("ik,ij,jk->k", r, mult.M, r))
        assert s.min() >= -1e-8 * (1 + np.abs(r).max() ** 2)


# -- decisions and noise ------------------------------------------------------------------

def test_psd_decision_rule():
    d, lmin, tol = psd_decision(np.diag([1.0, -1e-12]))
    assert d and lmin == pytest.approx(-1e-12)
    assert not psd_decision(np.diag([1.0, -1e-3]))[0]
    assert psd_decision(np.diag([1.0, -1.0]), threshold=-2.0)[0]


def test_noisy_zero_delta_matches():
    d = identity_data()
    for gam in (0.9, 1.0, 1.1):
        mult = MultiplierFactorization.gain(1, 1, gam)
        a, b = verify_l_iqc(d, mult), verify_l_iqc_noisy(d, mult, 0.0)
        assert a.decision == b.decision and a.min_eigenvalue == b.min_eigenvalue


def test_noisy_negative_delta_accepts():
    d = identity_data()
    mult = MultiplierFactorization.gain(1, 1, 0.5)
    rep = verify_l_iqc(d, mult)
    assert verify_l_iqc_noisy(d, mult, rep.min_eigenvalue - 1.0).decision
    with pytest.raises(Exception):
        verify_l_iqc_noisy(d, mult, float("nan"))


def test_noise_delta_examples():
    u = np.random.default_rng(3).uniform(-1, 1, 60)
    traj = Trajectory(u, u)
    mult = MultiplierFactorization.gain(1, 1, 1.0)
    zero = NoiseModel("multiplicative-uniform", 0.0, 5, 1)
    assert noise_margin_delta(traj, zero, mult, 10, 2) == 0.0
    noise = NoiseModel("multiplicative-uniform", 0.1, 10, 42)
    a = noise_margin_delta(traj, noise, mult, 10, 2)
    b = noise_margin_delta(traj, noise, mult, 10, 2)
    assert a == b
    assert a < 0
    # K = 1 equals a single direct eigenvalue
    one = NoiseModel("multiplicative-uniform", 0.1, 1, 42)
    d = build_data_matrices(traj, 10, 2)
    relax = NoiseRelaxation(d, mult.psi, one)
    S0 = IqcForm(d, mult.psi).matrix(mult.M)
    from ddiqc.linalg import blockwise_quadratic
    direct = min_eigenvalue_sym(blockwise_quadratic(relax.R[0], mult.M, 10) - S0)
    assert noise_margin_delta(traj, one, mult, 10, 2) == pytest.approx(direct, abs=0)


def test_noise_parallel_matches_serial():
    u = np.random.default_rng(3).uniform(-1, 1, 60)
    traj = Trajectory(u, 0.5 * u)
    mult = MultiplierFactorization.gain(1, 1, 0.7)
    noise = NoiseModel("additive-gaussian", 0.05, 6, 9)
    assert noise_margin_delta(traj, noise, mult, 10, 2, workers=1) == \
        noise_margin_delta(traj, noise, mult, 10, 2, workers=3)


def test_noise_model_validation():
    with pytest.raises(ArgumentError):
        NoiseModel("pink", 0.1, 1, 0)
    with pytest.raises(ArgumentError):
        NoiseModel("additive-gaussian", -0.1, 1, 0)
    with pytest.raises(ArgumentError):
        NoiseModel("additive-gaussian", 0.1, 0, 0)


def test_measurement_noise_seeded():
    traj = Trajectory(np.ones((5, 1)), np.ones((5, 1)))
    noise = NoiseModel("multiplicative-uniform", 0.2, 1, 0)
    a, b = add_measurement_noise(traj, noise, 3), add_measurement_noise(traj, noise, 3)
    np.testing.assert_array_equal(a.y, b.y)
    assert np.all(np.abs(a.y - 1) <= 0.2)
    np.testing.assert_array_equal(a.u, traj.u)
