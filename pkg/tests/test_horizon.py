import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddiqc import horizon
from ddiqc.errors import DimensionError, DomainError, PremiseError
from ddiqc.iqc import MultiplierFactorization
from ddiqc.linalg import block_toeplitz, max_singular_value
from ddiqc.lti import (StateSpaceModel, hinf_norm_grid, impulse_response, random_stable_system,
                       series, stack_outputs)

HALF = StateSpaceModel([[0.5]], [[1.0]], [[1.0]], [[0.0]])
FIR = StateSpaceModel([[0.0]], [[1.0]], [[0.5]], [[1.0]])  # 1 + 0.5 z^-1


def test_minimal_realization_removes_redundant_states():
    g = random_stable_system(2, 1, 1, seed=1)
    extra = StateSpaceModel(np.diag([0.3]), np.zeros((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))
    from ddiqc.lti import parallel
    fat = parallel(g, extra, StateSpaceModel([[0.2]], [[1.0]], [[0.0]], [[0.0]]))
    red = horizon.minimal_realization(fat)
    assert red.n == 2 and red.minimal()
    w = np.linspace(0, np.pi, 9)
    np.testing.assert_allclose(red.freq_response(w), g.freq_response(w), atol=1e-12)


def test_cone_transform():
    g = random_stable_system(3, 1, 1, seed=2)
    C = 0.7
    gt = horizon.transformed_system(g, horizon.cone_filter([[C]]))
    h = impulse_response(g, 10)
    h[0] -= C
    np.testing.assert_allclose(impulse_response(gt, 10), h, atol=1e-12)


def test_cone_transform_multiplier_input():
    g = random_stable_system(2, 2, 2, seed=3)
    C = np.array([[0.1, 0.2], [0.3, 0.4]])
    gt = horizon.transformed_system(g, MultiplierFactorization.cone(C, 1.0))
    w = np.linspace(0, np.pi, 11)
    np.testing.assert_allclose(gt.freq_response(w), g.freq_response(w) - C, atol=1e-10)


def test_output_passivity_transform():
    g = random_stable_system(2, 1, 1, seed=4)
    gh = 2.0
    gt = horizon.transformed_system(g, horizon.output_passivity_filter(1, gh))
    w = np.linspace(0, np.pi, 11)
    np.testing.assert_allclose(gt.freq_response(w), gh - g.freq_response(w) / (2 * gh), atol=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_general_transform_pointwise(seed):
    g = random_stable_system(2, 1, 1, seed=seed)
    k = 0.3 / hinf_norm_grid(g)
    dyn = StateSpaceModel([[0.4]], [[1.0, 0.5]], [[0.2], [0.1]], [[1.0, k], [0.3, 1.0]])
    gt = horizon.transformed_system(g, dyn)
    w = np.linspace(0, np.pi, 64)
    ref = horizon.transformed_response(g, dyn, 1, w)
    np.testing.assert_allclose(gt.freq_response(w), ref, atol=1e-8)
    assert gt.stable()


def test_small_gain_violation():
    g = StateSpaceModel.static([[2.0]])
    psi = StateSpaceModel.static([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(PremiseError) as exc:
        horizon.transformed_system(g, psi)
    assert "2" in str(exc.value)


def test_singular_psi11():
    psi = StateSpaceModel.static([[0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DomainError):
        horizon.transformed_system(HALF, psi)


def test_nonsquare_psi11():
    psi = StateSpaceModel.static(np.eye(2)[:1])
    with pytest.raises(DimensionError):
        horizon.transformed_system(HALF, psi, n_r1=2)


@given(seed=st.integers(0, 200), C=st.floats(-3, 3), L=st.integers(1, 40))
def test_conic_gain_equivalence(seed, C, L):
    g = random_stable_system(3, 1, 1, seed=seed)
    T = block_toeplitz(impulse_response(g, L), L).matrix
    gt = horizon.transformed_system(g, horizon.cone_filter([[C]]), check_points=0)
    Tt = block_toeplitz(impulse_response(gt, L), L).matrix
    a = max_singular_value(T - C * np.eye(L))
    assert abs(a - max_singular_value(Tt)) <= 1e-9 * (1 + a)


def test_output_passivity_roundtrip():
    # strictly output passive: G = 0.5 + 0.2/(z - 0.3) has gain below 2 gh for gh = its gain
    g = StateSpaceModel([[0.3]], [[1.0]], [[0.2]], [[0.5]])
    gh = hinf_norm_grid(g)
    gt = horizon.transformed_system(g, horizon.output_passivity_filter(1, gh))
    assert hinf_norm_grid(gt) < gh


# -- FIR certificates -----------------------------------------------------------

def test_fir_bound_arithmetic():
    c = horizon.fir_infinite_gain_bound(1.4, 40, 1)
    assert c.gamma_inf == pytest.approx(2.8)
    assert c.valid and c.det_premise == "assumed"
    assert c.gamma_inf >= c.gamma_L


def test_fir_bound_premise():
    with pytest.raises(PremiseError):
        horizon.fir_infinite_gain_bound(1.0, 19, 1)
    c = horizon.fir_infinite_gain_bound(1.0, 20, 1)
    assert c.gamma_inf == float("inf") and not c.valid


def test_fir_bound_with_model():
    s = horizon.toeplitz_norm(FIR, 40)
    c = horizon.fir_infinite_gain_bound(s, 40, 1, FIR)
    assert c.det_premise == "verified" and c.det_min == pytest.approx(0.5)
    assert c.gamma_inf >= hinf_norm_grid(FIR) == pytest.approx(1.5)
    zero = StateSpaceModel([[0.0]], [[1.0]], [[1.0]], [[1.0]])  # 1 + z^-1 vanishes at z = -1
    assert horizon.fir_infinite_gain_bound(1.0, 40, 1, zero).det_premise == "violated"


@given(seed=st.integers(0, 100), l=st.integers(1, 3), k=st.integers(0, 3))
def test_certificate_consistency(seed, l, k):
    taps = np.random.default_rng(seed).standard_normal(l + 1)
    g = StateSpaceModel(np.eye(l, k=-1), np.eye(l)[:, :1], taps[None, 1:], [[taps[0]]])
    L = 20 * l + 1 + 10 * k
    c = horizon.fir_infinite_gain_bound(horizon.toeplitz_norm(g, L), L, l)
    assert hinf_norm_grid(g) <= c.gamma_inf + 1e-8


def test_finite_section_lower_bound():
    for L in (20, 40, 80, 160):
        assert (1 - 20 / L) * 1.5 <= horizon.toeplitz_norm(FIR, L)


# -- convergence -------------------------------------------------------------------

def test_curve_first_order():
    hs = [4 * 2 ** k for k in range(8)]
    curve, fit = horizon.convergence_diagnostic(HALF, hs)
    vals = [s for _, s in curve]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - 2.0) <= 0.02
    assert fit.slope <= -1.5


def test_curve_static():
    g = StateSpaceModel.static([[1.0, 2.0], [0.0, 1.0]])
    curve, fit = horizon.convergence_diagnostic(g, [1, 5, 10])
    s = np.linalg.svd(g.D, compute_uv=False)[0]
    for _, v in curve:
        assert v == pytest.approx(s, rel=1e-12)
    assert fit.slope is None and fit.final_gap == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_curve_random_siso_slope(seed):
    g = random_stable_system(3, 1, 1, seed=seed)
    curve, fit = horizon.convergence_diagnostic(g, [16, 32, 64, 128, 256, 512])
    assert fit.slope <= -1.5
    assert curve[-1][1] <= fit.hinf + 1e-6


def test_curve_errors():
    with pytest.raises(DomainError):
        horizon.toeplitz_norm_curve(StateSpaceModel([[1.1]], [[1]], [[1]], [[0]]), [2, 4])
    with pytest.raises(ValueError):
        horizon.toeplitz_norm_curve(HALF, [4, 2])
