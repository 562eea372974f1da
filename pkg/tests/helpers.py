"""Shared builders for tests."""
import numpy as np

from ddiqc.iqc import build_data_matrices
from ddiqc.linalg import block_toeplitz, max_singular_value
from ddiqc.lti import Trajectory, impulse_response, random_stable_system, simulate


def pe_length(m, L, n, margin=10):
    return (m + 1) * (L + n) - 1 + margin


def make_data(model, L, nu, seed=0, N=None, x0=None):
    N = N or pe_length(model.m, L, model.n)
    u = np.random.default_rng(seed).uniform(-1, 1, (N, model.m))
    traj = Trajectory(u, simulate(model, u, x0))
    return traj, build_data_matrices(traj, L, nu)


def toeplitz_gain(model, h):
    return max_singular_value(block_toeplitz(impulse_response(model, h), h).matrix)


def random_case(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(1, 6))
    m = int(rng.integers(1, 3))
    return random_stable_system(n, m, m, seed=seed), n
