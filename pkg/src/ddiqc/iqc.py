"""Data-based verification of finite-horizon IQCs.

A measured trajectory is turned into a Hankel matrix whose columns, once
restricted to windows that start from rest, span zero-initial-condition
trajectories of the unknown system. An IQC over the shortened horizon holds
iff a single data-dependent quadratic form is positive semidefinite.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ArgumentError, DegenerateDataError, DimensionError, DomainError, NumericError
from .linalg import (block_toeplitz, blockwise_quadratic, default_rank_tol, hankel_matrix, kernel_basis,
                     min_eigenvalue_sym, symmetrize, toeplitz_apply)
from .lti import (BasisFilterSpec, StateSpaceModel, Trajectory, append_inputs, excitation_margin,
                  impulse_response, persistency_order, realize_basis_filter, stack_outputs)

PSD_TOL = 1e-8


# -- multipliers ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MultiplierFactorization:
    """Multiplier ``P = Psi~ M Psi`` with a stable causal filter ``psi``.

    ``psi`` takes the stacked signal ``(u; y)`` (u-block first) and returns
    ``n_r`` filtered channels; ``M`` is symmetric ``n_r x n_r``.
    """

    psi: StateSpaceModel
    M: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if M.shape != (self.psi.p, self.psi.p):
            raise DimensionError(f"M has shape {M.shape}, filter has {self.psi.p} outputs")
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(M))):
            raise ArgumentError("M must be symmetric")
        if not self.psi.stable():
            raise DomainError("multiplier filter must be stable")
        object.__setattr__(self, "M", symmetrize(M))

    @property
    def n_r(self):
        return self.M.shape[0]

    @property
    def n_in(self):
        return self.psi.m

    @classmethod
    def static(cls, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(StateSpaceModel.static(np.eye(M.shape[0])), M)

    @classmethod
    def gain(cls, m, p, gamma):
        """L2-gain bound ``|y| <= gamma |u|``."""
        return cls.static(sla.block_diag(gamma ** 2 * np.eye(m), -np.eye(p)))

    @classmethod
    def input_passivity(cls, m, rho):
        """``sum u'y + rho |u|^2 >= 0``."""
        I = np.eye(m)
        return cls.static(np.block([[rho * I, 0.5 * I], [0.5 * I, 0 * I]]))

    @classmethod
    def output_passivity(cls, m, rho):
        """``sum u'y + rho |y|^2 >= 0``."""
        I = np.eye(m)
        return cls.static(np.block([[0 * I, 0.5 * I], [0.5 * I, rho * I]]))

    @classmethod
    def cone(cls, C, gamma):
        """Conic sector ``|y - C u| <= gamma |u|``."""
        C = np.atleast_2d(np.asarray(C, dtype=float))
        p, m = C.shape
        psi = StateSpaceModel.static(np.block([[np.eye(m), np.zeros((m, p))], [-C, np.eye(p)]]))
        return cls(psi, sla.block_diag(gamma ** 2 * np.eye(m), -np.eye(p)))

    @classmethod
    def filtered_gain(cls, m, p, gamma, lam, b, X=None):
        """Gain IQC with both channels passed through ``(1, 1/(z-lam), ..., 1/(z-lam)^{b-1})``.

        ``X`` is a symmetric ``b x b`` weight (identity by default).
        """
        X = np.eye(b) if X is None else np.asarray(X, dtype=float)
        # 1/(z - lam)^k == (z + (-lam))^-k
        basis = BasisFilterSpec.pole_chain(-lam, b - 1)
        def stacked(q):
            coeffs = np.zeros((b, b * q, q))
            for k in range(b):
                coeffs[k, k * q:(k + 1) * q, :] = np.eye(q)
            return realize_basis_filter(basis.with_coefficients(coeffs))
        fu, fy = stacked(m), stacked(p)
        zu = StateSpaceModel.static(np.zeros((b * m, p)))
        zy = StateSpaceModel.static(np.zeros((b * p, m)))
        psi = stack_outputs(append_inputs(fu, zu), append_inputs(zy, fy))
        M = sla.block_diag(gamma ** 2 * np.kron(X, np.eye(m)), -np.kron(X, np.eye(p)))
        return cls(psi, M)


# -- data matrices ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DataMatrixSet:
    """Hankel data restricted to windows that start at rest.

    Attributes
    ----------
    Hw : ndarray, ((m+p)L, N-L+1)
        Hankel matrix of ``w_k = (u_k; y_k)`` (interleaved rows).
    kernel : ndarray
        Orthonormal basis of ``ker(first nu block rows of Hw)``.
    V : ndarray
        ``kernel`` with directions mapped to zero by ``Hw`` removed;
        ``Hw @ V`` has full column rank.
    HwV : ndarray
        ``Hw @ V``, interleaved rows.
    Hu, Hy : ndarray
        Input and output rows of ``HwV`` (separated ordering).
    perm : ndarray
        Row permutation with ``HwV[perm] == vstack(Hu, Hy)``.
    """

    m: int
    p: int
    L: int
    nu: int
    N: int
    Hw: np.ndarray
    kernel: np.ndarray
    V: np.ndarray
    HwV: np.ndarray
    Hu: np.ndarray
    Hy: np.ndarray
    perm: np.ndarray
    pe_order: int
    persistently_exciting: bool
    excitation_margin: float
    u: np.ndarray
    y: np.ndarray

    @property
    def dim(self):
        return self.V.shape[1]

    @property
    def horizon(self):
        return self.L - self.nu

    def separated(self):
        return np.vstack([self.Hu, self.Hy])

    def unreduced(self):
        """``(H_L(u) @ kernel, H_L(y) @ kernel)`` before column reduction."""
        HK = self.Hw @ self.kernel
        return HK[self.perm[: self.m * self.L]], HK[self.perm[self.m * self.L:]]


def separated_permutation(m, p, L):
    """Indices mapping interleaved rows ``(u_0, y_0, u_1, ...)`` to ``(u_0..u_{L-1}, y_0..)``."""
    q = m + p
    u_rows = [k * q + i for k in range(L) for i in range(m)]
    y_rows = [k * q + m + i for k in range(L) for i in range(p)]
    return np.array(u_rows + y_rows, dtype=int)


def build_data_matrices(traj, L, nu, rank_tol=None, pe_order=None):
    """Assemble the restricted data matrices for horizon ``L`` and rest prefix ``nu``."""
    if not isinstance(traj, Trajectory):
        traj = Trajectory(*traj)
    if not 0 <= nu < L:
        raise ArgumentError(f"need 0 <= nu < L, got nu={nu}, L={L}")
    if L > traj.N:
        raise ArgumentError(f"horizon L={L} exceeds trajectory length N={traj.N}")
    w = traj.w
    if not np.all(np.isfinite(w)):
        raise NumericError("trajectory contains non-finite samples")
    m, p = traj.m, traj.p
    q = m + p
    Hw = hankel_matrix(w, L).matrix
    cols = Hw.shape[1]
    if nu == 0:
        K = np.eye(cols)
    else:
        K = kernel_basis(Hw[: q * nu], rank_tol).basis
    if K.shape[1] == 0:
        raise DegenerateDataError(
            f"no data window starts at rest: first {nu} block rows of the Hankel matrix "
            f"have full column rank ({cols} columns); use a longer trajectory")
    HK = Hw @ K
    U, s, Wt = sla.svd(HK, full_matrices=False)
    tol = default_rank_tol(HK.shape) if rank_tol is None else rank_tol
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    if r == 0:
        raise DegenerateDataError("restricted data span only the zero trajectory")
    # drop null directions only when present, so nu = 0 on rich data keeps V = I
    V = K if r == HK.shape[1] else K @ Wt[:r].T
    HwV = Hw @ V
    perm = separated_permutation(m, p, L)
    pe_order = L + nu if pe_order is None else pe_order
    return DataMatrixSet(
        m=m, p=p, L=L, nu=nu, N=traj.N, Hw=Hw, kernel=K, V=V, HwV=HwV,
        Hu=HwV[perm[: m * L]], Hy=HwV[perm[m * L:]], perm=perm,
        pe_order=pe_order,
        persistently_exciting=persistency_order(traj.u, pe_order),
        excitation_margin=excitation_margin(traj.u, pe_order),
        u=traj.u, y=traj.y,
    )


# -- verification -----------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    decision: bool
    min_eigenvalue: float
    threshold: float
    abs_tol: float
    L: int
    nu: int
    persistently_exciting: bool
    pe_order: int
    dim: int

    def as_dict(self):
        return {
            "decision": self.decision,
            "min_eigenvalue": self.min_eigenvalue,
            "threshold": self.threshold,
            "abs_tol": self.abs_tol,
            "L": self.L,
            "nu": self.nu,
            "persistently_exciting": self.persistently_exciting,
            "pe_order": self.pe_order,
            "dim": self.dim,
        }


class IqcForm:
    """Filtered data ``T_L(psi) Hw V`` with the quadratic form for any ``M``.

    Filtering is done once, so evaluating many ``M`` (e.g. during a
    bisection) only costs one product per evaluation.
    """

    def __init__(self, data, psi):
        if psi.m != data.m + data.p:
            raise DimensionError(
                f"multiplier filter takes {psi.m} inputs, data has m+p={data.m + data.p}")
        self.data = data
        self.psi = psi
        self.R = filter_columns(psi, data.HwV, data.L)

    def matrix(self, M):
        return blockwise_quadratic(self.R, np.asarray(M, dtype=float), self.data.L)


def filter_columns(psi, W, L):
    """Apply ``T_L(psi)`` to each column of ``W`` (interleaved rows)."""
    if psi.n == 0:
        D = psi.D
        q = D.shape[1]
        return np.einsum("ij,tjc->tic", D, W.reshape(L, q, -1)).reshape(L * D.shape[0], -1)
    return toeplitz_apply(impulse_response(psi, L), W, L)


def psd_decision(S, threshold=0.0, psd_tol=PSD_TOL):
    """Return ``(decision, lambda_min, abs_tol)`` for ``S >= threshold * I``."""
    lmin = min_eigenvalue_sym(S)
    abs_tol = psd_tol * (1.0 + float(np.linalg.norm(S, "fro")))
    return bool(lmin >= threshold - abs_tol), lmin, abs_tol


def _report(data, S, threshold, psd_tol):
    decision, lmin, abs_tol = psd_decision(S, threshold, psd_tol)
    return VerificationReport(decision, lmin, float(threshold), abs_tol, data.L, data.nu,
                              data.persistently_exciting, data.pe_order, S.shape[0])


def verify_l_iqc(data, mult, psd_tol=PSD_TOL):
    """Check whether the data certify the ``(L - nu)``-IQC of ``mult``.

    With input persistently exciting of order ``L + n`` a true decision
    proves the IQC; with ``nu`` at least the system order a false decision
    refutes it, even without persistent excitation.
    """
    S = IqcForm(data, mult.psi).matrix(mult.M)
    return _report(data, S, 0.0, psd_tol)


def verify_l_iqc_noisy(data, mult, delta, psd_tol=PSD_TOL):
    """Relaxed test ``S >= delta I`` for data with noisy outputs."""
    if not np.isfinite(delta):
        raise NumericError(f"noise margin must be finite, got {delta}")
    S = IqcForm(data, mult.psi).matrix(mult.M)
    return _report(data, S, delta, psd_tol)


def model_quadratic_form(model, mult, h):
    """Exact form of the IQC over all zero-initial-condition inputs of length ``h``."""
    if mult.psi.m != model.m + model.p:
        raise DimensionError("multiplier input dimension must equal m+p of the model")
    m, p = model.m, model.p
    g = impulse_response(model, h)
    TG = block_toeplitz(g, h).matrix
    W = np.zeros(((m + p) * h, m * h))
    perm = separated_permutation(m, p, h)
    W[perm] = np.vstack([np.eye(m * h), TG])
    R = filter_columns(mult.psi, W, h)
    return blockwise_quadratic(R, mult.M, h)


def model_oracle_l_iqc(model, mult, h, psd_tol=PSD_TOL):
    """Model-based ground truth for the ``h``-IQC (zero initial condition)."""
    S = model_quadratic_form(model, mult, h)
    return psd_decision(S, 0.0, psd_tol)[0]


# -- measurement noise ------------------------------------------------------

NOISE_KINDS = ("multiplicative-uniform", "additive-gaussian")


@dataclass(frozen=True)
class NoiseModel:
    """Output measurement noise.

    ``multiplicative-uniform``: ``y (1 + e)`` with ``e ~ U[-level, level]``.
    ``additive-gaussian``: ``y + e`` with ``e ~ N(0, level^2)``.
    """

    kind: str = "multiplicative-uniform"
    level: float = 0.0
    samples: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ArgumentError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.level < 0:
            raise ArgumentError(f"noise level must be >= 0, got {self.level}")
        if self.samples < 1:
            raise ArgumentError(f"need at least one noise sample, got {self.samples}")

    def perturb(self, y, rng):
        y = np.asarray(y, dtype=float)
        if self.kind == "multiplicative-uniform":
            return y * (1.0 + rng.uniform(-self.level, self.level, size=y.shape))
        return y + self.level * rng.standard_normal(y.shape)

    def rng(self, i):
        """Generator for noise instance ``i`` (``seed XOR i``)."""
        return np.random.default_rng(self.seed ^ i)


def add_measurement_noise(traj, noise, seed):
    """Corrupt the outputs of ``traj`` once, with its own seed."""
    return Trajectory(traj.u, noise.perturb(traj.y, np.random.default_rng(seed)), traj.dt)


class NoiseRelaxation:
    """Offline noise instances for the averaged eigenvalue margin.

    For each instance the outputs of the measured data are perturbed once
    more, and the change of the restricted quadratic form is recorded. The
    margin for multiplier ``M`` is the mean smallest eigenvalue of that
    change.
    """

    def __init__(self, data, psi, noise, workers=1):
        self.data = data
        self.noise = noise
        self.base = IqcForm(data, psi)
        def instance(i):
            y2 = noise.perturb(data.y, noise.rng(i))
            Hw2 = hankel_matrix(np.hstack([data.u, y2]), data.L).matrix
            return filter_columns(psi, Hw2 @ data.V, data.L)

        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                self.R = list(ex.map(instance, range(noise.samples)))
        else:
            self.R = [instance(i) for i in range(noise.samples)]

    def delta(self, M):
        M = np.asarray(M, dtype=float)
        S0 = self.base.matrix(M)
        lmins = [min_eigenvalue_sym(blockwise_quadratic(R, M, self.data.L) - S0) for R in self.R]
        return float(np.mean(lmins))


def noise_margin_delta(noisy_traj, noise, mult, L, nu, workers=1):
    """Averaged eigenvalue perturbation used to relax the PSD test."""
    data = build_data_matrices(noisy_traj, L, nu)
    return NoiseRelaxation(data, mult.psi, noise, workers).delta(mult.M)
