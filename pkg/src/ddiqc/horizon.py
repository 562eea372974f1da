"""Infinite-horizon inference.

Loop transformations that turn a general multiplier into a gain bound,
FIR gain certificates from finite-section norms, and convergence
diagnostics for the finite-section norms of stable systems.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConsistencyError, DimensionError, DomainError, PremiseError
from .iqc import MultiplierFactorization
from .lti import StateSpaceModel, hinf_norm_grid, impulse_response, inverse, series, stack_outputs
from .linalg import block_toeplitz, max_singular_value

MINIMAL_TOL = 1e-10
SMALL_GAIN_MARGIN = 1e-6
DET_THRESHOLD = 1e-9
DET_GRID = 4096


# -- realizations -------------------------------------------------------------

def _krylov_basis(A, B, tol):
    """Orthonormal basis of the reachable subspace of ``(A, B)`` (block Arnoldi)."""
    n = A.shape[0]
    if n == 0 or B.size == 0:
        return np.zeros((n, 0))
    scale = max(1.0, np.linalg.norm(A, 2), np.linalg.norm(B, 2))
    basis = np.zeros((n, 0))
    block = B
    while basis.shape[1] < n:
        block = block - basis @ (basis.T @ block)
        block = block - basis @ (basis.T @ block)
        if block.size == 0:
            break
        U, s, _ = np.linalg.svd(block, full_matrices=False)
        r = int(np.sum(s > tol * scale))
        if r == 0:
            break
        new = U[:, :r]
        basis = np.hstack([basis, new])
        block = A @ new
    return basis


def minimal_realization(model, tol=MINIMAL_TOL):
    """Remove unreachable, then unobservable, states by exact subspace deflation."""
    Q = _krylov_basis(model.A, model.B, tol)
    A, B, C = Q.T @ model.A @ Q, Q.T @ model.B, model.C @ Q
    P = _krylov_basis(A.T, C.T, tol)
    return StateSpaceModel(P.T @ A @ P, P.T @ B, C @ P, model.D)


def _sub(model, rows, cols):
    return StateSpaceModel(model.A, model.B[:, cols], model.C[rows], model.D[np.ix_(rows, cols)])


# -- loop transformation ------------------------------------------------------

def cone_filter(C):
    """Static ``[[I, 0], [-C, I]]``; transforms ``G`` into ``G - C``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    p, m = C.shape
    return StateSpaceModel.static(np.block([[np.eye(m), np.zeros((m, p))], [-C, np.eye(p)]]))


def output_passivity_filter(m, gamma_hat):
    """Static ``[[I, 0], [g I, -I/(2g)]]``; transforms ``G`` into ``g - G/(2g)``."""
    if gamma_hat <= 0:
        raise DomainError(f"gain level must be positive, got {gamma_hat}")
    I = np.eye(m)
    return StateSpaceModel.static(np.block([[I, 0 * I], [gamma_hat * I, -I / (2 * gamma_hat)]]))


def transformed_response(g_model, psi, n_r1, omega):
    """Pointwise ``(Psi21 + Psi22 G)(Psi11 + Psi12 G)^-1`` on a frequency grid."""
    m = g_model.m
    Gw = g_model.freq_response(omega)
    Pw = psi.freq_response(omega)
    out = []
    for G, P in zip(Gw, Pw):
        top = P[:n_r1, :m] + P[:n_r1, m:] @ G
        bot = P[n_r1:, :m] + P[n_r1:, m:] @ G
        out.append(np.linalg.solve(top.T, bot.T).T)
    return np.array(out)


def transformed_system(g_model, psi, n_r1=None, check_points=64):
    """Realization of ``G~ = (Psi21 + Psi22 G)(Psi11 + Psi12 G)^-1``.

    ``psi`` (a filter or :class:`MultiplierFactorization`) is split after
    ``n_r1`` outputs and after ``m`` inputs. Requires a causal stable inverse
    of ``Psi11`` and ``||Psi12 G Psi11^-1||_inf < 1``.

    Raises
    ------
    PremiseError
        If the small-gain premise fails (carries the computed norm) or the
        result is unstable.
    DomainError
        If ``Psi11`` has no causal inverse.
    """
    if isinstance(psi, MultiplierFactorization):
        psi = psi.psi
    m, p = g_model.m, g_model.p
    if psi.m != m + p:
        raise DimensionError(f"filter has {psi.m} inputs, expected m+p = {m + p}")
    n_r1 = m if n_r1 is None else int(n_r1)
    if n_r1 != m:
        raise DimensionError(f"Psi11 must be square: n_r1 = {n_r1}, m = {m}")
    top = list(range(n_r1))
    u_cols, y_cols = list(range(m)), list(range(m, m + p))
    psi11, psi12 = _sub(psi, top, u_cols), _sub(psi, top, y_cols)
    inv11 = inverse(psi11)
    if not inv11.stable():
        raise DomainError(
            f"Psi11 inverse is unstable (spectral radius {inv11.spectral_radius():.6g})")
    if not g_model.stable():
        raise DomainError("plant model is not stable")
    loop_gain = 0.0
    if np.any(psi12.D) or (psi12.n and np.any(psi12.C) and np.any(psi12.B)):
        loop_gain = hinf_norm_grid(minimal_realization(series(series(inv11, g_model), psi12)))
    if loop_gain >= 1 - SMALL_GAIN_MARGIN:
        raise PremiseError(f"small-gain premise fails: ||Psi12 G Psi11^-1|| = {loop_gain:.6g} >= 1")

    ident = StateSpaceModel.static(np.eye(m))
    joint = series(stack_outputs(ident, g_model), psi)  # u -> (r1, r2)
    C1, C2 = joint.C[:n_r1], joint.C[n_r1:]
    D1, D2 = joint.D[:n_r1], joint.D[n_r1:]
    try:
        D1inv = np.linalg.inv(D1)
    except np.linalg.LinAlgError:
        raise DomainError("Psi11 + Psi12 G has a singular feedthrough") from None
    out = StateSpaceModel(joint.A - joint.B @ D1inv @ C1, joint.B @ D1inv,
                          C2 - D2 @ D1inv @ C1, D2 @ D1inv)
    out = minimal_realization(out)
    if not out.stable():
        raise PremiseError(
            f"transformed system is unstable (spectral radius {out.spectral_radius():.6g})")
    if check_points:
        omega = np.linspace(0, np.pi, check_points)
        ref = transformed_response(g_model, psi, n_r1, omega)
        got = out.freq_response(omega)
        err = float(np.max(np.abs(ref - got))) if ref.size else 0.0
        if err > 1e-8 * (1 + float(np.max(np.abs(ref)))):
            raise ConsistencyError(f"transformed realization deviates by {err:.3e} from the formula")
    return out


# -- FIR certificates ---------------------------------------------------------

@dataclass(frozen=True)
class GainBoundCertificate:
    """Infinite-horizon gain bound inferred from a finite-horizon gain.

    ``det_premise`` is ``"assumed"`` when no model was supplied, otherwise
    ``"verified"`` or ``"violated"`` from a unit-circle determinant sweep.
    The bound is exact arithmetic on the finite-section inequality; only
    the FIR length ``l`` and the determinant premise are assumptions.
    """

    gamma_L: float
    L: int
    l: int
    gamma_inf: float
    valid: bool
    det_premise: str = "assumed"
    det_min: float | None = None

    def as_dict(self):
        return {"gamma_L": self.gamma_L, "L": self.L, "l": self.l, "gamma_inf": self.gamma_inf,
                "valid": self.valid, "det_premise": self.det_premise, "det_min": self.det_min}


def min_abs_det(model, n_grid=DET_GRID):
    """Minimum ``|det G(e^{iw})|`` over a uniform grid of ``[0, pi]``."""
    if model.m != model.p:
        raise DimensionError("determinant sweep needs a square model")
    omega = np.linspace(0.0, np.pi, n_grid)
    return float(np.min(np.abs(np.linalg.det(model.freq_response(omega)))))


def fir_infinite_gain_bound(gamma_L, L, l, model=None):
    """Certify ``||G||_inf <= gamma_L / (1 - 20 l / L)`` for FIR ``G`` of length ``l``.

    ``L == 20 l`` gives an infinite (vacuous) bound flagged invalid.
    """
    L, l = int(L), int(l)
    if l < 1:
        raise PremiseError(f"FIR length must be >= 1, got {l}")
    if gamma_L < 0 or not np.isfinite(gamma_L):
        raise PremiseError(f"finite-horizon gain must be finite and >= 0, got {gamma_L}")
    if L < 20 * l:
        raise PremiseError(f"horizon L = {L} is below 20 l = {20 * l}")
    factor = 1.0 - 20.0 * l / L
    gamma_inf = float(gamma_L / factor) if factor > 0 else float("inf")
    det_premise, det_min = "assumed", None
    if model is not None:
        det_min = min_abs_det(model)
        det_premise = "verified" if det_min > DET_THRESHOLD else "violated"
    valid = factor > 0 and det_premise != "violated"
    return GainBoundCertificate(float(gamma_L), L, l, gamma_inf, bool(valid), det_premise, det_min)


# -- finite-section convergence -----------------------------------------------

def toeplitz_norm(model, L):
    """``sigma_max`` of the depth-``L`` block Toeplitz matrix of ``model``."""
    g = impulse_response(model, L)
    return max_singular_value(block_toeplitz(g, L).matrix)


def toeplitz_norm_curve(model, horizons):
    """Finite-section norms ``[(L, sigma_max(T_L(G))), ...]`` for ascending horizons."""
    if not model.stable():
        raise DomainError(
            f"model is not stable (spectral radius {model.spectral_radius():.6g}); "
            "apply exponential weighting first")
    hs = [int(L) for L in horizons]
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise ArgumentError("horizons must be strictly ascending")
    if hs and hs[0] < 1:
        raise ArgumentError("horizons must be >= 1")
    if not hs:
        return []
    g = impulse_response(model, hs[-1])
    return [(L, max_singular_value(block_toeplitz(g[:L], L).matrix)) for L in hs]


@dataclass(frozen=True)
class ConvergenceFit:
    """Log-log fit of the gap ``||G||_inf - sigma_max(T_L)`` over the last decade."""

    hinf: float
    slope: float | None
    points: int
    final_gap: float


def gap_slope(curve, hinf):
    """Fit ``log(gap)`` against ``log L`` over horizons within a decade of the largest.

    The slope is ``None`` when fewer than two positive gaps remain (e.g. static
    systems, whose gap is exactly zero).
    """
    if not curve:
        return ConvergenceFit(hinf, None, 0, 0.0)
    Lmax = curve[-1][0]
    pts = [(L, hinf - s) for L, s in curve if L * 10 >= Lmax]
    final_gap = max(hinf - curve[-1][1], 0.0)
    pos = [(L, gap) for L, gap in pts if gap > 1e-14 * max(1.0, hinf)]
    if len(pos) < 2:
        return ConvergenceFit(hinf, None, len(pos), final_gap)
    x = np.log([L for L, _ in pos])
    y = np.log([gap for _, gap in pos])
    slope = float(np.polyfit(x, y, 1)[0])
    return ConvergenceFit(hinf, slope, len(pos), final_gap)


def convergence_diagnostic(model, horizons):
    """Finite-section curve, grid H-infinity norm and gap-slope fit."""
    curve = toeplitz_norm_curve(model, horizons)
    hinf = hinf_norm_grid(model)
    return curve, gap_slope(curve, hinf)
