"""Optimal input-output properties from data.

Scalar properties (L2-gain, passivity indices) come from bisection on the
data-based IQC test. Optimal positive-negative multipliers minimize

    phi(c) = lambda_max(Z(c)' Z(c), B),    Z(c) = T(psi21(c)) Hu + T(psi22(c)) Hy,

which is the smallest feasible ``gamma^2`` for fixed filter coefficients
``c``. ``phi`` is convex (a supremum of convex quadratics), possibly
nonsmooth where the top eigenvalue is repeated.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .errors import (ConditioningError, ConsistencyError, DegenerateDataError, DimensionError,
                     UnboundedError)
from .iqc import PSD_TOL, IqcForm, NoiseRelaxation, filter_columns
from .linalg import blockwise_quadratic, gen_eig_max, min_eigenvalue_sym, symmetrize, toeplitz_apply
from .lti import BasisFilterSpec, StateSpaceModel, realize_basis_filter

BRACKET_CAP = 2.0 ** 40


# -- bisection --------------------------------------------------------------

def psd_feasible(S, threshold=0.0, psd_tol=PSD_TOL):
    """Cholesky-based test of ``S >= threshold I`` with the usual slack."""
    abs_tol = psd_tol * (1.0 + float(np.linalg.norm(S, "fro")))
    shifted = S - (threshold - abs_tol) * np.eye(S.shape[0])
    try:
        sla.cholesky(shifted, lower=True, check_finite=False)
    except sla.LinAlgError:
        return False
    return True


class AffineIqcFamily:
    """IQC test for ``M(theta) = M0 + theta M1`` with precomputed forms.

    With a :class:`NoiseRelaxation` the threshold is the averaged margin
    for ``M(theta)``; it is recomputed per ``theta`` only when the noise
    perturbs the ``theta``-dependent part of the form.
    """

    def __init__(self, data, psi, M0, M1, relaxation=None, psd_tol=PSD_TOL):
        form = relaxation.base if relaxation is not None else IqcForm(data, psi)
        self.S0 = form.matrix(M0)
        self.S1 = form.matrix(M1)
        self.psd_tol = psd_tol
        self.M0, self.M1 = np.asarray(M0, float), np.asarray(M1, float)
        self.relaxation = relaxation
        self._dS = None
        self._const_delta = None
        if relaxation is not None:
            L = data.L
            dS = []
            for R in relaxation.R:
                d0 = blockwise_quadratic(R, self.M0, L) - self.S0
                d1 = blockwise_quadratic(R, self.M1, L) - self.S1
                dS.append((d0, d1))
            self._dS = dS
            if all(not d1.any() for _, d1 in dS):
                self._const_delta = float(np.mean([min_eigenvalue_sym(d0) for d0, _ in dS]))

    def matrix(self, theta):
        return self.S0 + theta * self.S1

    def delta(self, theta):
        if self.relaxation is None:
            return 0.0
        if self._const_delta is not None:
            return self._const_delta
        return float(np.mean([min_eigenvalue_sym(d0 + theta * d1) for d0, d1 in self._dS]))

    def feasible(self, theta):
        return psd_feasible(self.matrix(theta), self.delta(theta), self.psd_tol)


def bisect_threshold(feasible, lo, hi, tol, transform=None):
    """Smallest ``theta`` in ``[lo, hi]`` with ``feasible(theta)`` (monotone predicate).

    Without ``transform`` the stopping rule is ``hi - lo <= tol * max(1, |hi|)``;
    with it, ``t(hi) - t(lo) <= tol * |t(hi)|`` for ``t = transform``.
    Returns the feasible end ``hi``.
    """
    def width():
        if transform is None:
            return abs(hi - lo) - tol * max(1.0, abs(hi))
        return abs(transform(hi) - transform(lo)) - tol * abs(transform(hi))

    while width() > 0:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _grow_upper(feasible, start=1.0):
    hi = start
    while not feasible(hi):
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise UnboundedError(f"no feasible value below the bracket cap {BRACKET_CAP:.3g}")
    return hi


def _static_identity(q):
    return StateSpaceModel.static(np.eye(q))


def gain_family(data, relaxation=None, psd_tol=PSD_TOL):
    m, p = data.m, data.p
    M0 = sla.block_diag(np.zeros((m, m)), -np.eye(p))
    M1 = sla.block_diag(np.eye(m), np.zeros((p, p)))
    return AffineIqcFamily(data, _static_identity(m + p), M0, M1, relaxation, psd_tol)


def passivity_family(data, which="input", relaxation=None, psd_tol=PSD_TOL):
    m = data.m
    if data.p != m:
        raise DimensionError(f"passivity needs square systems, got m={m}, p={data.p}")
    I, Z = np.eye(m), np.zeros((m, m))
    M0 = np.block([[Z, 0.5 * I], [0.5 * I, Z]])
    if which == "input":
        M1 = sla.block_diag(I, Z)
    elif which == "output":
        M1 = sla.block_diag(Z, I)
    else:
        raise ValueError(f"passivity kind must be 'input' or 'output', got {which!r}")
    return AffineIqcFamily(data, _static_identity(2 * m), M0, M1, relaxation, psd_tol)


def bisect_gain(family, tol):
    """Smallest ``gamma`` with ``M = diag(gamma^2 I, -I)`` feasible."""
    if family.feasible(0.0):
        return 0.0
    hi = _grow_upper(family.feasible, 1.0)
    theta = bisect_threshold(family.feasible, 0.0, hi, tol, transform=np.sqrt)
    return float(np.sqrt(theta))


def bisect_passivity(family, tol):
    lo, hi = -1.0, 1.0
    while not family.feasible(hi):
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise UnboundedError("no feasible passivity index below the bracket cap 2^40")
    while family.feasible(lo):
        lo *= 2.0
        if -lo > BRACKET_CAP:
            raise UnboundedError("passivity index unbounded below (cap 2^40)")
    return float(bisect_threshold(family.feasible, lo, hi, tol))


def l2_gain_estimate(data, tol=1e-6, psd_tol=PSD_TOL):
    """Finite-horizon L2-gain supported by the data.

    Computed as ``sqrt(lambda_max(Hy'Hy, Hu'Hu))`` and cross-checked by
    bisection on the IQC test; a disagreement beyond ``2 tol`` (widened by
    the gap the PSD slack ``psd_tol`` can explain) raises
    :class:`ConsistencyError`.
    """
    Gu = symmetrize(data.Hu.T @ data.Hu)
    Gy = symmetrize(data.Hy.T @ data.Hy)
    try:
        lam, _ = gen_eig_max(Gy, Gu)
    except ConditioningError as exc:
        raise DegenerateDataError(
            f"restricted input data are rank deficient (min eigenvalue {exc.min_eigenvalue:.3e}); "
            "the gain is unbounded on the data") from None
    gamma = float(np.sqrt(max(lam, 0.0)))
    family = gain_family(data, psd_tol=psd_tol)
    gamma_bis = bisect_gain(family, tol)
    # the PSD slack lets bisection accept gamma^2 down to gamma^2 - abs_tol / lambda_min(Gu)
    S = family.matrix(gamma ** 2)
    abs_tol = psd_tol * (1.0 + float(np.linalg.norm(S, "fro")))
    slack = gamma - np.sqrt(max(gamma ** 2 - abs_tol / min_eigenvalue_sym(Gu), 0.0))
    if abs(gamma_bis - gamma) > 2 * tol * max(gamma, 1.0) + slack:
        raise ConsistencyError(
            f"eigenvalue gain {gamma:.12g} and bisection gain {gamma_bis:.12g} disagree")
    return gamma


def passivity_index_estimate(data, which="input", tol=1e-6, psd_tol=PSD_TOL):
    """Minimal passivity shift ``rho`` (input or output) supported by the data."""
    return bisect_passivity(passivity_family(data, which, psd_tol=psd_tol), tol)


def noisy_gain_estimate(noisy_data, noise, tol=1e-6, psd_tol=PSD_TOL, workers=1):
    """Bisected gain using the averaged noise margin as PSD threshold."""
    m, p = noisy_data.m, noisy_data.p
    relax = NoiseRelaxation(noisy_data, _static_identity(m + p), noise, workers)
    family = gain_family(noisy_data, relax, psd_tol)
    gamma = bisect_gain(family, tol)
    return gamma, family.delta(gamma ** 2)


def noisy_passivity_estimate(noisy_data, noise, which="input", tol=1e-6, psd_tol=PSD_TOL,
                             workers=1):
    relax = NoiseRelaxation(noisy_data, _static_identity(2 * noisy_data.m), noise, workers)
    family = passivity_family(noisy_data, which, relax, psd_tol)
    rho = bisect_passivity(family, tol)
    return rho, family.delta(rho)


def multiplier_gain_estimate(data, psi, M0, M1, tol=1e-6, relaxation=None, psd_tol=PSD_TOL):
    """Smallest ``gamma`` for a multiplier ``M0 + gamma^2 M1`` on filter ``psi``."""
    family = AffineIqcFamily(data, psi, M0, M1, relaxation, psd_tol)
    gamma = bisect_gain(family, tol)
    return gamma, family.delta(gamma ** 2)


# -- positive-negative multipliers --------------------------------------------

@dataclass(frozen=True, eq=False)
class PnMultiplierClass:
    """Triangular positive-negative multiplier family.

    ``Psi = [[psi11, 0], [psi21(c), psi22(c)]]`` with ``M = diag(gamma^2 I, -I)``.
    ``psi21`` and ``psi22`` are linear in their basis coefficients. A
    ``None`` ``psi11`` or ``psi22`` means the identity. Coefficients stored
    in the specs serve as the starting point, or as fixed values for
    blocks whose ``free*`` flag is off.
    """

    psi21: BasisFilterSpec
    psi22: BasisFilterSpec | None = None
    psi11: StateSpaceModel | None = None
    free21: bool = True
    free22: bool = True
    n_r2: int | None = None


@dataclass
class OptimOptions:
    opt_tol: float = 1e-4
    feas_tol: float = 1e-7
    max_iter: int = 500
    init: np.ndarray | None = None
    polish: bool = True
    smoothing: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)


@dataclass
class OptimalIqcResult:
    gamma_sq: float
    c21: np.ndarray
    c22: np.ndarray | None
    iterations: int
    feasibility_residual: float
    converged: bool
    ill_conditioned: bool = False
    evaluations: int = 0
    history: list = field(default_factory=list)

    @property
    def gamma(self):
        return float(np.sqrt(max(self.gamma_sq, 0.0)))

    @property
    def coefficients(self):
        parts = [self.c21.ravel()]
        if self.c22 is not None:
            parts.append(self.c22.ravel())
        return np.concatenate(parts)


def _basis_filtered(spec, H, L):
    """Apply each scalar basis function of ``spec`` to every channel of ``H``."""
    q = H.shape[0] // L
    h = spec.scalar_impulse(L)
    out = []
    eye = np.eye(q)
    for t in range(spec.size):
        if spec.terms[t][1] == 0:
            out.append(H.reshape(L, q, -1))
        else:
            g = h[t][:, None, None] * eye
            out.append(toeplitz_apply(g, H, L).reshape(L, q, -1))
    return out


class PnProblem:
    """The convex coefficient problem for one data set and multiplier class."""

    def __init__(self, data, mclass):
        L, m, p = data.L, data.m, data.p
        self.data, self.mclass, self.L = data, mclass, L
        n_r2 = mclass.n_r2 or p
        if mclass.psi22 is None and n_r2 != p:
            raise DimensionError("identity psi22 needs n_r2 == p")
        self.n_r2 = n_r2
        feats, coef, mask = [], [], []

        def add(spec, H, q, free):
            nonlocal feats
            blocks = _basis_filtered(spec, H, L)
            feats += blocks
            c0 = (np.zeros((spec.size, n_r2, q)) if spec.coefficients is None
                  else np.asarray(spec.coefficients, float))
            if c0.shape != (spec.size, n_r2, q):
                raise DimensionError(
                    f"coefficients must have shape {(spec.size, n_r2, q)}, got {c0.shape}")
            for t in range(spec.size):
                coef.append(c0[t])
                mask.append(np.full((n_r2, q), free))

        add(mclass.psi21, data.Hu, m, mclass.free21)
        self.n21 = mclass.psi21.size
        if mclass.psi22 is None:
            feats.append(data.Hy.reshape(L, p, -1))
            coef.append(np.eye(p))
            mask.append(np.zeros((p, p), bool))
            self.n22 = None
        else:
            add(mclass.psi22, data.Hy, p, mclass.free22)
            self.n22 = mclass.psi22.size
        self.Phi = np.concatenate(feats, axis=1)  # (L, nf, r)
        self.C0 = np.hstack(coef)
        self.mask = np.hstack(mask)
        self.n_free = int(self.mask.sum())

        F = data.Hu if mclass.psi11 is None else filter_columns(mclass.psi11, data.Hu, L)
        self.B = symmetrize(F.T @ F)
        try:
            self.Rb = sla.cholesky(self.B, lower=False)
        except sla.LinAlgError:
            s = sla.svd(F, compute_uv=False)
            raise DegenerateDataError(
                f"filtered input data are rank deficient (smallest singular value {s[-1]:.3e})"
            ) from None
        lmin = min_eigenvalue_sym(self.B)
        self.ill_conditioned = bool(lmin < 1e-12 * np.linalg.norm(self.B, 2))
        r = self.B.shape[0]
        # whitened features: Phi_j R^{-1}
        flat = self.Phi.reshape(-1, r)
        self.Pw = sla.solve_triangular(self.Rb, flat.T, trans="T", lower=False).T.reshape(self.Phi.shape)
        self.evaluations = 0

    # coefficient vector <-> matrices
    def full(self, c):
        C = self.C0.copy()
        if self.n_free:
            C[self.mask] = np.asarray(c, float)
        return C

    def initial(self):
        return self.C0[self.mask].copy()

    def split(self, c):
        """Coefficient arrays ``(c21, c22)`` shaped ``(terms, n_r2, q)``."""
        C = self.full(c)
        m, p = self.data.m, self.data.p
        c21 = C[:, : self.n21 * m].reshape(self.n_r2, self.n21, m).transpose(1, 0, 2)
        c22 = None
        if self.n22 is not None:
            c22 = C[:, self.n21 * m:].reshape(self.n_r2, self.n22, p).transpose(1, 0, 2)
        return c21.copy(), None if c22 is None else c22.copy()

    def _Y(self, C):
        return np.einsum("af,lfr->lar", C, self.Pw, optimize=True).reshape(-1, self.Pw.shape[2])

    def Z(self, c):
        """Unwhitened ``T21 Hu + T22 Hy`` for coefficients ``c``."""
        return np.einsum("af,lfr->lar", self.full(c), self.Phi, optimize=True).reshape(
            -1, self.Phi.shape[2])

    def phi(self, c):
        self.evaluations += 1
        Y = self._Y(self.full(c))
        s = sla.svd(Y, compute_uv=False, check_finite=False)
        return float(s[0] ** 2) if s.size else 0.0

    def phi_direct(self, c):
        """``phi`` through the generalized eigenproblem (no whitening)."""
        Z = self.Z(c)
        return gen_eig_max(Z.T @ Z, self.B)[0]

    def _grad(self, Y, X, w):
        L = self.L
        YX = (Y @ X).reshape(L, self.n_r2, -1)
        PX = np.einsum("lfr,rs->lfs", self.Pw, X, optimize=True)
        G = 2.0 * np.einsum("las,lfs,s->af", YX, PX, w, optimize=True)
        return G[self.mask]

    def subgradient(self, c, cluster_tol=1e-8):
        """Subgradient of ``phi``, averaged over the top eigenvalue cluster."""
        C = self.full(c)
        Y = self._Y(C)
        lam, X = sla.eigh(Y.T @ Y, check_finite=False)
        top = lam[-1]
        sel = lam >= top - cluster_tol * max(abs(top), 1e-300)
        w = np.full(int(sel.sum()), 1.0 / sel.sum())
        return float(top), self._grad(Y, X[:, sel], w)

    def smoothed(self, c, mu):
        """Log-sum-exp smoothing of ``lambda_max`` and its gradient."""
        self.evaluations += 1
        C = self.full(c)
        Y = self._Y(C)
        lam, X = sla.eigh(Y.T @ Y, check_finite=False)
        top = lam[-1]
        e = np.exp((lam - top) / mu)
        tot = e.sum()
        val = top + mu * np.log(tot)
        w = e / tot
        keep = w > 1e-18
        return float(val), self._grad(Y, X[:, keep], w[keep])

    def feasibility_residual(self, c, gamma_sq):
        """Smallest eigenvalue of ``[[I, Z], [Z', gamma^2 B]]``."""
        Z = self.Z(c)
        k = Z.shape[0]
        big = np.block([[np.eye(k), Z], [Z.T, gamma_sq * self.B]])
        return min_eigenvalue_sym(big)

    def scale(self, gamma_sq):
        return max(1.0, gamma_sq * float(np.linalg.norm(self.B, 2)))

    # optimizer
    def solve(self, opts=None):
        opts = opts or OptimOptions()
        x = self.initial() if opts.init is None else np.asarray(opts.init, float).copy()
        if x.size != self.n_free:
            raise DimensionError(f"initial point has {x.size} entries, class has {self.n_free}")
        best_x, best_f = x.copy(), self.phi(x)
        history = [best_f]
        iters, converged = 0, True
        if self.n_free:
            converged = False
            budget = opts.max_iter
            f0 = best_f
            for rel in opts.smoothing:
                if budget <= 0:
                    break
                mu = max(rel * best_f, 1e-16 * max(f0, 1e-300))
                res = minimize(self.smoothed, best_x, args=(mu,), jac=True, method="BFGS",
                               options={"maxiter": budget, "gtol": 1e-14 * max(1.0, f0)})
                iters += res.nit
                budget -= res.nit
                f = self.phi(res.x)
                history.append(f)
                if f <= best_f:
                    best_x, best_f = res.x.copy(), f
            last = history[-3:]
            converged = budget > 0 and (len(last) < 2 or
                                        max(last) - min(last) <= opts.opt_tol * (1 + best_f))
            if opts.polish:
                best_x, best_f = self._polish(best_x, best_f)
                history.append(best_f)
        c21, c22 = self.split(best_x)
        resid = self.feasibility_residual(best_x, best_f)
        return OptimalIqcResult(
            gamma_sq=best_f, c21=c21, c22=c22, iterations=iters, feasibility_residual=resid,
            converged=bool(converged), ill_conditioned=self.ill_conditioned,
            evaluations=self.evaluations, history=history), best_x

    def _polish(self, x, fx, sweeps=2, tol=1e-10):
        """Coordinate-wise golden-section refinement; accepts improvements only."""
        invphi = (np.sqrt(5) - 1) / 2
        x = x.copy()
        for _ in range(sweeps):
            for i in range(x.size):
                h = 1e-3 * (1 + abs(x[i]))
                a, b = x[i] - h, x[i] + h

                def f(t):
                    y = x.copy()
                    y[i] = t
                    return self.phi(y)

                cpt, dpt = b - invphi * (b - a), a + invphi * (b - a)
                fc, fd = f(cpt), f(dpt)
                while b - a > tol * (1 + abs(x[i])):
                    if fc < fd:
                        b, dpt, fd = dpt, cpt, fc
                        cpt = b - invphi * (b - a)
                        fc = f(cpt)
                    else:
                        a, cpt, fc = cpt, dpt, fd
                        dpt = a + invphi * (b - a)
                        fd = f(dpt)
                t = 0.5 * (a + b)
                ft = f(t)
                if ft < fx:
                    x[i], fx = t, ft
        return x, fx


def optimal_pn_iqc(data, mclass, opts=None):
    """Minimal ``gamma^2`` over a positive-negative multiplier class."""
    result, _ = PnProblem(data, mclass).solve(opts)
    return result


def cone_class():
    return PnMultiplierClass(psi21=BasisFilterSpec.pole_chain(0.0, 0))


def tightest_cone(data, opts=None):
    """Center ``C`` and radius ``gamma`` of the smallest cone ``|y - Cu| <= gamma |u|``."""
    result = optimal_pn_iqc(data, cone_class(), opts)
    return -result.c21[0], result.gamma


def loworder_class(basis):
    return PnMultiplierClass(psi21=basis if basis.coefficients is None
                             else basis.with_coefficients(-basis.coefficients))


def loworder_approximation(data, basis, opts=None):
    """Closest model in the span of ``basis`` with a certified deviation bound.

    Returns ``(model_lo, gamma)`` where ``|(G - model_lo) u| <= gamma |u|``
    over the horizon ``L - nu`` for zero-initial-condition trajectories.
    """
    model, result = loworder_fit(data, basis, opts)
    return model, result.gamma


def loworder_fit(data, basis, opts=None):
    """Like :func:`loworder_approximation` but also returns the optimizer result."""
    result = optimal_pn_iqc(data, loworder_class(basis), opts)
    model = realize_basis_filter(basis.with_coefficients(-result.c21))
    return model, result


def basis_order_sweep(data, lam, orders, opts=None):
    """Optimal ``gamma^2`` for nested pole-chain bases, warm-started order to order."""
    opts = opts or OptimOptions()
    out = []
    prev = None
    for b in orders:
        mclass = PnMultiplierClass(psi21=BasisFilterSpec.pole_chain(lam, b))
        prob = PnProblem(data, mclass)
        init = None
        if prev is not None:
            pb, pc21 = prev
            c21 = np.zeros((b + 1, prob.n_r2, data.m))
            k = min(pb, b) + 1
            c21[:k] = pc21[:k]
            init = prob.C0.copy()
            init[:, : (b + 1) * data.m] = c21.transpose(1, 0, 2).reshape(prob.n_r2, -1)
            init = init[prob.mask]
        run = OptimOptions(**{**opts.__dict__, "init": init})
        result, _ = prob.solve(run)
        out.append((b, result))
        prev = (b, result.c21)
    return out
