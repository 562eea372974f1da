"""Discrete-time LTI models: simulation, responses and filter realizations."""
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import ArgumentError, DimensionError, DomainError, PremiseError
from .linalg import as_signal, hankel_matrix, numerical_rank

STABILITY_MARGIN = 1e-9


def _mat(a):
    a = np.asarray(a, dtype=float)
    return a.reshape(1, 1) if a.ndim == 0 else np.atleast_2d(a)


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Realization ``x+ = A x + B u``, ``y = C x + D u``.

    Arrays are copied and made read-only, so models can be shared freely.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _mat(self.D)
        p, m = D.shape
        A = np.asarray(self.A, dtype=float)
        n = A.shape[0] if A.size else 0
        try:
            A = A.reshape(n, n)
            B = np.asarray(self.B, dtype=float).reshape(n, m)
            C = np.asarray(self.C, dtype=float).reshape(p, n)
        except ValueError:
            raise DimensionError(
                f"inconsistent realization: A {np.shape(self.A)}, B {np.shape(self.B)}, "
                f"C {np.shape(self.C)}, D {D.shape}") from None
        for name, val in zip("ABCD", (A, B, C, D)):
            val = np.array(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def static(cls, D):
        D = _mat(D)
        return cls(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.D.shape[1]

    @property
    def p(self):
        return self.D.shape[0]

    def spectral_radius(self):
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def stable(self):
        return self.spectral_radius() < 1 - STABILITY_MARGIN

    def controllability_matrix(self):
        blocks, X = [], self.B
        for _ in range(self.n):
            blocks.append(X)
            X = self.A @ X
        return np.hstack(blocks) if blocks else np.zeros((0, 0))

    def observability_matrix(self, depth=None):
        depth = self.n if depth is None else depth
        blocks, X = [], self.C
        for _ in range(depth):
            blocks.append(X)
            X = X @ self.A
        return np.vstack(blocks) if blocks else np.zeros((0, self.n))

    def minimal(self):
        if self.n == 0:
            return True
        return (numerical_rank(self.controllability_matrix()) == self.n
                and numerical_rank(self.observability_matrix()) == self.n)

    def freq_response(self, omega):
        """Evaluate ``G(e^{i w})`` for each ``w``; returns ``(len(w), p, m)`` complex."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        out = np.empty((omega.size, self.p, self.m), dtype=complex)
        out[:] = self.D
        if self.n == 0:
            return out
        eye = np.eye(self.n)
        for start in range(0, omega.size, 256):
            z = np.exp(1j * omega[start:start + 256])
            lhs = z[:, None, None] * eye - self.A
            X = np.linalg.solve(lhs, np.broadcast_to(self.B, (z.size,) + self.B.shape))
            out[start:start + z.size] += self.C @ X
        return out

    def __repr__(self):
        return f"StateSpaceModel(n={self.n}, m={self.m}, p={self.p})"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Measured input/output record with ``u`` of shape (N, m), ``y`` of shape (N, p)."""

    u: np.ndarray
    y: np.ndarray
    dt: float | None = None

    def __post_init__(self):
        u, y = as_signal(self.u), as_signal(self.y)
        if u.shape[0] != y.shape[0]:
            raise DimensionError(f"u has {u.shape[0]} samples but y has {y.shape[0]}")
        if u.shape[0] < 1:
            raise DimensionError("trajectory must contain at least one sample")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def N(self):
        return self.u.shape[0]

    @property
    def m(self):
        return self.u.shape[1]

    @property
    def p(self):
        return self.y.shape[1]

    @property
    def w(self):
        """Per-sample stacking ``w_k = (u_k; y_k)``, shape (N, m+p)."""
        return np.hstack([self.u, self.y])


@dataclass(frozen=True, eq=False)
class BasisFilterSpec:
    """Linear combination of scalar basis functions ``(z + pole)^-power``.

    ``terms`` lists ``(pole, power)`` pairs; ``power == 0`` is the constant
    function 1. ``coefficients`` has shape ``(len(terms), n_out, n_in)``.
    """

    terms: tuple
    coefficients: np.ndarray = field(default=None)
    kind: str = "custom"

    def __post_init__(self):
        terms = tuple((float(lam), int(k)) for lam, k in self.terms)
        for lam, k in terms:
            if k < 0:
                raise ArgumentError(f"basis power must be >= 0, got {k}")
            if k > 0 and abs(lam) >= 1:
                raise DomainError(f"basis parameter |{lam}| >= 1 gives an unstable filter")
        object.__setattr__(self, "terms", terms)
        if self.coefficients is not None:
            c = np.asarray(self.coefficients, dtype=float)
            if c.ndim == 1:
                c = c[:, None, None]
            if c.ndim != 3 or c.shape[0] != len(terms):
                raise DimensionError(
                    f"need one coefficient matrix per basis term ({len(terms)}), got shape {c.shape}")
            object.__setattr__(self, "coefficients", c)

    @classmethod
    def pole_chain(cls, lam, order, coefficients=None):
        """Basis ``1, (z+lam)^-1, ..., (z+lam)^-order``."""
        if order < 0:
            raise ArgumentError(f"basis order must be >= 0, got {order}")
        return cls(tuple((lam, k) for k in range(order + 1)), coefficients, "pole-chain")

    @classmethod
    def distinct_poles(cls, poles, coefficients=None, constant=True):
        """Basis ``1, (z+l_1)^-1, ..., (z+l_r)^-1``."""
        terms = ((0.0, 0),) if constant else ()
        terms += tuple((lam, 1) for lam in poles)
        return cls(terms, coefficients, "distinct-poles")

    @property
    def size(self):
        return len(self.terms)

    def with_coefficients(self, coefficients):
        return BasisFilterSpec(self.terms, coefficients, self.kind)

    def scalar_impulse(self, L):
        """Impulse responses of the scalar basis functions, shape ``(len(terms), L)``."""
        out = np.zeros((self.size, L))
        for t, (lam, k) in enumerate(self.terms):
            if k == 0:
                out[t, 0] = 1.0
                continue
            # (z+lam)^-k = sum_j C(j+k-1, k-1) (-lam)^j z^-(j+k)
            for j in range(L - k):
                out[t, j + k] = comb(j + k - 1, k - 1) * (-lam) ** j
        return out


def simulate(model, u, x0=None):
    """Simulate ``model`` from initial state ``x0`` (zero by default)."""
    u = as_signal(u)
    if u.shape[1] != model.m:
        raise DimensionError(f"input has {u.shape[1]} channels, model expects {model.m}")
    if x0 is None:
        x0 = np.zeros(model.n)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != model.n:
        raise DimensionError(f"x0 has length {x0.size}, model has order {model.n}")
    return _kernels.ss_simulate(model.A, model.B, model.C, model.D, u, x0)


def impulse_response(model, L):
    """Markov parameters ``g_0 = D``, ``g_k = C A^{k-1} B``; shape ``(L, p, m)``."""
    if L < 1:
        raise ArgumentError(f"horizon must be >= 1, got {L}")
    g = np.zeros((L, model.p, model.m))
    g[0] = model.D
    X = model.B
    for k in range(1, L):
        if model.n == 0:
            break
        g[k] = model.C @ X
        X = model.A @ X
    return g


def persistency_order(u, L, rank_tol=None):
    """True iff ``u`` is persistently exciting of order ``L``."""
    u = as_signal(u)
    N, m = u.shape
    if L < 1 or N < (m + 1) * L - 1:
        return False
    return numerical_rank(hankel_matrix(u, L).matrix, rank_tol) == m * L


def excitation_margin(u, L):
    """Smallest of the ``mL`` leading singular values of ``H_L(u)`` (0 if too short)."""
    u = as_signal(u)
    N, m = u.shape
    if L < 1 or N < L:
        return 0.0
    H = hankel_matrix(u, L).matrix
    s = sla.svd(H, compute_uv=False)
    return float(s[m * L - 1]) if s.size >= m * L else 0.0


def random_stable_system(n, m, p, seed, target_spectral_radius=0.9, max_retries=100):
    """Seeded random minimal model with prescribed spectral radius."""
    if n < 0 or m < 1 or p < 1:
        raise ArgumentError(f"invalid dimensions n={n}, m={m}, p={p}")
    if not 0 < target_spectral_radius < 1:
        raise ArgumentError(f"target spectral radius must lie in (0, 1), got {target_spectral_radius}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        A = rng.standard_normal((n, n))
        if n:
            rad = np.max(np.abs(np.linalg.eigvals(A)))
            if rad == 0:
                continue
            A *= target_spectral_radius / rad
        model = StateSpaceModel(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                                rng.standard_normal((p, m)))
        if model.minimal():
            return model
    raise PremiseError(f"no minimal system drawn in {max_retries} attempts")


def _golden_max(f, a, b, tol):
    invphi = (np.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def hinf_norm_grid(model, n_grid=4096, tol=1e-8):
    """Peak of ``sigma_max(G(e^{iw}))`` over ``[0, pi]``.

    A uniform grid locates the peak, then golden-section search refines it.
    The result is a lower bound on the H-infinity norm.
    """
    if not model.stable():
        raise DomainError(f"model is not stable (spectral radius {model.spectral_radius():.6g})")
    omega = np.linspace(0.0, np.pi, n_grid)

    def smax(w):
        return float(np.linalg.svd(model.freq_response(w)[0], compute_uv=False)[0])

    vals = np.linalg.svd(model.freq_response(omega), compute_uv=False)[:, 0]
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = omega[max(i - 1, 0)], omega[min(i + 1, n_grid - 1)]
    if hi > lo:
        _, val = _golden_max(smax, lo, hi, tol)
        best = max(best, val)
    return best


def realize_basis_filter(spec):
    """State-space realization of ``sum_t c_t (z + pole_t)^-power_t``.

    Terms sharing a pole use one chain of first-order sections, so the state
    dimension is ``n_in * max power`` per distinct pole.
    """
    if spec.coefficients is None:
        raise ArgumentError("basis filter has no coefficients to realize")
    c = spec.coefficients
    _, nout, nin = c.shape
    D = np.zeros((nout, nin))
    chains = {}
    for t, (lam, k) in enumerate(spec.terms):
        if k == 0:
            D += c[t]
            continue
        chains.setdefault(lam, {})
        chains[lam][k] = chains[lam].get(k, 0) + c[t]
    blocks_A, blocks_B, blocks_C = [], [], []
    eye = np.eye(nin)
    for lam, powers in chains.items():
        depth = max(powers)
        A = np.kron(np.eye(depth), -lam * eye) + np.kron(np.eye(depth, k=-1), eye)
        B = np.zeros((depth * nin, nin))
        B[:nin] = eye
        C = np.zeros((nout, depth * nin))
        for k, ck in powers.items():
            C[:, (k - 1) * nin:k * nin] = ck
        blocks_A.append(A)
        blocks_B.append(B)
        blocks_C.append(C)
    if not blocks_A:
        return StateSpaceModel.static(D)
    return StateSpaceModel(sla.block_diag(*blocks_A), np.vstack(blocks_B), np.hstack(blocks_C), D)


def observability_lag(model):
    """Smallest ``l`` with ``rank col(C, CA, ..., CA^{l-1}) = n``."""
    n = model.n
    if n == 0:
        return 0
    for l in range(1, n + 1):
        if numerical_rank(model.observability_matrix(l)) == n:
            return l
    raise DomainError("model is not observable")


def exp_weight(w, rho):
    """Scale sample ``k`` of ``w`` by ``rho**k``."""
    if rho <= 0:
        raise DomainError(f"weighting factor must be positive, got {rho}")
    w = np.asarray(w, dtype=float)
    scale = rho ** np.arange(w.shape[0], dtype=float)
    return w * scale.reshape((-1,) + (1,) * (w.ndim - 1))


# -- interconnections -------------------------------------------------------

def series(first, second):
    """``second * first``: the output of ``first`` drives ``second``."""
    if first.p != second.m:
        raise DimensionError(f"cannot connect {first.p} outputs into {second.m} inputs")
    n1, n2 = first.n, second.n
    A = np.block([[first.A, np.zeros((n1, n2))], [second.B @ first.C, second.A]])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    return StateSpaceModel(A, B, C, second.D @ first.D)


def parallel(*models):
    """Sum of models sharing input and output dimensions."""
    m, p = models[0].m, models[0].p
    for g in models:
        if (g.m, g.p) != (m, p):
            raise DimensionError("parallel connection needs identical dimensions")
    return StateSpaceModel(
        sla.block_diag(*[g.A for g in models]) if any(g.n for g in models) else np.zeros((0, 0)),
        np.vstack([g.B for g in models]),
        np.hstack([g.C for g in models]),
        sum(g.D for g in models),
    )


def stack_outputs(*models):
    """Common input, outputs stacked: ``[G1; G2; ...]``."""
    m = models[0].m
    for g in models:
        if g.m != m:
            raise DimensionError("output stacking needs a common input dimension")
    return StateSpaceModel(
        sla.block_diag(*[g.A for g in models]) if any(g.n for g in models) else np.zeros((0, 0)),
        np.vstack([g.B for g in models]),
        sla.block_diag(*[g.C for g in models]) if any(g.n for g in models)
        else np.zeros((sum(g.p for g in models), 0)),
        np.vstack([g.D for g in models]),
    )


def append_inputs(*models):
    """Block row ``[G1, G2, ...]``: outputs summed, inputs concatenated."""
    p = models[0].p
    for g in models:
        if g.p != p:
            raise DimensionError("input concatenation needs a common output dimension")
    return StateSpaceModel(
        sla.block_diag(*[g.A for g in models]) if any(g.n for g in models) else np.zeros((0, 0)),
        sla.block_diag(*[g.B for g in models]) if any(g.n for g in models)
        else np.zeros((0, sum(g.m for g in models))),
        np.hstack([g.C for g in models]),
        np.hstack([g.D for g in models]),
    )


def scale_output(model, K):
    K = _mat(K)
    return StateSpaceModel(model.A, model.B, K @ model.C, K @ model.D)


def inverse(model):
    """Inverse system via feedthrough inversion; requires square invertible ``D``."""
    if model.m != model.p:
        raise DimensionError("only square systems can be inverted")
    try:
        Dinv = np.linalg.inv(model.D)
    except np.linalg.LinAlgError:
        raise DomainError("direct feedthrough is singular; no causal inverse") from None
    if np.linalg.cond(model.D) > 1e12:
        raise DomainError("direct feedthrough is numerically singular; no causal inverse")
    return StateSpaceModel(model.A - model.B @ Dinv @ model.C, model.B @ Dinv, -Dinv @ model.C, Dinv)


def partial_fraction_model(poles, residues):
    """Realize ``sum_i R_i / (z - p_i)`` for real poles and (p, m) residues.

    Each residue contributes ``rank(R_i)`` states, so the realization is
    minimal for distinct poles.
    """
    residues = [np.atleast_2d(np.asarray(R, dtype=float)) for R in residues]
    p, m = residues[0].shape
    A, B, C = [], [], []
    for pole, R in zip(poles, residues):
        U, s, Vt = np.linalg.svd(R)
        r = int(np.sum(s > 1e-12 * max(s[0], 1.0)))
        for i in range(r):
            A.append(pole)
            B.append(Vt[i])
            C.append(U[:, i] * s[i])
    return StateSpaceModel(np.diag(A), np.array(B).reshape(len(A), m),
                           np.array(C).T.reshape(p, len(A)), np.zeros((p, m)))
