"""Exact orthogonal sections from the bi-moment Gram matrix.

The sections live in the spaces of elliptic functions with a pole of order
``n`` at ``p = 0`` and at most a simple pole at the divisor point ``D``.
They are expanded in the monic basis

    sigma_0 = 1,  sigma_1 = zeta(p) - zeta(p - D),
    sigma_{2l+2} = wp^{l+1},  sigma_{2l+3} = -wp' wp^l / 2,

and orthogonalized against ``e^{w} dp`` on the contour ``Im p = Im tau / 2``
with the periodic trapezoid rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .curve import DivisorPoint, RealCurve
from .special import EXTENDED_DPS, PoleError, lattice_distance, weierstrass, weierstrass_mp

__all__ = [
    "FLAT",
    "Weight",
    "MomentMatrix",
    "OrthoSection",
    "PrecisionEscalationRequired",
    "ZeroCountError",
    "sigma",
    "sigma_basis",
    "moments",
    "leading_minors",
    "orthogonal_section",
    "eval_section",
    "zeros",
    "norm_sq",
]

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
ZERO_SAMPLES = 4096


class PrecisionEscalationRequired(ArithmeticError):
    """Double precision lost positive definiteness and escalation is disabled."""


class ZeroCountError(ArithmeticError):
    """The located zeros contradict the zero-count property."""


@dataclass(frozen=True)
class Weight:
    """Trigonometric-polynomial exponent of the weight on ``gamma``.

    ``w(s + tau/2) = sum_k cos_coeffs[k] cos(2 pi k s)
                   + sum_k sin_coeffs[k] sin(2 pi (k + 1) s)``

    so ``cos_coeffs[0]`` is the constant term and ``sin_coeffs[0]`` multiplies
    ``sin(2 pi s)``.
    """

    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(c) for c in self.sin_coeffs))

    @property
    def is_flat(self) -> bool:
        return not any(self.cos_coeffs) and not any(self.sin_coeffs)

    def of_s(self, s):
        """Weight exponent at arc parameter ``s`` (complex ``s`` continues analytically)."""
        s = np.asarray(s)
        out = np.zeros(s.shape, dtype=np.result_type(s, float))
        for k, a in enumerate(self.cos_coeffs):
            if a:
                out = out + a * np.cos(2 * np.pi * k * s)
        for k, b in enumerate(self.sin_coeffs, start=1):
            if b:
                out = out + b * np.sin(2 * np.pi * k * s)
        return out

    def __call__(self, p, tau):
        return self.of_s(np.asarray(p, dtype=complex) - complex(tau) / 2)

    def of_s_mp(self, s):
        out = mpmath.mpf(0)
        for k, a in enumerate(self.cos_coeffs):
            out += a * mpmath.cos(2 * mpmath.pi * k * s)
        for k, b in enumerate(self.sin_coeffs, start=1):
            out += b * mpmath.sin(2 * mpmath.pi * k * s)
        return out


FLAT = Weight()


@dataclass
class MomentMatrix:
    mu: np.ndarray
    n_max: int
    N: int
    tau: complex
    D: float
    weight: Weight
    precision: str = "double"
    self_convergence: float = float("nan")
    mu_mp: object = field(default=None, repr=False)


@dataclass(frozen=True)
class OrthoSection:
    n: int
    coeffs: np.ndarray
    norm_sq: float
    precision: str = "double"


def _divisor(D) -> float:
    return D.d if isinstance(D, DivisorPoint) else DivisorPoint(D).d


def _tau(curve) -> complex:
    return curve.tau if isinstance(curve, RealCurve) else complex(curve)


def sigma_basis(curve, D, n_max: int, p):
    """Values of ``sigma_0 .. sigma_{n_max}`` at ``p``; shape ``(n_max + 1,) + p.shape``."""
    tau = _tau(curve)
    d = _divisor(D)
    p = np.asarray(p, dtype=complex)
    if n_max >= 1 and np.any(lattice_distance(p - d, tau) < 1e-10):
        raise PoleError("sigma_1 evaluated at the divisor point")
    wp, wpp, z = weierstrass(p, tau)
    out = np.empty((n_max + 1,) + p.shape, dtype=complex)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = z - weierstrass(p - d, tau)[2]
    power = np.ones_like(wp)
    for l in range((n_max - 2) // 2 + 1 if n_max >= 2 else 0):
        if 2 * l + 2 <= n_max:
            out[2 * l + 2] = power * wp
        if 2 * l + 3 <= n_max:
            out[2 * l + 3] = -0.5 * wpp * power
        power = power * wp
    return out


def sigma(curve, D, j: int, p):
    """The ``j``-th basis section at ``p``."""
    if j < 0:
        raise ValueError("basis index must be non-negative")
    return sigma_basis(curve, D, j, p)[j]


def _sigma_basis_mp(tau, d, n_max, p):
    wp, wpp, z = weierstrass_mp(p, tau)
    out = [mpmath.mpf(1)]
    if n_max >= 1:
        out.append(z - weierstrass_mp(p - d, tau)[2])
    for j in range(2, n_max + 1):
        l = (j - 2) // 2
        out.append(wp ** (l + 1) if j % 2 == 0 else -wpp * wp**l / 2)
    return [mpmath.re(v) for v in out]


def _moments_double(tau, d, weight, n_max, N):
    s = np.arange(N) / N
    B = sigma_basis(tau, d, n_max, s + tau / 2).real
    wts = np.exp(weight.of_s(s)) / N
    # fixed summation order: identical results for identical inputs
    mu = (B * wts) @ B.T
    return (mu + mu.T) / 2


def _moments_mp(tau, d, weight, n_max, N):
    with mpmath.workdps(EXTENDED_DPS):
        mu = mpmath.zeros(n_max + 1, n_max + 1)
        for k in range(N):
            s = mpmath.mpf(k) / N
            b = _sigma_basis_mp(tau, d, n_max, s + mpmath.mpmathify(tau) / 2)
            wk = mpmath.exp(weight.of_s_mp(s)) / N
            for a in range(n_max + 1):
                for c in range(a, n_max + 1):
                    mu[a, c] += b[a] * b[c] * wk
        for a in range(n_max + 1):
            for c in range(a):
                mu[a, c] = mu[c, a]
        return mu


def _relative_pivots(mu: np.ndarray):
    """Cholesky pivots divided by the corresponding diagonal entries (None on breakdown)."""
    try:
        L = np.linalg.cholesky(mu)
    except np.linalg.LinAlgError:
        return None
    return np.diag(L) ** 2 / np.diag(mu)


def _entry_scale(mu):
    d = np.sqrt(np.abs(np.diag(mu)))
    return np.outer(d, d)


def moments(curve, D, weight: Weight = FLAT, n_max: int = 12, N: int = 256,
            precision: str = "double", allow_escalation: bool = True) -> MomentMatrix:
    """Bi-moment matrix ``mu_ab = int_gamma sigma_a sigma_b e^w dp`` for ``a, b <= n_max``."""
    if N < 64 or N & (N - 1):
        raise ValueError("quadrature size N must be a power of two >= 64")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if precision not in ("double", "extended"):
        raise ValueError("precision must be 'double' or 'extended'")
    tau = _tau(curve)
    d = _divisor(D)
    if precision == "double":
        mu = _moments_double(tau, d, weight, n_max, N)
        mu2 = _moments_double(tau, d, weight, n_max, 2 * N)
        conv = float(np.max(np.abs(mu - mu2) / _entry_scale(mu2)))
        piv = _relative_pivots(mu)
        if piv is not None and np.all(piv > PIVOT_TOL):
            return MomentMatrix(mu, n_max, N, tau, d, weight, "double", conv)
        if not allow_escalation:
            raise PrecisionEscalationRequired(
                "bi-moment matrix lost positive definiteness in double precision; "
                "rerun with extended precision")
        log.info("escalating moment computation to extended precision (n_max=%d)", n_max)
    mu_mp = _moments_mp(tau, d, weight, n_max, N)
    mu_mp2 = _moments_mp(tau, d, weight, n_max, 2 * N)
    mu = np.array(mu_mp.tolist(), dtype=float)
    mu2 = np.array(mu_mp2.tolist(), dtype=float)
    conv = float(np.max(np.abs(mu - mu2) / _entry_scale(mu2)))
    return MomentMatrix(mu, n_max, N, tau, d, weight, "extended", conv, mu_mp)


def leading_minors(mom: MomentMatrix):
    """``D_n = det[mu_ab]_{a,b<n}`` for ``n = 1 .. n_max + 1`` (via Cholesky pivots)."""
    if mom.mu_mp is not None:
        with mpmath.workdps(EXTENDED_DPS):
            L = mpmath.cholesky(mom.mu_mp)
            return np.cumprod([float(L[i, i] ** 2) for i in range(mom.n_max + 1)])
    L = np.linalg.cholesky(mom.mu)
    return np.cumprod(np.diag(L) ** 2)


def _solve_spd(A, b):
    L = np.linalg.cholesky(A)
    y = np.linalg.solve(L, b)
    x = np.linalg.solve(L.T, y)
    # one step of iterative refinement
    r = b - A @ x
    x = x + np.linalg.solve(L.T, np.linalg.solve(L, r))
    return x


def orthogonal_section(mom: MomentMatrix, n: int) -> OrthoSection:
    """Monic orthogonal section of degree ``n`` from the moment matrix."""
    if not 0 <= n <= mom.n_max:
        raise ValueError(f"degree {n} outside 0..{mom.n_max}")
    if n == 0:
        return OrthoSection(0, np.array([1.0]), float(mom.mu[0, 0]), mom.precision)
    if mom.mu_mp is not None:
        with mpmath.workdps(EXTENDED_DPS):
            A = mom.mu_mp[:n, :n]
            b = -mom.mu_mp[:n, n]
            c = mpmath.cholesky_solve(A, b)
            coeffs = [c[i] for i in range(n)] + [mpmath.mpf(1)]
            h = mpmath.fsum(coeffs[j] * mom.mu_mp[j, n] for j in range(n + 1))
            return OrthoSection(n, np.array([float(x) for x in coeffs]), float(h), "extended")
    A = mom.mu[:n, :n]
    b = -mom.mu[:n, n]
    # diagonal scaling keeps the Cholesky factorization well balanced
    dsc = 1 / np.sqrt(np.diag(A))
    try:
        x = _solve_spd(A * np.outer(dsc, dsc), b * dsc) * dsc
    except np.linalg.LinAlgError as exc:
        raise PrecisionEscalationRequired("Gram factorization broke down; use extended precision") from exc
    coeffs = np.append(x, 1.0)
    h = float(coeffs @ mom.mu[: n + 1, n])
    if not h > 0:
        raise PrecisionEscalationRequired(f"non-positive norm {h} for degree {n}")
    return OrthoSection(n, coeffs, h, "double")


def eval_section(sec: OrthoSection, curve, D, p):
    """Evaluate ``pi_n(p) = sum_j c_j sigma_j(p)``."""
    B = sigma_basis(curve, D, sec.n, p)
    return np.tensordot(sec.coeffs, B, axes=1)


def norm_sq(sec: OrthoSection) -> float:
    return sec.norm_sq


def _bisect(fun, a, b, fa, tol=1e-12, maxit=80):
    """Vectorized bisection on brackets ``[a, b]`` with ``sign(fa) != sign(f(b))``."""
    a = a.copy()
    b = b.copy()
    fa = fa.copy()
    for _ in range(maxit):
        if np.all(b - a <= tol):
            break
        m = (a + b) / 2
        fm = fun(m)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
    return (a + b) / 2


def _sign_change_brackets(x, v, periodic):
    sv = np.sign(v)
    idx = np.nonzero(sv[:-1] * sv[1:] < 0)[0]
    lo, hi = list(x[idx]), list(x[idx + 1])
    flo = list(v[idx])
    if periodic and sv[-1] * sv[0] < 0:
        lo.append(x[-1])
        hi.append(x[0] + 1.0)
        flo.append(v[-1])
    exact = x[sv == 0]
    return np.array(lo), np.array(hi), np.array(flo), exact


def zeros(sec: OrthoSection, curve, D, samples: int = ZERO_SAMPLES, check: bool = True):
    """Zeros of ``pi_n`` on ``gamma`` and ``alpha`` as arc positions in [0, 1).

    Returns ``(gamma_zeros, alpha_zero)`` where ``alpha_zero`` is ``None`` when
    there is no zero on ``alpha``.  Raises :class:`ZeroCountError` if the
    counts contradict the zero-count property (n odd: n+1 on gamma; n even: n and 1).
    """
    tau = _tau(curve)
    d = _divisor(D)
    n = sec.n

    def on_gamma(s):
        return eval_section(sec, tau, d, np.asarray(s) + tau / 2).real

    s = np.arange(samples) / samples
    vg = on_gamma(s)
    scale = float(np.max(np.abs(vg))) or 1.0
    lo, hi, flo, exact = _sign_change_brackets(s, vg, periodic=True)
    roots = list(exact)
    if len(lo):
        roots.extend(_bisect(on_gamma, lo, hi, flo))
    gz = np.sort(np.mod(np.array(roots, dtype=float), 1.0))

    def on_alpha(x):
        return eval_section(sec, tau, d, np.asarray(x, dtype=complex)).real

    # alpha: avoid the poles at 0 and D, where the sign flips without a zero
    xa = (np.arange(samples) + 0.5) / samples
    xa = xa[np.abs(xa - d) > 0.5 / samples]
    va = on_alpha(xa)
    lo, hi, flo, exact = _sign_change_brackets(xa, va, periodic=False)
    keep = ~((lo < d) & (hi > d))
    lo, hi, flo = lo[keep], hi[keep], flo[keep]
    az = list(exact)
    if len(lo):
        az.extend(_bisect(on_alpha, lo, hi, flo))

    if check:
        want_g, want_a = (n + 1, 0) if n % 2 else (n, 1)
        if len(gz) != want_g or len(az) != want_a:
            raise ZeroCountError(
                f"degree {n}: found {len(gz)} zeros on gamma and {len(az)} on alpha, "
                f"expected {want_g} and {want_a}")
        h = 1e-6
        slope = (on_gamma(gz + h) - on_gamma(gz - h)) / (2 * h)
        if np.any(np.abs(slope) <= 1e-6 * scale):
            raise ZeroCountError(f"degree {n}: a zero on gamma is not simple")
    alpha_zero = float(az[0]) if len(az) == 1 else (None if not az else az)
    return [float(z) for z in gz], alpha_zero
