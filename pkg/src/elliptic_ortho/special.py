"""Jacobi theta functions, normalized Weierstrass functions, elliptic K.

Theta functions use the argument ``p`` with ``z = pi * p`` in the DLMF
convention, so ``theta_1(p + 1) = -theta_1(p)`` and the quasi-period in
``tau`` direction is ``tau`` itself.  Derivatives are taken with respect
to ``p`` (one factor of ``pi`` per derivative relative to DLMF).

The Weierstrass functions are those of the lattice spanned by ``1`` and
``tau``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np

__all__ = [
    "PoleError",
    "ModularParam",
    "theta",
    "theta_deriv",
    "theta_logderiv",
    "theta_mp",
    "weierstrass",
    "weierstrass_mp",
    "half_period_values",
    "eta1",
    "complete_elliptic_K",
    "agm",
    "lattice_distance",
    "POLE_TOL",
    "EXTENDED_DPS",
]

POLE_TOL = 1e-10
EXTENDED_DPS = 30
_SERIES_TOL = 1e-18
_MAX_TERMS = 400


class PoleError(ArithmeticError):
    """Raised when a meromorphic function is evaluated at (or too near) a pole."""


class ModularParam:
    """Modular parameter ``tau`` together with its nome ``q = exp(i pi tau)``."""

    __slots__ = ("tau", "q")

    def __init__(self, tau):
        tau = complex(tau)
        if not tau.imag > 0:
            raise ValueError(f"modular parameter must have Im tau > 0, got {tau!r}")
        self.tau = tau
        self.q = np.exp(1j * np.pi * tau)

    @classmethod
    def coerce(cls, tau) -> "ModularParam":
        return tau if isinstance(tau, cls) else cls(tau)

    def __repr__(self):
        return f"ModularParam({self.tau!r})"

    def __eq__(self, other):
        return isinstance(other, ModularParam) and other.tau == self.tau

    def __hash__(self):
        return hash(self.tau)


def _as_tau(tau) -> complex:
    t = tau.tau if isinstance(tau, ModularParam) else complex(tau)
    if not t.imag > 0:
        raise ValueError(f"invalid modular parameter: Im tau = {t.imag} <= 0")
    return t


@lru_cache(maxsize=256)
def _n_terms(tau_im: float) -> int:
    # After reduction |Im p| <= Im tau / 2, so the n-th term of every kind is
    # bounded by exp(-pi Im tau (n^2 - 1/4)) relative to the leading one.
    n = 1
    while math.exp(-math.pi * tau_im * (n * n - 0.25)) > _SERIES_TOL:
        n += 1
        if n > _MAX_TERMS:
            raise ValueError("theta series does not converge (Im tau too small)")
    return n + 1


def _reduce(p: np.ndarray, tau: complex):
    """Split p = p0 + j + k tau with |Im p0| <= Im tau / 2 and |Re p0| <= 1/2."""
    k = np.rint(p.imag / tau.imag)
    p1 = p - k * tau
    j = np.rint(p1.real)
    return p1 - j, j, k


def _series(kind: int, p0: np.ndarray, tau: complex, order: int) -> np.ndarray:
    nt = _n_terms(tau.imag)
    x = np.pi * p0[..., None]
    if kind in (1, 2):
        n = np.arange(nt)
        freq = (2 * n + 1) * np.pi
        coef = 2 * np.exp(1j * np.pi * tau * (n + 0.5) ** 2)
        if kind == 1:
            coef = coef * (-1.0) ** n
        arg = (2 * n + 1) * x
        shift = order * np.pi / 2
        if kind == 1:
            trig = np.sin(arg + shift)
        else:
            trig = np.cos(arg + shift)
        return np.sum(coef * freq**order * trig, axis=-1)
    n = np.arange(1, nt)
    freq = 2 * n * np.pi
    coef = 2 * np.exp(1j * np.pi * tau * n**2)
    if kind == 4:
        coef = coef * (-1.0) ** n
    trig = np.cos(2 * n * x + order * np.pi / 2)
    s = np.sum(coef * freq**order * trig, axis=-1)
    return s + 1.0 if order == 0 else s


_TAU_SIGN = {1: -1.0, 2: 1.0, 3: 1.0, 4: -1.0}
_ONE_SIGN = {1: -1.0, 2: -1.0, 3: 1.0, 4: 1.0}


def _check_kind(kind):
    if kind not in (1, 2, 3, 4):
        raise ValueError(f"theta kind must be 1..4, got {kind!r}")


def theta_deriv(kind: int, p, tau, order: int = 1):
    """Derivative of order ``order`` (0..3) of ``theta_kind(p; tau)`` in ``p``."""
    _check_kind(kind)
    if order not in (0, 1, 2, 3):
        raise ValueError("derivative order must be in 0..3")
    t = _as_tau(tau)
    parr = np.asarray(p, dtype=complex)
    p0, j, k = _reduce(parr, t)
    # theta(p0 + k tau) = m^k exp(-i pi tau k^2 - 2 pi i k p0) theta(p0); the
    # p-derivatives of the exponential factor contribute powers of -2 pi i k.
    factor = (_TAU_SIGN[kind] ** k) * (_ONE_SIGN[kind] ** j)
    factor = factor * np.exp(-1j * np.pi * t * k * k - 2j * np.pi * k * p0)
    lam = -2j * np.pi * k
    total = np.zeros_like(parr)
    for r in range(order + 1):
        total = total + math.comb(order, r) * lam ** (order - r) * _series(kind, p0, t, r)
    out = factor * total
    return out if out.ndim else out[()]


def theta(kind: int, p, tau):
    """Jacobi theta function ``theta_kind(p; tau)`` (vectorized in ``p``)."""
    return theta_deriv(kind, p, tau, 0)


def theta_logderiv(kind: int, p, tau):
    """Logarithmic derivative ``theta'(p) / theta(p)``."""
    _check_kind(kind)
    t = _as_tau(tau)
    parr = np.asarray(p, dtype=complex)
    p0, _, k = _reduce(parr, t)
    out = _series(kind, p0, t, 1) / _series(kind, p0, t, 0) - 2j * np.pi * k
    return out if out.ndim else out[()]


def theta_mp(kind: int, p, tau, order: int = 0, dps: int = EXTENDED_DPS):
    """Extended-precision theta value via mpmath (same normalization)."""
    _check_kind(kind)
    with mpmath.workdps(dps):
        tau = mpmath.mpmathify(tau)
        q = mpmath.exp(1j * mpmath.pi * tau)
        z = mpmath.pi * mpmath.mpmathify(p)
        return mpmath.jtheta(kind, z, q, order) * mpmath.pi**order


@lru_cache(maxsize=128)
def _lattice_constants(t: complex):
    th2, th3, th4 = (complex(theta(k, 0.0, t)) for k in (2, 3, 4))
    d1 = complex(theta_deriv(1, 0.0, t, 1))
    d3 = complex(theta_deriv(1, 0.0, t, 3))
    pi2 = np.pi**2
    e1 = pi2 / 3 * (th3**4 + th4**4)
    e2 = pi2 / 3 * (th2**4 - th4**4)
    e3 = -pi2 / 3 * (th2**4 + th3**4)
    two_eta1 = -d3 / (3 * d1)
    return dict(th2=th2, th3=th3, th4=th4, d1=d1, e=(e1, e2, e3), two_eta1=two_eta1)


def lattice_distance(p, tau):
    """Flat-metric distance from ``p`` to the lattice ``Z + tau Z``."""
    t = _as_tau(tau)
    parr = np.asarray(p, dtype=complex)
    p0, _, _ = _reduce(parr, t)
    # check the neighbouring lattice points of the reduced representative
    best = np.abs(p0)
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            best = np.minimum(best, np.abs(p0 - a - b * t))
    return best


def _check_poles(p, tau, tol=POLE_TOL):
    if np.any(lattice_distance(p, tau) < tol):
        raise PoleError("evaluation point lies on the period lattice")


def eta1(tau) -> complex:
    """Half the quasi-period of zeta: ``zeta(p + 1) - zeta(p) = 2 eta1``."""
    return _lattice_constants(_as_tau(tau))["two_eta1"] / 2


def weierstrass(p, tau):
    """Return ``(wp, wp_prime, zeta)`` of the normalized lattice at ``p``."""
    t = _as_tau(tau)
    parr = np.asarray(p, dtype=complex)
    _check_poles(parr, t)
    c = _lattice_constants(t)
    t1 = theta(1, parr, t)
    t2 = theta(2, parr, t)
    d1 = theta_deriv(1, parr, t, 1)
    d2 = theta_deriv(2, parr, t, 1)
    a = c["d1"] / c["th2"]
    quot = a * t2 / t1
    wp = c["e"][0] + quot**2
    dquot = a * (d2 * t1 - t2 * d1) / t1**2
    wpp = 2 * quot * dquot
    zeta = theta_logderiv(1, parr, t) + c["two_eta1"] * parr
    return wp, wpp, zeta


def weierstrass_mp(p, tau, dps: int = EXTENDED_DPS):
    """Extended-precision ``(wp, wp_prime, zeta)`` using mpmath theta functions."""
    with mpmath.workdps(dps + 5):
        p = mpmath.mpmathify(p)
        tau = mpmath.mpmathify(tau)
        q = mpmath.exp(1j * mpmath.pi * tau)
        pi = mpmath.pi

        def th(k, x, d=0):
            return mpmath.jtheta(k, pi * x, q, d) * pi**d

        d1 = th(1, 0, 1)
        d3 = th(1, 0, 3)
        th2_0, th3_0, th4_0 = th(2, 0), th(3, 0), th(4, 0)
        e1 = pi**2 / 3 * (th3_0**4 + th4_0**4)
        a = d1 / th2_0
        t1, t2 = th(1, p), th(2, p)
        quot = a * t2 / t1
        wp = e1 + quot**2
        wpp = 2 * quot * a * (th(2, p, 1) * t1 - t2 * th(1, p, 1)) / t1**2
        zeta = th(1, p, 1) / t1 - d3 / (3 * d1) * p
        return wp, wpp, zeta


def half_period_values(tau):
    """Return ``(e1, e2, e3) = (wp(1/2), wp((1+tau)/2), wp(tau/2))`` for real curves."""
    t = _as_tau(tau)
    if abs(t.real) > 1e-14:
        raise ValueError("half-period values are real only for purely imaginary tau")
    e = _lattice_constants(t)["e"]
    return tuple(float(x.real) for x in e)


def agm(a: float, b: float) -> float:
    """Arithmetic-geometric mean of two positive numbers."""
    a, b = float(a), float(b)
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = (a + b) / 2, math.sqrt(a * b)
    return (a + b) / 2


def complete_elliptic_K(m: float) -> float:
    """Complete elliptic integral of the first kind, parameter ``m = k^2``."""
    m = float(m)
    if not 0.0 < m < 1.0:
        raise ValueError(f"parameter m must lie in (0, 1), got {m}")
    return math.pi / (2 * agm(1.0, math.sqrt(1.0 - m)))
