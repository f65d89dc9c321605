"""Closed-form steepest-descent objects for orthogonal sections.

All functions use the elliptic coordinate ``p`` on ``C / (Z + tau Z)``.  The
torus minus ``gamma`` splits into the *lower* region ``0 <= Im p < Im tau/2``
and the *upper* region ``Im tau/2 < Im p < Im tau`` (reduced modulo ``tau``).
Boundary values on ``gamma`` are selected with :class:`~elliptic_ortho.curve.Side`:
``PLUS`` is the limit from the upper region, ``MINUS`` from the lower one.
Each region's formula continues analytically across ``gamma``, so boundary
values are direct evaluations at ``Im p = Im tau/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import DivisorPoint, RealCurve, Side, to_weierstrass
from .exact import FLAT, Weight
from .special import (
    PoleError,
    lattice_distance,
    theta,
    theta_deriv,
    theta_logderiv,
    weierstrass,
)

__all__ = [
    "GFunction",
    "SzegoFunction",
    "ModelMatrix",
    "region_sign",
    "make_gfunction",
    "g_eval",
    "g_minus_ell",
    "g_weierstrass",
    "H_eval",
    "H_from_g",
    "scalar_cauchy",
    "scalar_cauchy_weierstrass",
    "make_szego",
    "szego_eval",
    "szego_eval_direct",
    "phi_eval",
    "make_model_matrix",
    "model_matrix_eval",
    "f_eval",
    "h_eval",
    "pi_asym",
    "pi_asym_on_gamma",
    "phase_Phi",
    "norm_asym",
    "norm_asym_residue",
    "zero_density",
    "zero_cdf",
    "lens_eps",
]

_GAMMA_TOL = 1e-13


def _tau(obj) -> complex:
    if isinstance(obj, RealCurve):
        return obj.tau
    return complex(getattr(obj, "tau", obj))


def _reduce_im(p, tau):
    """Shift ``p`` by multiples of ``tau`` so that ``0 <= Im p < Im tau``."""
    p = np.asarray(p, dtype=complex)
    k = np.floor(p.imag / tau.imag + 1e-14)
    return p - k * tau


def region_sign(p, tau, side: Side = Side.OFF):
    """+1 in the upper region, -1 in the lower one; ``side`` resolves points on gamma."""
    tau = complex(tau)
    p0 = _reduce_im(p, tau)
    y = p0.imag - tau.imag / 2
    sgn = np.where(y > 0, 1.0, -1.0)
    on = np.abs(y) <= _GAMMA_TOL * max(1.0, tau.imag)
    if np.any(on):
        if side is Side.PLUS:
            sgn = np.where(on, 1.0, sgn)
        elif side is Side.MINUS:
            sgn = np.where(on, -1.0, sgn)
        else:
            raise ValueError("point lies on gamma: specify Side.PLUS or Side.MINUS")
    return sgn, p0


def lens_eps(tau) -> float:
    """Default lens half-width ``Im tau / 4``."""
    return complex(tau).imag / 4


# ---------------------------------------------------------------- g-function


@dataclass(frozen=True)
class GFunction:
    tau: complex
    K: complex
    ell: float
    exp_ell: float
    K2_residual: float = 0.0
    K2_printed_residual: float = 0.0


def make_gfunction(curve) -> GFunction:
    tau = _tau(curve)
    t2 = 2 * tau
    d1 = complex(theta_deriv(1, 0.0, t2, 1))
    th1_tau = complex(theta(1, tau, t2))
    K = -1j * d1 / th1_tau * np.exp(-1j * np.pi * tau / 2)
    if abs(K.imag) > 1e-10 * abs(K):
        raise ArithmeticError(f"normalization constant is not real: {K}")
    # K is real and negative; the normalization e^g ~ 1/p needs e^ell = |K|
    exp_ell = abs(K.real)
    proof_form = -np.exp(-1j * np.pi * tau) * d1**2 / th1_tau**2
    printed_form = -(d1**2) / th1_tau**2 * np.exp(-1j * np.pi * tau / 2)
    res = abs(K**2 - proof_form) / abs(proof_form)
    res_printed = abs(K**2 - printed_form) / abs(proof_form)
    return GFunction(tau, K, float(np.log(exp_ell)), exp_ell, float(res), float(res_printed))


def _g_upper_core(p, tau):
    """``g - ell`` in the upper region (also its analytic continuation)."""
    t2 = 2 * tau
    return (1j * np.pi * (p - tau / 2) - 0.5j * np.pi
            + np.log(theta(1, p, t2)) - np.log(theta(1, p - tau, t2)))


def g_minus_ell(gf: GFunction, p, side: Side = Side.OFF):
    """``g(p) - ell`` with a fixed (principal-log) branch of the imaginary part."""
    tau = gf.tau
    sgn, p0 = region_sign(p, tau, side)
    if np.any(lattice_distance(p0, tau) < 1e-10):
        raise PoleError("g has a logarithmic singularity at p = 0")
    out = sgn * _g_upper_core(p0, tau)
    return out if np.ndim(out) else out[()]


def g_eval(gf: GFunction, p, side: Side = Side.OFF):
    """``e^{g(p)}``; single valued on the torus minus gamma."""
    tau = gf.tau
    t2 = 2 * tau
    sgn, p0 = region_sign(p, tau, side)
    if np.any(lattice_distance(p0, tau) < 1e-10):
        raise PoleError("e^g has a pole at p = 0")
    ratio = theta(1, p0, t2) / theta(1, p0 - tau, t2)
    up = np.exp(1j * np.pi * (p0 - tau / 2) - 0.5j * np.pi) * ratio
    lo = np.exp(-1j * np.pi * (p0 - tau / 2) + 0.5j * np.pi) / ratio
    out = gf.exp_ell * np.where(sgn > 0, up, lo)
    return out if np.ndim(out) else out[()]


def g_weierstrass(curve: RealCurve, p):
    """``e^{2(g - ell)}`` from the conformal map of the slit X-plane.

    ``(2/(e2 - e3)) [(X - (e2+e3)/2) + sqrt((X - e2)(X - e3))]`` with the
    radical cut on ``[e3, e2]`` and behaving like ``X`` at infinity.
    """
    X, _ = to_weierstrass(curve, p)
    e1, e2, e3 = curve.roots
    rad = np.sqrt(X - e2) * np.sqrt(X - e3)
    return 2 / (e2 - e3) * ((X - (e2 + e3) / 2) + rad)


# ---------------------------------------------------------------- H and kernels


def _hfrak0(x, tau):
    """``pi theta3 theta4 theta2(x)/theta1(x)``: square root of ``wp - e1``, residue 1 at 0."""
    a = complex(theta_deriv(1, 0.0, tau, 1)) / complex(theta(2, 0.0, tau))
    return a * theta(2, x, tau) / theta(1, x, tau)


def H_eval(curve, p, side: Side = Side.OFF):
    """``H = dg/dp``: ``-h`` in the lower region, ``+h`` in the upper one."""
    tau = _tau(curve)
    sgn, p0 = region_sign(p, tau, side)
    if np.any(lattice_distance(p0, tau) < 1e-10):
        raise PoleError("H has a simple pole at p = 0")
    out = sgn * _hfrak0(p0, tau)
    return out if np.ndim(out) else out[()]


def H_from_g(curve, p, side: Side = Side.OFF):
    """``H`` as the derivative of the theta form of ``g`` (independent route)."""
    tau = _tau(curve)
    sgn, p0 = region_sign(p, tau, side)
    t2 = 2 * tau
    up = 1j * np.pi + theta_logderiv(1, p0, t2) - theta_logderiv(1, p0 - tau, t2)
    out = sgn * up
    return out if np.ndim(out) else out[()]


def scalar_cauchy(curve, p, q):
    """Scalar Cauchy kernel ``C(p, q)`` (function part of ``C(p, q) dp``)."""
    tau = _tau(curve)
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if np.any(lattice_distance(p - q, tau) < 1e-10):
        raise PoleError("Cauchy kernel evaluated on the diagonal p = q")
    if np.any(lattice_distance(p, tau) < 1e-10) or np.any(lattice_distance(q - 0.5, tau) < 1e-10):
        raise PoleError("Cauchy kernel evaluated at a pole (p = 0 or q = 1/2)")
    d1 = complex(theta_deriv(1, 0.0, tau, 1))
    num = d1 * theta(1, q, tau) * theta(1, p - 0.5, tau) * theta(1, p - q + 0.5, tau)
    den = theta(1, 0.5, tau) * theta(1, p, tau) * theta(1, p - q, tau) * theta(1, q - 0.5, tau)
    return num / den


def scalar_cauchy_weierstrass(curve, p, q):
    """Same kernel from the Weierstrass-coordinate expression."""
    tau = _tau(curve)
    wp, wpp, _ = weierstrass(p, tau)
    wq, wqp, _ = weierstrass(q, tau)
    e1 = complex(weierstrass(0.5, tau)[0]).real
    return 0.5 * ((wpp + wqp) / (wp - wq) - wqp / (e1 - wq))


# ---------------------------------------------------------------- Szego function


@dataclass
class SzegoFunction:
    weight: Weight
    tau: complex
    N: int = 256
    grid_values: np.ndarray = field(default=None, repr=False)
    S_inf: float = 0.0

    @property
    def is_flat(self) -> bool:
        return self.weight.is_flat


def make_szego(curve, weight: Weight = FLAT, N: int = 256) -> SzegoFunction:
    tau = _tau(curve)
    sz = SzegoFunction(weight, tau, N, weight.of_s(np.arange(N) / N))
    if not weight.is_flat:
        s0 = complex(szego_eval(sz, curve, 0.0))
        if abs(s0.imag) > 1e-10 * max(1.0, abs(s0)):
            raise ArithmeticError(f"S(0) should be real, got {s0}")
        sz.S_inf = s0.real
    return sz


def _szego_integral(sz: SzegoFunction, p, pv: bool):
    """``(1/2 pi i) int_gamma w(q) hfrak0(p - q) dq`` by the periodic trapezoid rule.

    With ``pv`` the nodes are offset half a step from ``Re p`` so the
    principal value at a point of gamma is computed spectrally.
    """
    tau = sz.tau
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    out = np.empty(p.shape, dtype=complex)
    for i, pi_ in np.ndenumerate(p):
        if pv:
            N = sz.N
            s = pi_.real + (np.arange(N) + 0.5) / N
        else:
            dist = abs((pi_.imag - tau.imag / 2 + tau.imag / 2) % tau.imag - tau.imag / 2)
            N = sz.N
            if dist > 0:
                N = max(N, int(2 ** np.ceil(np.log2(45 / (2 * np.pi * dist)))))
            N = min(N, 1 << 16)
            s = np.arange(N) / N
        q = s + tau / 2
        vals = sz.weight.of_s(s) * _hfrak0(pi_ - q, tau)
        out[i] = vals.sum() / N / (2j * np.pi)
    return out


def szego_eval(sz: SzegoFunction, curve, p, side: Side = Side.OFF):
    """Szego function ``S(p)``; boundary values on gamma selected by ``side``."""
    tau = sz.tau
    p = np.asarray(p, dtype=complex)
    if sz.is_flat:
        out = np.zeros(p.shape, dtype=complex)
        return out if out.ndim else out[()]
    sgn, p0 = region_sign(p, tau, side)
    flat = np.atleast_1d(p0)
    sg = np.atleast_1d(sgn) * np.ones(flat.shape)
    on = np.abs(flat.imag - tau.imag / 2) <= _GAMMA_TOL * max(1.0, tau.imag)
    res = np.empty(flat.shape, dtype=complex)
    if np.any(~on):
        res[~on] = sg[~on] * _szego_integral(sz, flat[~on], pv=False)
    if np.any(on):
        w = sz.weight.of_s(flat[on] - tau / 2)
        pvv = _szego_integral(sz, flat[on], pv=True)
        # I(p_+-) = -+ w/2 + PV I
        res[on] = np.where(sg[on] > 0, -0.5 * w + pvv, -(0.5 * w + pvv))
    out = res.reshape(p.shape)
    return out if out.ndim else out[()]


def szego_eval_direct(sz: SzegoFunction, curve, p, side: Side = Side.OFF, N: int | None = None):
    """Off-contour ``S(p)`` from the literal kernel ``C(p,q) w(q) H(q_+) / (2 pi i H(p))``."""
    tau = sz.tau
    N = N or 4 * sz.N
    s = np.arange(N) / N
    q = s + tau / 2
    Hq = H_eval(tau, q, Side.PLUS)
    w = sz.weight.of_s(s)
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    out = np.empty(p.shape, dtype=complex)
    for i, pi_ in np.ndenumerate(p):
        Cv = scalar_cauchy(tau, pi_, q)
        out[i] = np.sum(Cv * w * Hq) / N / (2j * np.pi * H_eval(tau, pi_, side))
    return out if out.size > 1 else out[0]


def phi_eval(n: int, gf: GFunction, sz: SzegoFunction, p, side: Side = Side.OFF):
    """Effective potential ``(n - 1)(g - ell) + S + w/2``."""
    tau = gf.tau
    gl = g_minus_ell(gf, p, side)
    S = szego_eval(sz, tau, p, side)
    w = sz.weight(p, tau)
    return (n - 1) * gl + S + 0.5 * w


# ---------------------------------------------------------------- model matrix


@dataclass(frozen=True)
class ModelMatrix:
    parity: str
    D: float
    tau: complex
    C: np.ndarray = field(repr=False, default=None)

    @property
    def even(self) -> bool:
        return self.parity == "even"


def make_model_matrix(n_or_parity, D, curve) -> ModelMatrix:
    if isinstance(n_or_parity, str):
        parity = n_or_parity
        if parity not in ("even", "odd"):
            raise ValueError("parity must be 'even' or 'odd'")
    else:
        parity = "even" if int(n_or_parity) % 2 == 0 else "odd"
    d = D.d if isinstance(D, DivisorPoint) else DivisorPoint(D).d
    tau = _tau(curve)
    t2 = 2 * tau
    r = complex(theta(1, d, t2)) / complex(theta(1, d + tau, t2))
    base = complex(theta_deriv(1, 0.0, t2, 1)) / complex(theta(2 if parity == "even" else 3, 0.0, t2))
    C = np.diag([r * base, base / r])
    return ModelMatrix(parity, d, tau, C)


def f_eval(mm: ModelMatrix, p):
    tau, t2, d = mm.tau, 2 * mm.tau, mm.D
    k = 2 if mm.even else 3
    p = np.asarray(p, dtype=complex)
    return (np.exp(-1j * np.pi * p) * theta(1, p - d - tau, t2) * theta(k, p, t2)
            / (theta(1, p - d, t2) * theta(1, p, t2)))


def h_eval(mm: ModelMatrix, p):
    tau, t2, d = mm.tau, 2 * mm.tau, mm.D
    k = 3 if mm.even else 2
    p = np.asarray(p, dtype=complex)
    pref = np.exp(-1j * np.pi * p + 1j * np.pi * tau + 2j * np.pi * d - 0.5j * np.pi)
    return pref * theta(1, p - d - tau, t2) * theta(k, p, t2) / (theta(1, p - d, t2) * theta(4, p, t2))


def model_matrix_eval(mm: ModelMatrix, p, side: Side = Side.OFF, C=None):
    """``M(p)`` as an array of shape ``p.shape + (2, 2)``."""
    tau = mm.tau
    sgn, p0 = region_sign(p, tau, side)
    if np.any(lattice_distance(p0, tau) < 1e-10) or np.any(lattice_distance(p0 - mm.D, tau) < 1e-10):
        raise PoleError("model matrix evaluated at a pole (0 or D)")
    f0, ft = f_eval(mm, p0), f_eval(mm, p0 + tau)
    h0, ht = h_eval(mm, p0), h_eval(mm, p0 + tau)
    up = sgn > 0
    m11 = np.where(up, -ft, f0)
    m12 = np.where(up, f0, ft)
    m21 = np.where(up, -ht, h0)
    m22 = np.where(up, h0, ht)
    raw = np.stack([np.stack([m11, m12], -1), np.stack([m21, m22], -1)], -2)
    C = mm.C if C is None else C
    return np.einsum("ij,...jk->...ik", C, raw)


# ---------------------------------------------------------------- asymptotics


def _g_pow(gf, p, side, n):
    """``e^{(n-1)(g - ell)}``."""
    return (g_eval(gf, p, side) / gf.exp_ell) ** (n - 1)


def pi_asym(n: int, curve, D, gf: GFunction, sz: SzegoFunction, mm: ModelMatrix, p,
            lens: float | None = None):
    """Leading-order ``pi_n(p)`` away from the lens strip around gamma."""
    tau = _tau(curve)
    d = D.d if isinstance(D, DivisorPoint) else float(D)
    p = np.asarray(p, dtype=complex)
    lens = lens_eps(tau) if lens is None else lens
    p0 = _reduce_im(p, tau)
    if np.any(np.abs(p0.imag - tau.imag / 2) <= lens):
        raise ValueError("off-contour asymptotics requested inside the lens strip")
    if np.any(lattice_distance(p0 - d, tau) < 0.05):
        raise ValueError("off-contour asymptotics requested too close to the divisor point")
    M11 = model_matrix_eval(mm, p0)[..., 0, 0]
    S = szego_eval(sz, tau, p0)
    return (np.exp(-sz.S_inf + (n - 1) * gf.ell + S) * M11 * _g_pow(gf, p0, Side.OFF, n))


def phase_Phi(gf: GFunction, s):
    """``Im g(s + tau/2 + i0)``, unwrapped continuously along ``s``."""
    s = np.asarray(s, dtype=float)
    tau = gf.tau
    t2 = 2 * tau
    ang = np.angle(theta(1, s + tau / 2, t2) / theta(1, s - tau / 2, t2))
    return np.pi * s - np.pi / 2 + np.unwrap(ang)


def pi_asym_on_gamma(n: int, curve, D, gf: GFunction, sz: SzegoFunction, mm: ModelMatrix, s,
                     details: bool = False):
    """Leading-order real values of ``pi_n(s + tau/2)`` on gamma.

    ``2 e^{(n-1) ell - S_inf} Re(M11(p_+) e^{S(p_+)} e^{(n-1)(g_+ - ell)})``.
    With ``details`` also returns the amplitude ``A(s) = |M11(p_+)|`` and the
    phase ``rho(s) = arg M11(p_+)`` (continuously unwrapped).
    """
    tau = _tau(curve)
    s = np.asarray(s, dtype=float)
    p = s + tau / 2
    M11 = model_matrix_eval(mm, p, Side.PLUS)[..., 0, 0]
    S = szego_eval(sz, tau, p, Side.PLUS)
    val = 2 * np.exp((n - 1) * gf.ell - sz.S_inf) * (M11 * np.exp(S) * _g_pow(gf, p, Side.PLUS, n)).real
    if not details:
        return val
    A = np.abs(M11)
    rho = np.unwrap(np.angle(M11)) if M11.ndim else np.angle(M11)
    return val, A, rho


def norm_asym(n: int, curve, D, sz: SzegoFunction, gf: GFunction | None = None):
    """Closed-form asymptotic squared norm ``h_n`` (theta expression).

    The expression is the residue ``2 pi i res_{p=0} M11 M12`` times
    ``e^{2(n-1) ell - 2 S_inf}``; written out it is minus the product
    ``2 pi e^{-i pi tau} e^{-2 i pi D} theta1(D)^2/theta1(D+tau)^2
    theta1'(0)/theta4(0) (theta3(0)/theta2(0))^{+-1}`` (all at ``2 tau``),
    which is real and positive.
    """
    if n < 2:
        raise ValueError("norm asymptotics need n >= 2")
    tau = _tau(curve)
    d = D.d if isinstance(D, DivisorPoint) else float(D)
    gf = gf or make_gfunction(tau)
    t2 = 2 * tau
    th = lambda k, x: complex(theta(k, x, t2))  # noqa: E731
    sharp = 1 if n % 2 == 0 else -1
    val = (2 * np.pi * np.exp(-1j * np.pi * tau) * np.exp(-2j * np.pi * d)
           * th(1, d) ** 2 / th(1, d + tau) ** 2
           * complex(theta_deriv(1, 0.0, t2, 1)) / th(4, 0.0)
           * (th(3, 0.0) / th(2, 0.0)) ** sharp)
    val = -val * np.exp(2 * (n - 1) * gf.ell - 2 * sz.S_inf)
    if abs(val.imag) > 1e-10 * abs(val) or not val.real > 0:
        raise ArithmeticError(f"asymptotic norm is not real positive: {val}")
    return float(val.real)


def norm_asym_residue(n: int, curve, D, sz: SzegoFunction, gf: GFunction | None = None):
    """Same quantity computed as ``2 pi i C11 f(tau)`` (independent route)."""
    tau = _tau(curve)
    gf = gf or make_gfunction(tau)
    mm = make_model_matrix(n, D, tau)
    res = mm.C[0, 0] * complex(f_eval(mm, tau))
    return complex(2j * np.pi * res * np.exp(2 * (n - 1) * gf.ell - 2 * sz.S_inf))


def zero_density(curve, s):
    """Limiting zero density ``sqrt(e1 - wp(s + tau/2)) / pi`` (normalized lattice)."""
    tau = _tau(curve)
    s = np.asarray(s, dtype=float)
    wp = weierstrass(s + tau / 2, tau)[0].real
    e1 = weierstrass(0.5, tau)[0].real
    return np.sqrt(np.maximum(e1 - wp, 0.0)) / np.pi


def zero_cdf(curve, s, N: int = 2048):
    """Cumulative limiting zero distribution ``int_0^s dmu0`` (exact on [0, 1])."""
    tau = _tau(curve)
    gf = make_gfunction(tau)
    s = np.asarray(s, dtype=float)
    # Im g_+ decreases by pi times the mass, so the CDF is -(Phi(s) - Phi(0)) / pi.
    grid = np.linspace(0.0, 1.0, N + 1)
    Phi = phase_Phi(gf, grid)
    cdf = -(Phi - Phi[0]) / np.pi
    return np.interp(s, grid, cdf)
