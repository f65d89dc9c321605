"""Real elliptic M-curves in the elliptic and Weierstrass parametrizations.

A curve ``W^2 = 4 (X - e1)(X - e2)(X - e3)`` with real roots is the torus
``C / (Z + tau Z)`` with ``tau`` purely imaginary.  The two pictures are
linked by the homothety ``X = s * wp(p; tau)``, ``W = s**1.5 * wp'(p; tau)``
with ``s = 1 / (2 omega1)**2``.

The contour ``gamma`` is the horizontal line ``Im p = Im tau / 2`` (the oval
``[e3, e2]``) and ``alpha`` is the real axis (the oval ``[e1, inf)``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .special import complete_elliptic_K, half_period_values, weierstrass

__all__ = [
    "Side",
    "RealCurve",
    "DivisorPoint",
    "ContourPoint",
    "from_roots",
    "from_tau",
    "to_weierstrass",
    "gamma_point",
    "alpha_point",
]


class Side(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    OFF = "off"


@dataclass(frozen=True)
class RealCurve:
    e1: float
    e2: float
    e3: float
    tau: complex
    scale: float
    omega1: float
    hat_e: tuple = field(repr=False, default=())

    @property
    def tau_im(self) -> float:
        return self.tau.imag

    @property
    def roots(self) -> tuple:
        return (self.e1, self.e2, self.e3)

    @property
    def g2(self) -> float:
        return 2 * (self.e1**2 + self.e2**2 + self.e3**2)

    @property
    def g3(self) -> float:
        return 4 * self.e1 * self.e2 * self.e3


@dataclass(frozen=True)
class DivisorPoint:
    """Position ``d`` in (0, 1) of the extra pole on the alpha oval."""

    d: float

    def __post_init__(self):
        d = float(self.d)
        if not (0.0 < d < 1.0):
            raise ValueError(f"divisor position must lie in the open interval (0, 1), got {self.d!r}")
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class ContourPoint:
    p: complex
    side: Side = Side.OFF


def from_roots(e1: float, e2: float, e3: float) -> RealCurve:
    """Build the curve from three real roots (centered if their sum is not zero)."""
    roots = []
    for e in (e1, e2, e3):
        if isinstance(e, complex) or np.iscomplexobj(e):
            if complex(e).imag != 0:
                raise ValueError("roots must be real for an M-curve")
            e = complex(e).real
        roots.append(float(e))
    mean = sum(roots) / 3
    e1, e2, e3 = (r - mean for r in roots)
    span = max(abs(e1), abs(e3), 1.0)
    if not (e3 < e2 < e1) or min(e1 - e2, e2 - e3) <= 1e-12 * span:
        raise ValueError("roots must be distinct and ordered e3 < e2 < e1")
    m = (e2 - e3) / (e1 - e3)
    K = complete_elliptic_K(m)
    Kp = complete_elliptic_K(1 - m)
    tau = 1j * Kp / K
    omega1 = K / math.sqrt(e1 - e3)
    hat = half_period_values(tau)
    scale = (e1 - e3) / (hat[0] - hat[2])
    alt = 1 / (2 * omega1) ** 2
    if abs(scale - alt) > 1e-8 * abs(alt):
        raise ArithmeticError(f"inconsistent homothety: {scale} vs {alt}")
    return RealCurve(e1, e2, e3, tau, scale, omega1, hat)


def from_tau(tau, scale: float = 1.0) -> RealCurve:
    """Build the curve of a purely imaginary ``tau``; roots are ``scale * wp(half periods)``."""
    tau = complex(tau)
    if tau.real != 0 or not tau.imag > 0:
        raise ValueError("real curves need a purely imaginary tau with Im tau > 0")
    hat = half_period_values(tau)
    e1, e2, e3 = (scale * h for h in hat)
    omega1 = 0.5 / math.sqrt(scale)
    return RealCurve(e1, e2, e3, tau, float(scale), omega1, hat)


def to_weierstrass(curve: RealCurve, p):
    """Map elliptic coordinate(s) ``p`` to ``(X, W)`` on the curve."""
    wp, wpp, _ = weierstrass(p, curve.tau)
    return curve.scale * wp, curve.scale**1.5 * wpp


def gamma_point(curve: RealCurve, s: float, side: Side = Side.OFF) -> ContourPoint:
    return ContourPoint(complex(s + curve.tau / 2), side)


def alpha_point(curve: RealCurve, s: float) -> ContourPoint:
    return ContourPoint(complex(s), Side.OFF)
