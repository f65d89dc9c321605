"""Orthogonal sections on real elliptic curves: exact Gram-matrix computation
and closed-form steepest-descent asymptotics."""

from .curve import DivisorPoint, RealCurve, Side, from_roots, from_tau
from .exact import FLAT, Weight, moments, orthogonal_section, zeros

__version__ = "0.1.0"

__all__ = [
    "DivisorPoint",
    "RealCurve",
    "Side",
    "from_roots",
    "from_tau",
    "FLAT",
    "Weight",
    "moments",
    "orthogonal_section",
    "zeros",
]
