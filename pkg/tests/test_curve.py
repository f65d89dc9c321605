import mpmath
import numpy as np
import pytest

from elliptic_ortho.curve import (
    ContourPoint,
    DivisorPoint,
    Side,
    alpha_point,
    from_roots,
    from_tau,
    gamma_point,
    to_weierstrass,
)


def test_half_roots_modular_parameter(curve_half):
    assert abs(curve_half.tau_im - 0.6563) < 5e-4
    assert curve_half.tau.real == 0


def test_symmetric_roots_give_square_lattice():
    c = from_roots(3.0, 0.0, -3.0)
    assert c.tau == pytest.approx(1j, abs=1e-15)


def test_tau_against_extended_agm_oracle(curve_int):
    with mpmath.workdps(30):
        e1, e2, e3 = mpmath.mpf(2), mpmath.mpf(1), mpmath.mpf(-3)
        m = (e2 - e3) / (e1 - e3)
        t = mpmath.ellipk(1 - m) / mpmath.ellipk(m)
    assert abs(curve_int.tau_im - float(t)) < 1e-14


def test_centering_and_invariants():
    c = from_roots(3.0, 2.0, -1.0)
    assert abs(c.e1 + c.e2 + c.e3) < 1e-12
    for e, h in zip(c.roots, c.hat_e):
        assert abs(c.scale * h - e) < 1e-10
    assert abs(c.scale - 1 / (2 * c.omega1) ** 2) < 1e-8 * c.scale


@pytest.mark.parametrize("roots", [(1, 1, -2), (1.0, 2.0, -3.0), (1.0, 1.0 + 1e-14, -2.0)])
def test_degenerate_or_unordered_roots_rejected(roots):
    with pytest.raises(ValueError):
        from_roots(*roots)


def test_complex_roots_rejected():
    with pytest.raises(ValueError):
        from_roots(1 + 1j, 0, -1)


def test_from_tau_roundtrip():
    c = from_tau(1j, scale=2.0)
    assert c.e1 == pytest.approx(-c.e3)
    assert abs(c.e2) < 1e-12
    c2 = from_roots(*c.roots)
    assert c2.tau == pytest.approx(1j, abs=1e-13)
    assert c2.scale == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        from_tau(0.2 + 1j)


def test_half_period_images(curve_int):
    c = curve_int
    X, W = to_weierstrass(c, 0.5)
    assert abs(X - c.e1) < 1e-12 and abs(W) < 1e-10
    X, W = to_weierstrass(c, c.tau / 2)
    assert abs(X - c.e3) < 1e-12 and abs(W) < 1e-10
    assert abs(to_weierstrass(c, gamma_point(c, 0.0).p)[0] - c.e3) < 1e-12
    assert abs(to_weierstrass(c, gamma_point(c, 0.5).p)[0] - c.e2) < 1e-12
    assert abs(to_weierstrass(c, alpha_point(c, 0.5).p)[0] - c.e1) < 1e-12


def test_cubic_residual(curve_int):
    c = curve_int
    X, W = to_weierstrass(c, 0.2 + 0.3j)
    res = W**2 - 4 * (X - c.e1) * (X - c.e2) * (X - c.e3)
    assert abs(res) < 1e-8 * abs(W) ** 2


def test_ovals_map_to_real_intervals(curve_int):
    c = curve_int
    s = np.linspace(0, 1, 33)[:-1]
    Xg, Wg = to_weierstrass(c, s + c.tau / 2)
    assert np.all(np.abs(Xg.imag) < 1e-9) and np.all(np.abs(Wg.imag) < 1e-9 * np.abs(Wg).max())
    assert np.all((Xg.real >= c.e3 - 1e-12) & (Xg.real <= c.e2 + 1e-12))
    Xa, _ = to_weierstrass(c, s[1:])
    assert np.all(Xa.real >= c.e1 - 1e-12)


def test_schwarz_symmetry(curve_half, rng):
    c = curve_half
    p = rng.uniform(0.02, 0.98, 20) + 1j * rng.uniform(0.02, 0.98, 20) * c.tau_im
    X, W = to_weierstrass(c, p)
    Xc, Wc = to_weierstrass(c, np.conj(p))
    assert np.all(np.abs(Xc - np.conj(X)) < 1e-10 * np.abs(X))
    assert np.all(np.abs(Wc - np.conj(W)) < 1e-10 * np.abs(W))


def test_holomorphic_differential_is_dp(curve_int):
    c = curve_int
    h = 1e-6
    s = (np.arange(16) + 0.3) / 16
    p = s + c.tau / 2
    X1, _ = to_weierstrass(c, p + h)
    X0, _ = to_weierstrass(c, p - h)
    _, W = to_weierstrass(c, p)
    ratio = ((X1 - X0) / (2 * h)) / (2 * c.omega1 * W)
    assert np.all(np.abs(ratio - 1) < 1e-6)


def test_divisor_point_validation():
    assert DivisorPoint(0.25).d == 0.25
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            DivisorPoint(bad)


def test_contour_points(curve_half):
    gp = gamma_point(curve_half, 0.3, Side.PLUS)
    assert isinstance(gp, ContourPoint) and gp.side is Side.PLUS
    assert gp.p.imag == pytest.approx(curve_half.tau_im / 2)
    assert alpha_point(curve_half, 0.3).p == 0.3


def test_alpha_branch_follows_wp_prime(curve_int):
    # W is the scaled wp', so X decreases from infinity and W < 0 on (0, 1/2)
    c = curve_int
    s = np.linspace(0.05, 0.45, 9)
    _, W = to_weierstrass(c, s)
    assert np.all(W.real < 0)
