import math
from itertools import combinations

import numpy as np
import pytest

from conftest import D_THIRD, TRIG_WEIGHT
from elliptic_ortho.exact import (
    FLAT,
    PrecisionEscalationRequired,
    Weight,
    ZeroCountError,
    eval_section,
    leading_minors,
    moments,
    norm_sq,
    orthogonal_section,
    sigma,
    sigma_basis,
    zeros,
)
from elliptic_ortho.special import PoleError


def test_weight_evaluation():
    w = Weight((0.1, 0.5), (0.3, -0.2))
    s = 0.17
    ref = 0.1 + 0.5 * math.cos(2 * math.pi * s) + 0.3 * math.sin(2 * math.pi * s) - 0.2 * math.sin(4 * math.pi * s)
    assert w.of_s(s) == pytest.approx(ref)
    assert w.of_s(s + 1) == pytest.approx(ref)
    assert FLAT.is_flat and not w.is_flat
    assert float(w.of_s_mp(s)) == pytest.approx(ref)


def test_sigma_basics(curve_int):
    c = curve_int
    assert sigma(c, D_THIRD, 0, 0.3 + 0.2j) == 1
    h = 1e-5
    res = 0.5 * h * (sigma(c, D_THIRD, 1, D_THIRD + h) - sigma(c, D_THIRD, 1, D_THIRD - h))
    assert abs(res + 1) < 1e-8
    with pytest.raises(PoleError):
        sigma(c, D_THIRD, 1, D_THIRD)
    with pytest.raises(PoleError):
        sigma_basis(c, D_THIRD, 3, 0.0)


@pytest.mark.parametrize("j", [2, 3, 4])
def test_sigma_pole_order(curve_int, j):
    # p^j sigma_j(p) has a finite nonzero limit: two-point Richardson extrapolation
    c = curve_int
    f = lambda p: p**j * sigma(c, D_THIRD, j, p)  # noqa: E731
    a, b = f(1e-4), f(2e-4)
    lim = 2 * a - b
    assert abs(lim) > 0.1
    assert abs(a - lim) < 1e-5 * abs(lim)


def test_sigma_real_on_ovals(curve_int):
    c = curve_int
    s = np.linspace(0.01, 0.99, 17)
    B = sigma_basis(c, D_THIRD, 8, s + c.tau / 2)
    assert np.max(np.abs(B.imag)) < 1e-9 * np.max(np.abs(B.real))
    B = sigma_basis(c, D_THIRD, 8, s[np.abs(s - D_THIRD) > 0.02])
    assert np.max(np.abs(B.imag)) < 1e-9 * np.max(np.abs(B.real))


def test_moment_matrix_properties(curve_int, mom_int):
    mu = mom_int.mu
    assert mu[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(mu, mu.T)
    assert mom_int.self_convergence < 1e-12
    mu512 = moments(curve_int, D_THIRD, n_max=2, N=512).mu
    assert abs(mu[0, 2] - mu512[0, 2]) < 1e-12 * abs(mu[0, 2])
    minors = leading_minors(mom_int)
    assert minors[6] > 0
    assert np.all(minors > 0)


@pytest.mark.parametrize("weight", [FLAT, TRIG_WEIGHT, Weight((0.2,), (0.0, -0.7))])
def test_gram_positivity(curve_half, weight):
    mom = moments(curve_half, D_THIRD, weight, n_max=12)
    assert np.all(leading_minors(mom) > 0)


def test_moment_preconditions(curve_int):
    with pytest.raises(ValueError):
        moments(curve_int, D_THIRD, N=100)
    with pytest.raises(ValueError):
        moments(curve_int, D_THIRD, N=32)
    with pytest.raises(ValueError):
        moments(curve_int, 0.0)


def test_escalation_paths(curve_int, monkeypatch):
    import elliptic_ortho.exact as ex

    monkeypatch.setattr(ex, "PIVOT_TOL", 0.5)
    with pytest.raises(PrecisionEscalationRequired):
        moments(curve_int, D_THIRD, n_max=6, allow_escalation=False)
    mom = moments(curve_int, D_THIRD, n_max=6, N=64, allow_escalation=True)
    assert mom.precision == "extended"
    ref = moments(curve_int, D_THIRD, n_max=6, N=64, precision="double")
    assert np.allclose(mom.mu, ref.mu, rtol=1e-12)


def test_section_degree_zero(mom_int):
    sec = orthogonal_section(mom_int, 0)
    assert list(sec.coeffs) == [1.0]
    assert sec.norm_sq == mom_int.mu[0, 0] == norm_sq(sec)


def test_section_matches_determinant_formula(mom_int):
    # pi_n = det[[mu_{jk}]_{j<=n, k<n} | sigma_j] / D_n: coefficient of sigma_j is a signed minor
    n = 3
    mu = mom_int.mu
    sec = orthogonal_section(mom_int, n)
    Dn = np.linalg.det(mu[:n, :n])
    for j in range(n + 1):
        rows = [r for r in range(n + 1) if r != j]
        minor = np.linalg.det(mu[np.ix_(rows, range(n))])
        cj = (-1) ** (j + n) * minor / Dn
        assert abs(sec.coeffs[j] - cj) < 1e-9 * max(1.0, abs(cj))


def test_orthogonality_residuals(mom_int):
    mu = mom_int.mu
    sec = orthogonal_section(mom_int, 6)
    assert sec.coeffs[-1] == 1.0
    for k in range(6):
        r = sec.coeffs @ mu[:7, k]
        assert abs(r) < 1e-8 * math.sqrt(sec.norm_sq * mu[k, k])


def test_mutual_orthogonality(curve_int, mom_int):
    c = curve_int
    s = np.arange(512) / 512
    vals = [eval_section(orthogonal_section(mom_int, n), c, D_THIRD, s + c.tau / 2).real for n in range(11)]
    h = [np.mean(v * v) for v in vals]
    for n in range(11):
        for m in range(n):
            assert abs(np.mean(vals[n] * vals[m])) < 1e-7 * math.sqrt(h[n] * h[m])


def test_eval_real_monic_schwarz(curve_int, mom_int):
    c = curve_int
    sec5 = orthogonal_section(mom_int, 5)
    v = eval_section(sec5, c, D_THIRD, 0.37 + c.tau / 2)
    assert abs(v.imag) < 1e-9 * abs(v)
    sec4 = orthogonal_section(mom_int, 4)
    a = 1e-4**4 * eval_section(sec4, c, D_THIRD, 1e-4)
    b = (2e-4) ** 4 * eval_section(sec4, c, D_THIRD, 2e-4)
    # p^4 pi_4 = 1 + c_3 p + O(p^2)
    assert abs(2 * a - b - 1) < 1e-6
    p = 0.31 + 0.17j
    assert abs(eval_section(sec5, c, D_THIRD, np.conj(p)) - np.conj(eval_section(sec5, c, D_THIRD, p))) < 1e-9 * abs(
        eval_section(sec5, c, D_THIRD, p))


def test_reference_zeros_degree6(curve_int, mom_int):
    gz, az = zeros(orthogonal_section(mom_int, 6), curve_int, D_THIRD)
    expected = [0.0460022, 0.173841, 0.337538, 0.569893, 0.781358, 0.924899]
    assert np.max(np.abs(np.array(gz) - expected)) < 2e-3
    assert abs(az - 0.4998) < 2e-3


def test_odd_degree_zero_count(curve_int, mom_int):
    gz, az = zeros(orthogonal_section(mom_int, 5), curve_int, D_THIRD)
    assert len(gz) == 6 and az is None


def test_zero_count_violation_is_hard_error(curve_int, mom_int):
    from elliptic_ortho.exact import OrthoSection

    sec = orthogonal_section(mom_int, 5)
    # a degree-5 section labelled as degree 6 lacks the zero on alpha
    fake = OrthoSection(6, np.append(sec.coeffs, 0.0), sec.norm_sq)
    with pytest.raises(ZeroCountError):
        zeros(fake, curve_int, D_THIRD)


def test_norm_against_direct_quadrature(curve_int, mom_int):
    c = curve_int
    sec = orthogonal_section(mom_int, 4)
    s = np.arange(1024) / 1024
    direct = np.mean(eval_section(sec, c, D_THIRD, s + c.tau / 2).real ** 2)
    assert abs(sec.norm_sq / direct - 1) < 1e-8


def test_norms_positive(mom_int):
    assert all(orthogonal_section(mom_int, n).norm_sq > 0 for n in range(13))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_andreief_identity(curve_int, mom_int, n):
    # D_n = (1/n!) int det[sigma_a(p_k)]^2 prod dp_k; on an N-node product grid the
    # symmetric sum reduces to strictly increasing node tuples
    N = 32
    c = curve_int
    s = np.arange(N) / N
    B = sigma_basis(c, D_THIRD, n - 1, s + c.tau / 2).real
    total = 0.0
    for idx in np.array_split(np.array(list(combinations(range(N), n))), 8):
        S = B[:, idx].transpose(1, 0, 2)
        total += np.sum(np.linalg.det(S) ** 2)
    brute = total / N**n
    Dn = leading_minors(mom_int)[n - 1]
    assert abs(brute / Dn - 1) < 1e-6


def test_extended_precision_section_agrees(curve_half):
    mx = moments(curve_half, D_THIRD, n_max=8, N=64, precision="extended")
    md = moments(curve_half, D_THIRD, n_max=8, N=64)
    a = orthogonal_section(mx, 8)
    b = orthogonal_section(md, 8)
    assert a.precision == "extended"
    assert np.allclose(a.coeffs, b.coeffs, rtol=1e-8, atol=1e-8 * np.abs(b.coeffs).max())
    assert a.norm_sq == pytest.approx(b.norm_sq, rel=1e-10)
