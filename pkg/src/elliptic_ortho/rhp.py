"""Remainder Riemann-Hilbert problem, non-abelian Cauchy kernel, scalar solver.

The remainder ``R`` jumps on the two lens contours ``Im p = Im tau/2 +- eps``
(both oriented with increasing ``Re p``) by ``R_+ = R_- (1 + G)``, with
``G = e^{-2 phi} M E21 M^{-1}``.  It solves

    R(q) = 1 + (1/2 pi i) int R_-(p) G(p) C0(p, q) dp,

which is discretized with the periodic trapezoid rule on two interlaced
grids per contour: the equation at a node of one grid is quadratured on the
other, which yields the principal value spectrally.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .asym import (
    GFunction,
    ModelMatrix,
    SzegoFunction,
    g_minus_ell,
    lens_eps,
    model_matrix_eval,
    phi_eval,
    szego_eval,
)
from .curve import Side
from .special import PoleError, lattice_distance, theta_logderiv, weierstrass

__all__ = [
    "TyurinData",
    "RemainderSolution",
    "ScalarRHPSolution",
    "BelowAsymptoticRegime",
    "UnsolvableRHP",
    "tyurin_points",
    "tyurin",
    "omega0",
    "omega0_zeta",
    "kernel_A",
    "nonabelian_cauchy",
    "jump_G",
    "c0",
    "solve_R",
    "reconstruct_Y11",
    "solve_scalar_rhp",
]

log = logging.getLogger(__name__)

NEUMANN_TOL = 1e-14
NEUMANN_MAX = 200


class BelowAsymptoticRegime(ArithmeticError):
    """The small-norm iteration does not contract: ``n`` is too small."""


class UnsolvableRHP(ArithmeticError):
    """The scalar problem violates the lattice solvability condition."""

    def __init__(self, defect: float, z: complex):
        self.defect = float(defect)
        self.z = complex(z)
        super().__init__(f"unsolvable: lattice defect = {self.defect:.6g} (integral = {self.z:.6g})")


# ---------------------------------------------------------------- Tyurin data


def tyurin_points(mm: ModelMatrix):
    """Zeros of ``det M``: ``1/4, 3/4`` for even ``n``, shifted by ``tau/2`` for odd ``n``."""
    shift = 0.0 if mm.even else mm.tau / 2
    return (complex(0.25 + shift), complex(0.75 + shift))


@dataclass(frozen=True)
class TyurinData:
    points: tuple
    null_vectors: np.ndarray  # rows v1, v2
    residuals: tuple
    det_values: tuple

    @property
    def P(self) -> np.ndarray:
        return self.null_vectors

    @property
    def P_inv(self) -> np.ndarray:
        return np.linalg.inv(self.null_vectors)

    @property
    def det_P(self) -> complex:
        return complex(np.linalg.det(self.null_vectors))


def tyurin(mm: ModelMatrix, sv_tol: float = 1e-8) -> TyurinData:
    """Left null vectors of ``M`` at the Tyurin points from its SVD."""
    pts = tyurin_points(mm)
    vecs, res, dets = [], [], []
    for t in pts:
        # lower-region formula; on gamma the left kernels of M_+ and M_- coincide
        Mt = model_matrix_eval(mm, t, Side.MINUS)
        U, sv, _ = np.linalg.svd(Mt)
        if sv[1] > sv_tol * sv[0]:
            raise ArithmeticError(f"det M does not vanish at {t}: singular values {sv}")
        v = U[:, -1].conj()
        vecs.append(v)
        res.append(float(np.linalg.norm(v @ Mt) / (np.linalg.norm(v) * np.linalg.norm(Mt, 2))))
        dets.append(complex(np.linalg.det(Mt)))
    P = np.array(vecs)
    if abs(np.linalg.det(P)) <= 1e-6 * np.prod(np.linalg.norm(P, axis=1)):
        raise ArithmeticError("Tyurin null vectors are linearly dependent")
    return TyurinData(pts, P, tuple(res), tuple(dets))


# ---------------------------------------------------------------- kernels


def omega0(q, p, tau):
    """Third-kind differential ``theta1'/theta1 (p - q) - theta1'/theta1 (p)``.

    Residue ``+1`` at ``p = q`` and ``-1`` at ``p = 0``; identically zero for ``q = 0``.
    """
    q = np.asarray(q, dtype=complex)
    p = np.asarray(p, dtype=complex)
    if np.any(lattice_distance(p - q, tau) < 1e-12) or np.any(lattice_distance(p, tau) < 1e-12):
        raise PoleError("omega0 evaluated at one of its poles (p = q or p = 0)")
    return theta_logderiv(1, p - q, tau) - theta_logderiv(1, p, tau)


def omega0_zeta(q, p, tau):
    """``zeta(p - q) - zeta(p) + 2 eta1 q``; the Weierstrass form of :func:`omega0`."""
    q = np.asarray(q, dtype=complex)
    p = np.asarray(p, dtype=complex)
    zpq = weierstrass(p - q, tau)[2]
    zp = weierstrass(p, tau)[2]
    two_eta1 = weierstrass(0.5, tau)[2] * 2
    return zpq - zp + two_eta1 * q


def kernel_A(ty: TyurinData, q, tau):
    """``A(q) = P^{-1} diag(omega0_q(t1), omega0_q(t2)) P``; shape ``q.shape + (2, 2)``.

    This is the solution of ``v_j A = omega0_q(t_j) v_j``.
    """
    q = np.asarray(q, dtype=complex)
    w1 = omega0(q, ty.points[0], tau)
    w2 = omega0(q, ty.points[1], tau)
    P, Pi = ty.P, ty.P_inv
    return (np.multiply.outer(w1, np.outer(Pi[:, 0], P[0]))
            + np.multiply.outer(w2, np.outer(Pi[:, 1], P[1])))


def nonabelian_cauchy(ty: TyurinData, mm: ModelMatrix, p, q):
    """Matrix kernel ``C0(p, q) = omega0_q(p) 1 - A(q)``; shape ``broadcast + (2, 2)``."""
    tau = mm.tau
    p, q = np.broadcast_arrays(np.asarray(p, dtype=complex), np.asarray(q, dtype=complex))
    w = omega0(q, p, tau)
    return w[..., None, None] * np.eye(2) - kernel_A(ty, q, tau)


# ---------------------------------------------------------------- jump and c0


def _lens_nodes(tau, eps, s):
    up = s + tau / 2 + 1j * eps
    lo = s + tau / 2 - 1j * eps
    return up, lo


def jump_G(n: int, mm: ModelMatrix, gf: GFunction, sz: SzegoFunction, p):
    """``G = e^{-2 phi} M E21 M^{-1}`` at lens points ``p``; shape ``p.shape + (2, 2)``."""
    p = np.asarray(p, dtype=complex)
    M = model_matrix_eval(mm, p)
    Minv = np.linalg.inv(M)
    e = np.exp(-2 * phi_eval(n, gf, sz, p))
    # M E21 M^{-1} = (M[:, 1]) outer (Minv[0, :])
    return e[..., None, None] * M[..., :, 1, None] * Minv[..., None, 0, :]


def c0(curve, eps: float | None = None, samples: int = 256, gf: GFunction | None = None) -> float:
    """Half the minimum of ``Re(g - ell)`` on the lens contours."""
    from .asym import make_gfunction

    tau = curve.tau if hasattr(curve, "tau") else complex(curve)
    gf = gf or make_gfunction(tau)
    eps = lens_eps(tau) if eps is None else eps
    s = np.arange(samples) / samples
    up, lo = _lens_nodes(tau, eps, s)
    vals = np.concatenate([g_minus_ell(gf, up).real, g_minus_ell(gf, lo).real])
    return float(0.5 * vals.min())


# ---------------------------------------------------------------- remainder solve


@dataclass
class RemainderSolution:
    n: int
    lens_eps: float
    grid_size: int
    nodes: np.ndarray = field(repr=False)        # (2, 2N): grid A, grid B
    boundary_values: np.ndarray = field(repr=False)  # (2, 2N, 2, 2): R_- at nodes
    G: np.ndarray = field(repr=False)
    neumann_terms: int = 0
    contraction: float = 0.0
    residual_norm: float = 0.0
    sup_G: float = 0.0
    method: str = "neumann"
    ty: TyurinData = field(default=None, repr=False)
    tau: complex = 0j
    jump: Callable = field(default=None, repr=False)
    cauchy_norm: float = float("nan")

    def _contour_values(self, c: int):
        """``R_-`` on the merged grid ``k / (2N)`` of contour ``c`` (0 upper, 1 lower)."""
        N = self.grid_size
        X = self.boundary_values
        merged = np.empty((2 * N, 2, 2), dtype=complex)
        merged[0::2] = X[0, c * N:(c + 1) * N]
        merged[1::2] = X[1, c * N:(c + 1) * N]
        return merged

    def interpolate(self, s, c: int):
        """Trigonometric interpolant of ``R_-`` at arc positions ``s`` on contour ``c``."""
        vals = self._contour_values(c)
        M = vals.shape[0]
        coef = np.fft.fft(vals, axis=0) / M
        k = np.fft.fftfreq(M, 1.0 / M)
        nyq = M // 2
        s = np.atleast_1d(np.asarray(s, dtype=float))
        E = np.exp(2j * np.pi * np.multiply.outer(s, k))
        # split the Nyquist mode symmetrically so the interpolant is real-analytic
        E[:, nyq] = np.cos(2 * np.pi * nyq * s)
        return np.einsum("sk,kab->sab", E, coef)

    def held_out_check(self, samples: int = 16, upsample: int = 4):
        """Integral-equation and jump residuals at mid-grid points not used by the solve.

        Returns ``(consistency, jump)`` where ``consistency`` compares the
        interpolated ``R_-`` with the value the integral equation produces
        there, and ``jump`` is ``max |R_+ - R_-(1 + G)|`` with both boundary
        values taken from the integral equation.
        """
        tau, eps, N = self.tau, self.lens_eps, self.grid_size
        L = upsample * 2 * N
        cons, jmp = 0.0, 0.0
        for c, sgn in ((0, 1.0), (1, -1.0)):
            s_t = (np.arange(samples) + 0.25) / samples
            q_t = s_t + tau / 2 + 1j * sgn * eps
            Rq = self.interpolate(s_t, c)
            Gq = self.jump(q_t)
            for i, (sq, q) in enumerate(zip(s_t, q_t)):
                acc = np.zeros((2, 2), dtype=complex)
                for c2, sgn2 in ((0, 1.0), (1, -1.0)):
                    # symmetric offset nodes around the target give the principal value
                    sp = sq + (np.arange(L) + 0.5) / L
                    p = sp + tau / 2 + 1j * sgn2 * eps
                    F = np.einsum("kab,kbc->kac", self.interpolate(sp % 1.0, c2), self.jump(p))
                    om = omega0(q, p, tau)
                    acc += (np.einsum("k,kab->ab", om, F) - F.sum(axis=0) @ kernel_A(self.ty, q, tau)) / L
                pv = acc / (2j * np.pi)
                Fq = Rq[i] @ Gq[i]
                r_minus = np.eye(2) - 0.5 * Fq + pv
                r_plus = np.eye(2) + 0.5 * Fq + pv
                cons = max(cons, float(np.abs(r_minus - Rq[i]).max()))
                jmp = max(jmp, float(np.abs(r_plus - r_minus @ (np.eye(2) + Gq[i])).max()))
        return cons, jmp

    def evaluate(self, q):
        """``R(q)`` off the lens contours (trapezoid on the union of both grids)."""
        q = np.atleast_1d(np.asarray(q, dtype=complex))
        nodes = self.nodes.ravel()
        XG = np.einsum("kab,kbc->kac", self.boundary_values.reshape(-1, 2, 2), self.G.reshape(-1, 2, 2))
        w = 1.0 / (2 * self.grid_size)  # both grids together: 2N nodes per unit-length contour
        out = np.empty(q.shape + (2, 2), dtype=complex)
        for i, qi in np.ndenumerate(q):
            om = omega0(qi, nodes, self.tau)
            A = kernel_A(self.ty, qi, self.tau)
            S1 = np.einsum("k,kab->ab", om, XG)
            S2 = XG.sum(axis=0) @ A
            out[i] = np.eye(2) + w * (S1 - S2) / (2j * np.pi)
        return out if out.shape[0] > 1 else out[0]


def _apply(X, G, om, A, w):
    """One application of the discrete operator ``X -> (1/2 pi i) sum_p X_p G_p C0(p, q)``.

    ``X``, ``G``: (K, 2, 2) source values; ``om``: (Q, K) scalar kernel;
    ``A``: (Q, 2, 2).  Returns (Q, 2, 2).
    """
    XG = np.einsum("kab,kbc->kac", X, G)
    S1 = np.einsum("qk,kab->qab", om, XG)
    S2 = np.einsum("ab,qbc->qac", XG.sum(axis=0), A)
    return w * (S1 - S2) / (2j * np.pi)


def solve_R(n: int, ty: TyurinData, mm: ModelMatrix, gf: GFunction, sz: SzegoFunction,
            grid_size: int = 256, eps: float | None = None, dense_fallback: bool = True,
            estimate_norm: bool = True) -> RemainderSolution:
    """Solve the remainder problem for ``R_-`` on the lens contours."""
    tau = mm.tau
    eps = lens_eps(tau) if eps is None else eps
    N = int(grid_size)
    sA = np.arange(N) / N
    sB = (np.arange(N) + 0.5) / N
    upA, loA = _lens_nodes(tau, eps, sA)
    upB, loB = _lens_nodes(tau, eps, sB)
    nodes = np.array([np.concatenate([upA, loA]), np.concatenate([upB, loB])])  # (2, 2N)
    G = np.array([jump_G(n, mm, gf, sz, nodes[0]), jump_G(n, mm, gf, sz, nodes[1])])
    sup_G = float(np.max(np.linalg.norm(G, axis=(-2, -1))))
    w = 1.0 / N
    # equations at grid g use sources on grid 1 - g
    om = [omega0(nodes[g][:, None], nodes[1 - g][None, :], tau) for g in (0, 1)]
    A = [kernel_A(ty, nodes[g], tau) for g in (0, 1)]
    eye = np.broadcast_to(np.eye(2), (2 * N, 2, 2))

    def op(X):
        return np.array([-0.5 * np.einsum("kab,kbc->kac", X[g], G[g])
                         + _apply(X[1 - g], G[1 - g], om[g], A[g], w) for g in (0, 1)])

    X = np.array([eye, eye], dtype=complex)
    term = X.copy()
    ratios = []
    terms = 0
    method = "neumann"
    for terms in range(1, NEUMANN_MAX + 1):
        new = op(term)
        tn, tp = np.max(np.abs(new)), np.max(np.abs(term))
        if tp > 0:
            ratios.append(tn / tp)
        X = X + new
        term = new
        if tn < NEUMANN_TOL * np.max(np.abs(X)):
            break
        if len(ratios) >= 3 and ratios[-1] >= 0.5:
            break
    contraction = float(max(ratios[-3:])) if ratios else 0.0
    if contraction >= 0.5 or terms == NEUMANN_MAX:
        if not dense_fallback or contraction >= 1.0:
            raise BelowAsymptoticRegime(
                f"n={n}: Neumann contraction factor {contraction:.3g} (sup|G| = {sup_G:.3g})")
        X = _dense_solve(op, N)
        method = "dense"
    residual = float(np.max(np.abs(X - eye[None] - op(X))))
    sol = RemainderSolution(n, eps, N, nodes, X, G, terms, contraction, residual, sup_G, method, ty, tau,
                            lambda p: jump_G(n, mm, gf, sz, p))
    if estimate_norm:
        N1 = _cauchy_norm_estimate(om, A, w, N)
        log.info("n=%d sup|G|=%.3e cauchy-norm~%.3f bound=%.3e observed contraction=%.3e",
                 n, sup_G, N1, sup_G * N1, contraction)
        sol.cauchy_norm = N1
    return sol


def _dense_solve(op, N):
    """Assemble ``Id - op`` column by column on row vectors and solve densely."""
    K = 2 * 2 * N  # nodes
    dim = 2 * K
    mat = np.empty((dim, dim), dtype=complex)
    basis = np.zeros((2, 2 * N, 2, 2), dtype=complex)
    # the operator acts row-wise, so use the first row only
    for j in range(dim):
        basis[...] = 0
        g, k, b = np.unravel_index(j, (2, 2 * N, 2))
        basis[g, k, 0, b] = 1
        out = op(basis)[:, :, 0, :]
        mat[:, j] = -out.ravel()
        mat[j, j] += 1
    rhs = np.zeros((dim, 2), dtype=complex)
    e = np.eye(2)
    for r in range(2):
        rhs[:, r] = np.broadcast_to(e[r], (2, 2 * N, 2)).ravel()
    sol = np.linalg.solve(mat, rhs)
    X = np.empty((2, 2 * N, 2, 2), dtype=complex)
    for r in range(2):
        X[:, :, r, :] = sol[:, r].reshape(2, 2 * N, 2)
    return X


def _cauchy_norm_estimate(om, A, w, N, iters: int = 30):
    """Power-iteration estimate of the discrete Cauchy operator norm (``G = 1``)."""
    ones = np.broadcast_to(np.eye(2), (2 * N, 2, 2))

    def op(X):
        return np.array([-0.5 * X[g] + _apply(X[1 - g], ones, om[g], A[g], w) for g in (0, 1)])

    def adj(Y):
        # adjoint with respect to the Frobenius inner product, via conjugate transposes
        out = np.empty_like(Y)
        for g in (0, 1):
            src = 1 - g
            # contribution of equations at grid src to sources on grid g
            Ys = Y[src]
            S1 = np.einsum("qk,qab->kab", om[src].conj(), Ys)
            S2 = np.einsum("qab,qcb->ac", Ys, A[src].conj())
            t = w * (S1 - S2[None]) / (-2j * np.pi)
            out[g] = -0.5 * Y[g] + t
        return out

    X = np.ones((2, 2 * N, 2, 2), dtype=complex)
    nrm = 0.0
    for _ in range(iters):
        Y = adj(op(X))
        nrm = np.sqrt(np.linalg.norm(Y) / np.linalg.norm(X))
        X = Y / np.linalg.norm(Y)
    return float(nrm)


def reconstruct_Y11(n: int, sol: RemainderSolution | None, mm: ModelMatrix, gf: GFunction,
                    sz: SzegoFunction, p):
    """``pi_n(p)`` rebuilt as ``e^{(n-1) ell - S_inf} (R M)_11 e^{(n-1)(g - ell) + S}``.

    ``p`` must lie outside the lens strip.  With ``sol=None`` the remainder is
    taken to be the identity.
    """
    tau = mm.tau
    p = np.atleast_1d(np.asarray(p, dtype=complex))
    k = np.floor(p.imag / tau.imag + 1e-14)
    p0 = p - k * tau
    eps = lens_eps(tau) if sol is None else sol.lens_eps
    if np.any(np.abs(p0.imag - tau.imag / 2) <= eps):
        raise ValueError("reconstruction point lies inside the lens strip")
    M = model_matrix_eval(mm, p0)
    if sol is None:
        RM11 = M[..., 0, 0]
    else:
        R = sol.evaluate(p0).reshape(p0.shape + (2, 2))
        RM11 = R[..., 0, 0] * M[..., 0, 0] + R[..., 0, 1] * M[..., 1, 0]
    F = (n - 1) * g_minus_ell(gf, p0) + szego_eval(sz, tau, p0)
    out = np.exp((n - 1) * gf.ell - sz.S_inf + F) * RM11
    return out if out.size > 1 else out[0]


# ---------------------------------------------------------------- scalar problem


@dataclass
class ScalarRHPSolution:
    center: complex
    radius: float
    p0: complex
    tau: complex
    integral: complex   # (1/2 pi i) oint ln J dq
    m: int
    n: int
    defect: float
    coeffs: np.ndarray = field(repr=False)  # Fourier coefficients of ln J on the circle
    nodes: int = 256

    def log_jump(self, theta, rho: float = 1.0):
        """``ln J`` continued to the circle of radius ``rho * radius``."""
        k = np.fft.fftfreq(self.coeffs.size, 1.0 / self.coeffs.size)
        th = np.asarray(theta, dtype=float)
        return np.exp(1j * np.multiply.outer(th, k)) @ (self.coeffs * rho**k)

    def u(self, p, rho: float = 1.0):
        """``(1/2 pi i) oint omega_{p,p0}(q) ln J(q) dq`` on the circle of radius ``rho * r``."""
        p = np.atleast_1d(np.asarray(p, dtype=complex))
        r = rho * self.radius
        out = np.empty(p.shape, dtype=complex)
        for i, pi_ in np.ndenumerate(p):
            dist = abs(abs(pi_ - self.center) - r)
            M = self.nodes
            if dist > 0:
                M = int(min(1 << 14, max(M, 2 ** np.ceil(np.log2(40 * r / dist)))))
            th = 2 * np.pi * np.arange(M) / M
            z = np.exp(1j * th)
            q = self.center + r * z
            kern = theta_logderiv(1, q - pi_, self.tau) - theta_logderiv(1, q - self.p0, self.tau)
            dq = 1j * r * z * (2 * np.pi / M)
            out[i] = np.sum(kern * self.log_jump(th, rho) * dq) / (2j * np.pi)
        return out if out.size > 1 else out[0]

    def __call__(self, p, rho: float = 1.0):
        p = np.asarray(p, dtype=complex)
        return np.exp(self.u(p, rho) - 2j * np.pi * self.n * p)

    def jump_residual(self, samples: int = 64) -> float:
        """Check ``Y_+ = Y_- J`` on the circle by deforming the contour off it."""
        th = 2 * np.pi * (np.arange(samples) + 0.5) / samples
        p = self.center + self.radius * np.exp(1j * th)
        u_in = self.u(p, rho=1.25)   # p is inside the enlarged circle
        u_out = self.u(p, rho=0.75)  # and outside the shrunk one
        return float(np.max(np.abs(u_in - u_out - self.log_jump(th))))


def solve_scalar_rhp(jump: Callable | None = None, p0=None, tau=None, center=None,
                        radius: float = 0.1, nodes: int = 256, log_jump: Callable | None = None,
                        tol: float = 1e-6) -> ScalarRHPSolution:
    """Solve ``Y_+ = Y_- J`` on a small circle (``+`` inside, counter-clockwise).

    ``jump`` or ``log_jump`` are callables of the circle points.  Raises
    :class:`UnsolvableRHP` when ``(1/2 pi i) oint ln J dq`` is farther than
    ``tol`` from the lattice ``Z + tau Z``.
    """
    if tau is None:
        raise ValueError("tau is required")
    tau = complex(tau)
    center = complex(0.25 + tau / 4 if center is None else center)
    p0 = complex(center + 0.5 + tau / 2 if p0 is None else p0)
    if lattice_distance(p0 - center, tau) <= 1.05 * radius:
        raise ValueError("normalization point p0 must lie outside the disk")
    th = 2 * np.pi * np.arange(nodes) / nodes
    q = center + radius * np.exp(1j * th)
    if log_jump is not None:
        lj = np.asarray(log_jump(q), dtype=complex) * np.ones(nodes)
    elif jump is not None:
        J = np.asarray(jump(q), dtype=complex) * np.ones(nodes)
        if np.any(J == 0):
            raise ValueError("jump must not vanish on the circle")
        phase = np.unwrap(np.angle(J))
        closing = np.angle(J[0] / J[-1])
        index = (phase[-1] + closing - phase[0]) / (2 * np.pi)
        if abs(index) > 0.5:
            raise UnsolvableRHP(float("nan"), complex(index)) from None
        lj = np.log(np.abs(J)) + 1j * phase
    else:
        lj = np.zeros(nodes, dtype=complex)
    coeffs = np.fft.fft(lj) / nodes
    z = np.sum(lj * 1j * radius * np.exp(1j * th)) * (2 * np.pi / nodes) / (2j * np.pi)
    n = int(np.rint(z.imag / tau.imag))
    m = int(np.rint((z - n * tau).real))
    defect = abs(z - m - n * tau)
    # distance to the nearest lattice point, checking neighbours
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            if abs(z - (m + a) - (n + b) * tau) < defect:
                defect = abs(z - (m + a) - (n + b) * tau)
                m, n = m + a, n + b
    if defect > tol:
        raise UnsolvableRHP(defect, z)
    return ScalarRHPSolution(center, float(radius), p0, tau, complex(z), m, n, float(defect), coeffs, nodes)
