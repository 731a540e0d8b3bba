"""Energy and action on round spheres in the quaternions, and the ball picture of half-cylinders.

A map ``f`` on the unit sphere is placed on the sphere of radius ``r`` as
``u(t) = f(t / r)``.  The frame on ``S_r`` is ``v_i(t) = t q_i`` (right
multiplication, ``|v_i| = r``), so every quantity reduces to right-invariant
derivatives of ``f`` on ``S^3``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dirac import LEFT, spectrum
from ..domain import DomainKind, FrameDomain
from ..field import FieldMap, Target, synthesize


def _require_sphere(d: FrameDomain):
    if d.kind is not DomainKind.SPHERE3:
        raise ValueError("slice checks need the S^3 domain")


def right_derivative_values(f: FieldMap) -> np.ndarray:
    """``d/dt f(y exp(t q_i))`` at the nodes, shape ``(3, q, n, 4)``."""
    d = f.domain
    coeffs = np.einsum("iab,bnc->ianc", d.right_derivative, f.coeffs)
    return np.einsum("qa,ianc->iqnc", d.basis_values, coeffs)


def monomial_gradient(exps: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Ambient gradients of the monomials, shape ``(len(points), len(exps), 4)``."""
    out = np.zeros((len(points), len(exps), 4))
    for a in range(4):
        lower = exps.copy()
        lower[:, a] = np.maximum(lower[:, a] - 1, 0)
        vals = np.ones((len(points), len(exps)))
        for b in range(4):
            vals *= points[:, b : b + 1] ** lower[:, b]
        out[:, :, a] = exps[:, a] * vals
    return out


def ambient_gradient(f: FieldMap, points: np.ndarray) -> np.ndarray:
    """Gradient of the polynomial extension of ``f``: ``(p, n, 4 values, 4 directions)``."""
    d = f.domain
    poly = d.monomial_coeffs @ f.coeffs.reshape(d.nbasis, -1)  # (nmon, 4n)
    g = monomial_gradient(d.monomials, points)  # (p, nmon, 4)
    return np.einsum("pma,mc->pca", g, poly).reshape(len(points), f.n, 4, 4)


def tangential_gradient_sq(f: FieldMap) -> np.ndarray:
    """``|df|^2`` at the nodes via the projected ambient gradient ``(1 - y y^T) grad F``."""
    y = f.domain.nodes
    G = ambient_gradient(f, y)
    G = G - np.einsum("pnca,pa,pb->pncb", G, y, y)
    return np.sum(G**2, axis=(1, 2, 3))


@dataclass
class SliceReport:
    r: float
    energy: float  # E_r
    action: float  # A_r
    dirac_sq: float  # r^-2 int_{S_r} |I du(v_1) + J du(v_2) + K du(v_3)|^2
    ball_energy: float  # int_{B_r} |d(radial extension)|^2
    sphere_energy: float  # (r^2 / 2) int_{S^3} |df|^2

    @property
    def isoperimetric_margin(self) -> float:
        return self.r * self.energy - self.action

    @property
    def isoperimetric(self) -> bool:
        return self.isoperimetric_margin >= -1e-12 * max(1.0, abs(self.r * self.energy))

    @property
    def are_residual(self) -> float:
        """Relative defect of ``E_r + (2/r) A_r = r^-2 int |I du(v_1)+...|^2``."""
        lhs = self.energy + 2.0 / self.r * self.action
        return abs(lhs - self.dirac_sq) / max(abs(self.dirac_sq), abs(lhs), 1e-300)

    @property
    def radial_residual(self) -> float:
        scale = max(abs(self.sphere_energy), 1e-300)
        return abs(self.ball_energy - self.sphere_energy) / scale if self.sphere_energy else abs(self.ball_energy)

    def as_dict(self) -> dict:
        return {
            "r": self.r,
            "energy": self.energy,
            "action": self.action,
            "dirac_sq": self.dirac_sq,
            "ball_energy": self.ball_energy,
            "sphere_energy": self.sphere_energy,
            "isoperimetric": self.isoperimetric,
            "isoperimetric_margin": self.isoperimetric_margin,
            "are_residual": self.are_residual,
            "radial_residual": self.radial_residual,
        }


def sphere_slice_check(f: FieldMap, r: float = 1.0, radial_points: int = 4) -> SliceReport:
    """``E_r``, ``A_r``, the Dirac identity and the radial-extension energy of ``f``."""
    d = f.domain
    _require_sphere(d)
    if r <= 0:
        raise ValueError("radius must be positive")
    w = d.weights
    a = right_derivative_values(f)  # (3, q, n, 4)
    energy = r * float(w @ np.sum(a**2, axis=(0, 2, 3)))
    om = 0.0
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        om = om + np.einsum("ab,qnb,qna->q", LEFT[i], a[j], a[k])
    action = r**2 * float(w @ om)
    dirac = np.einsum("iab,iqnb->qna", LEFT, a)
    dirac_sq = r * float(w @ np.sum(dirac**2, axis=(1, 2)))

    # the extension t -> f(t/|t|) has |du(t)|^2 = |t|^-2 |df(t/|t|)|^2
    rho, rw = np.polynomial.legendre.leggauss(radial_points)
    rho = 0.5 * r * (rho + 1)
    rw = 0.5 * r * rw
    radial = float(np.sum(rw * rho**3 / rho**2))
    ball = radial * float(w @ tangential_gradient_sq(f))
    # independent route for |df|^2: the orthonormal left frame, in coefficient space
    sphere = 0.5 * r**2 * float(np.sum(np.einsum("iab,bnc->ianc", d.derivative, f.coeffs) ** 2))
    return SliceReport(float(r), energy, action, dirac_sq, ball, sphere)


# -- half-cylinder solutions and the ball ---------------------------------------------


@dataclass
class CylinderBallReport:
    r: float
    ball_energy: float  # int_{B_r} |dw|^2, w(e^{-s} y) = u(s, y)
    action: float  # A(u(s0)), s0 = -log r
    tail_energy: float  # 2 int_{s0}^inf int |d_s u|^2
    rates: list

    @property
    def ball_residual(self) -> float:
        """Relative defect of ``int_{B_r} |dw|^2 = r^2 A(u(s0))``."""
        target = self.r**2 * self.action
        return abs(self.ball_energy - target) / max(abs(target), 1e-300)

    @property
    def tail_residual(self) -> float:
        return abs(self.action - self.tail_energy) / max(abs(self.action), 1e-300)

    @property
    def alternative_residual(self) -> float:
        """Defect of the form ``r^2 int_{B_r} |dw|^2 = A(u(s0))``."""
        lhs = self.r**2 * self.ball_energy
        return abs(lhs - self.action) / max(abs(self.action), 1e-300)

    def as_dict(self) -> dict:
        return {
            "r": self.r,
            "ball_energy": self.ball_energy,
            "action": self.action,
            "tail_energy": self.tail_energy,
            "rates": self.rates,
            "ball_residual": self.ball_residual,
            "tail_residual": self.tail_residual,
            "alternative_residual": self.alternative_residual,
        }


def decaying_modes(d: FrameDomain, degree: int | None = None, tol: float = 1e-8):
    """Positive eigenpairs of D; ``u = e^{-lambda s} phi`` solves the unperturbed equation."""
    spec = spectrum(d, degree)
    keep = np.flatnonzero(spec.eigenvalues > tol)
    return spec.eigenvalues[keep], [spec.eigenfield(j) for j in keep]


def cylinder_ball_check(
    d: FrameDomain,
    r: float = 0.5,
    amplitudes=None,
    seed: int = 0,
    count: int = 3,
    degree: int | None = None,
    radial_points: int | None = None,
) -> CylinderBallReport:
    """Exact half-cylinder solution ``u = sum c_k e^{-lambda_k s} phi_k`` on ``S^3``.

    Its ball picture ``w(t) = sum c_k |t|^{lambda_k} phi_k(t/|t|)`` is integrated on
    ``B_r`` with radial Gauss-Legendre points and compared with ``r^2 A(u(s0))``.
    """
    _require_sphere(d)
    lam, modes = decaying_modes(d, degree)
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(lam), size=min(count, len(lam)), replace=False))
    lam = lam[pick]
    modes = [modes[j] for j in pick]
    c = rng.standard_normal(len(lam)) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    target = modes[0].target
    s0 = -np.log(r)

    # a constant shift changes neither side, so it is left out
    coeffs = sum(ck * np.exp(-lk * s0) * m.coeffs for ck, lk, m in zip(c, lam, modes))
    u0 = synthesize(d, target, coeffs)
    from ..action import action as _action

    A = _action(u0)
    gram = np.array([[np.sum(a.coeffs * b.coeffs) for b in modes] for a in modes])
    L = lam[:, None] + lam[None, :]
    tail = 2.0 * float(np.sum((c[:, None] * c[None, :]) * (lam[:, None] * lam[None, :]) * gram
                              * np.exp(-L * s0) / L))

    # ball integral of |dw|^2 with w(rho y) = sum c_k rho^{lambda_k} phi_k(y)
    y = d.nodes
    vals = np.stack([np.einsum("qa,anc->qnc", d.basis_values, m.coeffs) for m in modes])  # (K, q, n, 4)
    grads = []
    for m in modes:
        G = ambient_gradient(m, y)
        grads.append(G - np.einsum("pnca,pa,pb->pncb", G, y, y))
    grads = np.stack(grads)  # (K, q, n, 4, 4)
    npts = radial_points or int(np.ceil(lam.max())) + 3
    g, gw = np.polynomial.legendre.leggauss(npts)
    rho = 0.5 * r * (g + 1)
    rw = 0.5 * r * gw
    total = 0.0
    for p, wp in zip(rho, rw):
        scale = c * p ** (lam - 1)
        radial_part = np.einsum("k,kqnc,qa->qnca", scale * lam, vals, y)
        tangential = np.einsum("k,kqnca->qnca", scale, grads)
        dw = radial_part + tangential
        total += wp * p**3 * float(d.weights @ np.sum(dw**2, axis=(1, 2, 3)))
    return CylinderBallReport(float(r), float(total), float(A), tail, lam.tolist())
