"""Newton solver for ``eps^-1 D f = nabla H(f)`` on the truncated basis."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..action import action, hamiltonian_integral
from ..dirac import dirac_matrix, hessian_galerkin
from ..domain import FrameDomain
from ..field import FieldMap, Target, constant, mean_value, synthesize
from ..hamiltonian import HamiltonianSpec
from ..specflow import block_eigvalsh, field_index_family, floer_index, morse_index, spectral_flow

log = logging.getLogger(__name__)

NONDEGENERATE_TOL = 1e-6


@dataclass
class CriticalPoint:
    f: FieldMap
    residual: float
    hessian_min_abs: float
    mu: int | None
    action_value: float
    morse_index: int | None = None
    eps: float = 1.0

    @property
    def nondegenerate(self) -> bool:
        return self.hessian_min_abs > NONDEGENERATE_TOL

    @property
    def position(self) -> np.ndarray:
        """Mean value of the critical map, flattened to R^{4n}."""
        return mean_value(self.f).ravel()

    def as_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "mu": self.mu,
            "morse_index": self.morse_index,
            "residual": self.residual,
            "hessian_min_abs": self.hessian_min_abs,
            "action": self.action_value,
        }


def dirac_sparse(d: FrameDomain, n: int, degree: int | None = None) -> sp.csr_matrix:
    key = ("dirac_sparse", n, d.degree if degree is None else degree)
    if key not in d.extras:
        d.extras[key] = sp.csr_matrix(dirac_matrix(d, n, degree))
    return d.extras[key]


def projected_gradient(f: FieldMap, H: HamiltonianSpec, m: int) -> np.ndarray:
    d = f.domain
    x = f.values.reshape(len(d.nodes), 4 * f.n)
    g = H.gradient(x, d.nodes)
    return ((d.basis_values[:, :m] * d.weights[:, None]).T @ g).reshape(-1)


def hessian_operator(f: FieldMap, H: HamiltonianSpec, m: int, degree=None):
    """Galerkin Hessian, sparse when the pointwise Hessian is constant."""
    d = f.domain
    x = f.values.reshape(len(d.nodes), 4 * f.n)
    hess = H.hessian(x, d.nodes)
    if np.all(hess == hess[:1]):
        return sp.kron(sp.eye(m), sp.csr_matrix(hess[0]), format="csr")
    return sp.csr_matrix(hessian_galerkin(d, H, f, degree))


def _newton_step(J, F, dense_limit: int = 4000):
    """Solve ``J step = -F``; minimum-norm least squares when J is singular (e.g. H = 0)."""
    try:
        step = splu(J).solve(-F)
        if np.all(np.isfinite(step)):
            return step
    except RuntimeError:
        pass
    if J.shape[0] > dense_limit:
        raise np.linalg.LinAlgError("singular Newton system")
    return np.linalg.lstsq(J.toarray(), -F, rcond=1e-10)[0]


def newton_critical(
    seed: FieldMap,
    H: HamiltonianSpec,
    eps: float = 1.0,
    degree: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> tuple[FieldMap, float, list[float]]:
    """Damped Newton iteration; returns the field, final residual and residual history."""
    d = seed.domain
    n = seed.n
    m = d.nbasis if degree is None else d.nbasis_upto(degree)
    D = dirac_sparse(d, n, degree) / eps
    c = seed.coeffs[:m].reshape(-1).copy()

    def field_of(c):
        full = np.zeros((d.nbasis, n, 4))
        full[:m] = c.reshape(m, n, 4)
        return seed.with_coeffs(full)

    def residual(c):
        f = field_of(c)
        return D @ c - projected_gradient(f, H, m), f

    F, f = residual(c)
    history = [float(np.linalg.norm(F))]
    for _ in range(max_iter):
        if history[-1] <= tol:
            break
        J = (D - hessian_operator(f, H, m, degree)).tocsc()
        step = _newton_step(J, F)
        lam = 1.0
        while True:
            Fn, fn = residual(c + lam * step)
            if np.linalg.norm(Fn) < (1 - 1e-4 * lam) * history[-1] or lam < 1e-6:
                break
            lam *= 0.5
        c = c + lam * step
        F, f = Fn, fn
        history.append(float(np.linalg.norm(F)))
    return f, history[-1], history


def seed_grid(target: Target, per_axis: int = 4, offset: float = 0.1, period: float = 1.0) -> list[np.ndarray]:
    """Constant seeds on a regular lattice of the fundamental cell."""
    L = target.lattice_scale or period
    pts = (np.arange(per_axis) / per_axis + offset / per_axis) * L
    return [np.array(p) for p in itertools.product(pts, repeat=target.dim)]


def _lattice_distance(a: FieldMap, b: FieldMap, target: Target) -> float:
    diff = a.coeffs - b.coeffs
    if target.is_torus:
        L = target.lattice_scale
        vol = np.sqrt(a.domain.volume)
        mean = diff[0] / vol
        diff = diff.copy()
        diff[0] = (mean - L * np.round(mean / L)) * vol
    return float(np.linalg.norm(diff))


def _canonical(f: FieldMap, target: Target) -> FieldMap:
    """Shift a torus-valued map by a lattice vector so its mean lies in ``[0, L)``."""
    if not target.is_torus:
        return f
    L = target.lattice_scale
    vol = np.sqrt(f.domain.volume)
    mean = f.coeffs[0] / vol
    shifted = f.coeffs.copy()
    shifted[0] = (mean - L * np.floor(mean / L + 1e-12)) * vol
    return f.with_coeffs(shifted)


def critical_point_record(
    f: FieldMap, H: HamiltonianSpec, eps: float = 1.0, degree: int | None = None, with_index: bool = True
) -> CriticalPoint:
    d = f.domain
    m = d.nbasis if degree is None else d.nbasis_upto(degree)
    D = dirac_matrix(d, f.n, degree) / eps
    G = hessian_operator(f, H, m, degree).toarray()
    ev = block_eigvalsh(D - G)
    hmin = float(np.abs(ev).min())
    F = D @ f.coeffs[:m].reshape(-1) - projected_gradient(f, H, m)
    value = action(f) / eps - hamiltonian_integral(f, H)
    ind = None
    mu = None
    is_const = np.abs(f.coeffs[1:]).max(initial=0.0) <= 1e-12
    if is_const and H.y_independent:
        x = mean_value(f).ravel()
        ind = morse_index(x, H)
        if with_index and hmin > NONDEGENERATE_TOL:
            mu = floer_index(x, H.scaled(eps), d, degree=degree, target=f.target)
    elif with_index and hmin > NONDEGENERATE_TOL:
        mu = -spectral_flow(field_index_family(f, H, eps, degree=degree), blockwise=False)
    return CriticalPoint(f, float(np.linalg.norm(F)), hmin, mu, float(value), ind, eps)


def find_critical_points(
    H: HamiltonianSpec,
    d: FrameDomain,
    target: Target,
    seeds=None,
    eps: float = 1.0,
    degree: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    dedupe_tol: float = 1e-6,
    with_index: bool = True,
) -> list[CriticalPoint]:
    """Newton from every seed, deduplicated modulo the lattice; sorted by position."""
    if H.dim != target.dim:
        raise ValueError("Hamiltonian and target dimensions differ")
    if seeds is None:
        seeds = seed_grid(target, period=H.period)
    found: list[FieldMap] = []
    for s in seeds:
        seed = s if isinstance(s, FieldMap) else constant(d, target, s)
        try:
            f, res, hist = newton_critical(seed, H, eps, degree, tol, max_iter)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            log.info("seed discarded: %s", exc)
            continue
        if not np.isfinite(res) or res > tol:
            log.info("seed discarded: Newton stalled at residual %.2e after %d steps", res, len(hist) - 1)
            continue
        f = _canonical(f, target)
        if any(_lattice_distance(f, g, target) <= dedupe_tol for g in found):
            continue
        found.append(f)
    found.sort(key=lambda f: tuple(np.round(mean_value(f).ravel(), 9)))
    points = [critical_point_record(f, H, eps, degree, with_index) for f in found]
    for p in points:
        if not p.nondegenerate:
            log.warning("degenerate critical point at %s (min |eig| = %.2e)", p.position, p.hessian_min_abs)
    return points


def zero_field(d: FrameDomain, target: Target) -> FieldMap:
    return synthesize(d, target, np.zeros((d.nbasis, target.n, 4)))
