"""Hypersymplectic action, its perturbation by a Hamiltonian, energy and gradient.

For a flat target the action of a contractible map is the quadratic form
``A(f) = 1/2 <f, D f>_kappa`` evaluated on a lift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dirac import dirac_apply, frame_derivatives
from .domain import DomainKind
from .field import FieldMap, TopologyError, inner
from .hamiltonian import HamiltonianSpec, TrigTerm

__all__ = [
    "HamiltonianSpec",
    "TrigTerm",
    "action",
    "perturbed_action",
    "energy",
    "action_gradient",
    "energy_identity_residual",
    "apriori_bound_check",
    "hamiltonian_integral",
    "reeb_drift",
]


def _require_lift(f: FieldMap):
    if not f.contractible or (f.winding is not None and np.any(f.winding)):
        raise TopologyError("the action is only implemented for contractible maps")


def action(f: FieldMap) -> float:
    _require_lift(f)
    return 0.5 * inner(f, dirac_apply(f))


def hamiltonian_integral(f: FieldMap, H: HamiltonianSpec) -> float:
    """``integral of H(f(y), y) kappa dvol``."""
    d = f.domain
    x = f.values.reshape(len(d.nodes), 4 * f.n)
    return d.kappa * float(d.weights @ H.value(x, d.nodes))


def perturbed_action(f: FieldMap, H: HamiltonianSpec) -> float:
    return action(f) - hamiltonian_integral(f, H)


def energy(f: FieldMap) -> float:
    """``1/2 integral sum_i |d_{v_i} f|^2`` (plain volume)."""
    return 0.5 * float(np.sum(frame_derivatives(f) ** 2))


def action_gradient(f: FieldMap, H: HamiltonianSpec | None = None) -> FieldMap:
    """``D f - nabla H(f)``, projected on the basis: the kappa-weighted L^2 gradient."""
    Df = dirac_apply(f)
    if H is None:
        return Df
    d = f.domain
    x = f.values.reshape(len(d.nodes), 4 * f.n)
    g = H.gradient(x, d.nodes).reshape(-1, f.n, 4)
    proj = np.tensordot(d.basis_values * d.weights[:, None], g, axes=(0, 0))
    return Df.with_coeffs(Df.coeffs - proj, truncated=Df.truncated)


def reeb_drift(f: FieldMap) -> np.ndarray:
    """Coefficients of ``df(v0)``, ``v0 = alpha_2(v_3) v_1 + alpha_3(v_1) v_2 + alpha_1(v_2) v_3``.

    Zero for the Cartan structures implemented here (orthonormal Reeb frames).
    """
    d = f.domain
    if d.kind is DomainKind.TORUS3:
        return np.zeros_like(f.coeffs)
    v = d.frame_vectors()
    mu = [np.sum(v[1] * v[2], axis=-1), np.sum(v[2] * v[0], axis=-1), np.sum(v[0] * v[1], axis=-1)]
    df = np.tensordot(d.basis_values, frame_derivatives(f), axes=(1, 1))  # (N, 3, n, 4)
    drift = sum(mu[i][:, None, None] * df[:, i] for i in range(3))
    return np.tensordot(d.basis_values * d.weights[:, None], drift, axes=(0, 0))


def energy_identity_residual(f: FieldMap) -> float:
    """``|E(f) - A(f) - 1/2 int |D f|^2 + int <D f, df(v0)>|``.

    The quadratic term carries no kappa weight; ``v0`` vanishes for Cartan structures.
    """
    _require_lift(f)
    Df = dirac_apply(f)
    drift = float(np.vdot(Df.coeffs, reeb_drift(f)))
    return abs(energy(f) - action(f) - 0.5 * float(np.sum(Df.coeffs**2)) + drift)


@dataclass
class AprioriReport:
    action: float
    dirac_norm_sq: float
    constant: float
    margin: float  # c ||D f||^2 - A(f)

    @property
    def holds(self) -> bool:
        return self.margin >= -1e-10 * max(1.0, abs(self.action))


def apriori_bound_check(f: FieldMap, poincare: float | None = None) -> AprioriReport:
    """Check ``A(f) <= c ||D f||^2`` with ``c = 1 + kappa^2 C^2``.

    ``C`` is the Poincare constant of the frame Laplacian, ``1/sqrt(3)`` on S^3.
    """
    _require_lift(f)
    d = f.domain
    if poincare is None:
        from .dirac import laplace_gap

        poincare = 1.0 / np.sqrt(laplace_gap(d))
    c = 1.0 + d.kappa**2 * poincare**2
    A = action(f)
    n2 = float(np.sum(dirac_apply(f).coeffs ** 2))
    return AprioriReport(A, n2, c, c * n2 - A)
