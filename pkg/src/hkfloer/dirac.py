"""The quaternionic Dirac operator ``I d_1 f + J d_2 f + K d_3 f`` and its Hessian.

Coefficient vectors are ordered ``(basis function, target entry, quaternion
component)``; on that ordering the operator is ``sum_i P_i (x) 1_n (x) L_{q_i}``
with ``P_i`` the skew frame-derivative matrices of the domain.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .domain import DomainKind, FrameDomain
from .field import FieldMap, Target, synthesize
from .hamiltonian import HamiltonianSpec
from .quat import UNITS, left_matrix

log = logging.getLogger(__name__)

LEFT = np.stack([left_matrix(u) for u in UNITS])
ZERO_TOL = 1e-8


class SpectrumError(RuntimeError):
    pass


def dirac_apply(f: FieldMap) -> FieldMap:
    d = f.domain
    out = np.einsum("iab,bnc,idc->and", d.derivative, f.coeffs, LEFT)
    return f.with_coeffs(out)


def frame_derivatives(f: FieldMap) -> np.ndarray:
    """Coefficients of ``d f / d v_i`` for i = 1, 2, 3, shape ``(3, nb, n, 4)``."""
    return np.einsum("iab,bnc->ianc", f.domain.derivative, f.coeffs)


def laplacian_apply(f: FieldMap) -> FieldMap:
    """``-sum_i d_{v_i} d_{v_i} f``; the Laplace-Beltrami operator for divergence-free frames."""
    P = f.domain.derivative
    return f.with_coeffs(-np.einsum("iab,ibc,cnd->and", P, P, f.coeffs))


def dirac_matrix(d: FrameDomain, n: int = 1, degree: int | None = None) -> np.ndarray:
    m = d.nbasis if degree is None else d.nbasis_upto(degree)
    P = d.derivative[:, :m, :m]
    eye = np.eye(n)
    return sum(np.kron(P[i], np.kron(eye, LEFT[i])) for i in range(3))


def hessian_galerkin(d: FrameDomain, H: HamiltonianSpec, f: FieldMap, degree: int | None = None) -> np.ndarray:
    """Galerkin matrix of ``xi -> nabla nabla H(f(y), y) xi(y)`` on the basis."""
    m = d.nbasis if degree is None else d.nbasis_upto(degree)
    n = f.n
    x = f.values.reshape(len(d.nodes), 4 * n)
    hess = H.hessian(x, d.nodes)  # (N, 4n, 4n)
    V = d.basis_values[:, :m]
    if np.all(hess == hess[:1]):
        # pointwise-constant Hessian: Gram matrix (x) Hessian
        G = np.kron(V.T @ (d.weights[:, None] * V), hess[0])
    else:
        WV = d.weights[:, None] * V
        G = np.einsum("qa,qij,qb->aibj", WV, hess, V, optimize=True).reshape(m * 4 * n, m * 4 * n)
    return 0.5 * (G + G.T)


def hessian_apply(f: FieldMap, H: HamiltonianSpec, xi: FieldMap) -> FieldMap:
    """``D xi - nabla nabla H(f) xi`` for a flat target."""
    if f.domain is not xi.domain:
        raise ValueError("f and xi live on different domains")
    d = f.domain
    n = f.n
    x = f.values.reshape(len(d.nodes), 4 * n)
    hx = np.einsum("qij,qj->qi", H.hessian(x, d.nodes), xi.values.reshape(len(d.nodes), 4 * n))
    proj = np.tensordot(d.basis_values * d.weights[:, None], hx.reshape(-1, n, 4), axes=(0, 0))
    Dxi = dirac_apply(xi)
    return Dxi.with_coeffs(Dxi.coeffs - proj)


def operator_matrix(d: FrameDomain, n: int = 1, degree=None, H=None, f=None) -> np.ndarray:
    """Matrix of ``D`` or ``D_{f,H}`` with respect to the (kappa-rescaled) orthonormal basis."""
    M = dirac_matrix(d, n, degree)
    if H is not None:
        if f is None:
            raise ValueError("the Hessian term needs a base map f")
        M = M - hessian_galerkin(d, H, f, degree)
    return M


def _block_eigh(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``eigh`` on each connected block of the sparsity pattern, merged and sorted."""
    pattern = csr_matrix(np.abs(M) > 1e-14 * max(1.0, np.abs(M).max()))
    ncomp, lab = connected_components(pattern, directed=False)
    if ncomp == 1:
        return np.linalg.eigh(M)
    w = np.empty(len(M))
    U = np.zeros_like(M)
    col = 0
    for c in range(ncomp):
        idx = np.flatnonzero(lab == c)
        wc, Uc = np.linalg.eigh(M[np.ix_(idx, idx)])
        w[col : col + len(idx)] = wc
        U[idx, col : col + len(idx)] = Uc
        col += len(idx)
    order = np.argsort(w, kind="stable")
    return w[order], U[:, order]


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns: coefficients of unweighted-orthonormal eigenfields
    residuals: np.ndarray
    degree_tags: np.ndarray
    degree: int
    domain: FrameDomain
    target: Target

    def eigenfield(self, j: int) -> FieldMap:
        """Eigenfield j, orthonormal in the kappa-weighted product."""
        c = self.vectors[:, j].reshape(-1, self.target.n, 4) / np.sqrt(self.domain.kappa)
        return synthesize(self.domain, self.target, c)

    def multiplicities(self, decimals: int = 8) -> dict:
        vals, counts = np.unique(np.round(self.eigenvalues, decimals) + 0.0, return_counts=True)
        return {float(v): int(c) for v, c in zip(vals, counts)}

    def contains(self, value: float, tol: float = 1e-8) -> bool:
        return bool(np.any(np.abs(self.eigenvalues - value) <= tol))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("index,eigenvalue,residual,degree\n")
        for j, (ev, r, t) in enumerate(zip(self.eigenvalues, self.residuals, self.degree_tags)):
            buf.write(f"{j},{ev:.15g},{r:.3e},{int(t)}\n")
        return buf.getvalue()


def spectrum(
    d: FrameDomain,
    degree: int | None = None,
    H: HamiltonianSpec | None = None,
    f: FieldMap | None = None,
    n: int = 1,
) -> SpectralDecomposition:
    """Dense symmetric eigendecomposition of the truncated operator."""
    degree = d.degree if degree is None else degree
    if degree > d.degree:
        raise ValueError(f"degree {degree} exceeds domain degree {d.degree}")
    if f is not None:
        n = f.n
    target = Target(n) if f is None else f.target
    m = d.nbasis_upto(degree)
    M = operator_matrix(d, n, degree, H, f)
    try:
        w, U = _block_eigh(M)
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(f"eigensolver failed on a {M.shape[0]}x{M.shape[0]} matrix: {exc}") from exc

    # residuals through the node-value route, independent of the assembled matrix
    C = np.zeros((d.nbasis, n, 4, len(w)))
    C[:m] = U.reshape(m, n, 4, len(w))
    out = np.einsum("iab,idc,bncj->andj", d.derivative, LEFT, C, optimize=True)
    if H is not None:
        x = f.values.reshape(len(d.nodes), 4 * n)
        vals = np.tensordot(d.basis_values, C, axes=(1, 0)).reshape(len(d.nodes), 4 * n, -1)
        hx = np.einsum("qij,qjk->qik", H.hessian(x, d.nodes), vals).reshape(len(d.nodes), n, 4, -1)
        out = out - np.tensordot(d.basis_values * d.weights[:, None], hx, axes=(0, 0))
    resid = np.linalg.norm((out - w * C).reshape(-1, len(w)), axis=0)

    labels = np.repeat(d.basis_degree[:m], 4 * n)
    weights = np.zeros((degree + 1, len(w)))
    np.add.at(weights, labels, U**2)
    tags = weights.argmax(axis=0)
    return SpectralDecomposition(w, U, resid, tags, degree, d, target)


@dataclass
class ModeBlock:
    k: np.ndarray
    block: np.ndarray
    closed_form_ev: float
    eigenvalues: np.ndarray

    def verified(self, tol: float = 1e-10) -> bool:
        expected = np.sort(np.r_[-np.full(len(self.block) // 2, self.closed_form_ev),
                                 np.full(len(self.block) // 2, self.closed_form_ev)])
        return bool(np.abs(np.sort(self.eigenvalues) - expected).max() <= tol)


def mode_block(d: FrameDomain, k, n: int = 1) -> ModeBlock:
    """The operator on ``span{cos 2 pi k.t, sin 2 pi k.t} (x) H^n``, ordered (cos, sin)."""
    if d.kind is not DomainKind.TORUS3:
        raise ValueError("mode blocks exist only on the torus")
    k = np.asarray(k, dtype=int)
    if not k.any():
        return ModeBlock(k, np.zeros((4 * n, 4 * n)), 0.0, np.zeros(4 * n))
    lam = 2.0 * np.pi * (d.frame_matrix @ k)
    Lam = np.kron(np.eye(n), np.tensordot(lam, LEFT, axes=(0, 0)))
    Z = np.zeros_like(Lam)
    block = np.block([[Z, Lam], [-Lam, Z]])
    return ModeBlock(k, block, float(np.linalg.norm(lam)), np.linalg.eigvalsh(block))


def laplace_identity_residual(f: FieldMap) -> float:
    """``|| D D f + kappa D f - Delta f ||``; kappa enters only through the frame brackets."""
    d = f.domain
    kappa = d.kappa if d.kind is DomainKind.SPHERE3 else 0.0
    Df = dirac_apply(f)
    DDf = dirac_apply(Df)
    lap = laplacian_apply(f)
    return float(np.linalg.norm(DDf.coeffs + kappa * Df.coeffs - lap.coeffs))


def poincare_constant(d: FrameDomain, degree: int | None = None) -> float:
    """Smallest ``c0`` with ``||xi||^2 <= c0 ||D xi||^2`` on mean-zero truncated fields."""
    w = np.linalg.eigvalsh(dirac_matrix(d, 1, degree))
    nz = np.abs(w[np.abs(w) > ZERO_TOL])
    if not len(nz):
        raise SpectrumError("no nonzero eigenvalues in the truncation")
    return float(1.0 / nz.min() ** 2)


def laplace_gap(d: FrameDomain, degree: int | None = None) -> float:
    """First nonzero eigenvalue of the frame Laplacian on the truncation."""
    m = d.nbasis if degree is None else d.nbasis_upto(degree)
    P = d.derivative[:, :m, :m]
    w = np.linalg.eigvalsh(-np.einsum("iab,ibc->ac", P, P))
    return float(w[w > ZERO_TOL].min())
