"""Frame-equipped 3-manifolds: the Cartan 3-sphere and the flat 3-torus.

Both domains carry a quadrature rule and a real orthonormal basis of
band-limited scalar functions, nested by degree, together with the exact
matrices of the frame derivatives ``d/dv_i`` on that basis.

* ``S^3``: unit quaternions, Reeb fields ``v_i(y) = q_i y``.  Quadrature is a
  Hopf-coordinate tensor grid (Gauss-Legendre in ``x = sin^2(eta)``,
  trapezoidal in both angles).  The basis consists of restrictions of
  polynomials of degree ``<= degree`` in ``(y0, .., y3)``, orthonormalized
  degree by degree, so block ``d`` is exactly the degree-``d`` harmonics.
* ``T^3``: uniform ``N^3`` grid on ``[0, 1)^3``, frame ``v_i = sum_j a_ij d_j``,
  basis ``1, sqrt2 cos(2 pi k.t), sqrt2 sin(2 pi k.t)`` for ``|k|_inf <= degree``.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .quat import UNITS, left_matrix, qmul, right_matrix

log = logging.getLogger(__name__)

GRAM_THRESHOLD = 1e-10


class ConfigurationError(ValueError):
    """Raised for domain or run parameters that cannot give an exact rule."""


class DomainKind(str, enum.Enum):
    SPHERE3 = "sphere3"
    TORUS3 = "torus3"


@dataclass(frozen=True, eq=False)
class FrameDomain:
    kind: DomainKind
    nodes: np.ndarray
    weights: np.ndarray
    kappa: float
    degree: int
    resolution: tuple
    basis_values: np.ndarray  # (N, nb), orthonormal under the weights
    basis_degree: np.ndarray  # (nb,), nondecreasing
    derivative: np.ndarray  # (3, nb, nb): coefficients of d/dv_i
    frame_matrix: np.ndarray | None = None
    # S^3 only: monomial exponents and monomial->basis coefficient matrix.
    monomials: np.ndarray | None = None
    monomial_coeffs: np.ndarray | None = None
    right_derivative: np.ndarray | None = None  # d/dt f(y e^{q_i t})
    discarded_directions: int = 0
    # T^3 only: wave vectors of the (cos, sin) pairs in basis order.
    modes: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    @property
    def nbasis(self) -> int:
        return self.basis_values.shape[1]

    def nbasis_upto(self, degree: int) -> int:
        """Number of leading basis functions of degree ``<= degree``."""
        return int(np.searchsorted(self.basis_degree, degree, side="right"))

    def integrate(self, values) -> np.ndarray:
        """Quadrature over the first axis (plain volume, no kappa weight)."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def frame_vectors(self) -> np.ndarray:
        """Frame vectors at every node: ``(3, N, 4)`` on S^3, ``(3, N, 3)`` on T^3."""
        if self.kind is DomainKind.SPHERE3:
            return np.stack([qmul(u, self.nodes) for u in UNITS])
        return np.broadcast_to(self.frame_matrix[:, None, :], (3, len(self.nodes), 3)).copy()

    def basis_at(self, points) -> np.ndarray:
        """Evaluate the basis at arbitrary points of the domain."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind is DomainKind.SPHERE3:
            return monomial_values(self.monomials, points) @ self.monomial_coeffs
        return _fourier_values(self.modes, points)


# ---------------------------------------------------------------------------
# S^3


def hopf_quadrature(n_lat: int, n_ang: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on S^3 from Hopf coordinates.

    ``y = (sqrt(1-x) e^{i a}, sqrt(x) e^{i b})`` with ``dvol = dx da db / 2``.
    See :func:`sphere_rule_degree` for the exactness degree.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_lat)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    ang = 2.0 * np.pi * np.arange(n_ang) / n_ang
    X, A, B = np.meshgrid(xg, ang, ang, indexing="ij")
    c, s = np.sqrt(1.0 - X), np.sqrt(X)
    nodes = np.stack([c * np.cos(A), c * np.sin(A), s * np.cos(B), s * np.sin(B)], axis=-1)
    dang = 2.0 * np.pi / n_ang
    weights = 0.5 * np.einsum("i,j,k->ijk", wg, np.full(n_ang, dang), np.full(n_ang, dang))
    return nodes.reshape(-1, 4), weights.reshape(-1)


def sphere_rule_degree(n_lat: int, n_ang: int) -> int:
    """Largest polynomial degree integrated exactly by :func:`hopf_quadrature`."""
    # A monomial of degree m averages over the angles to a polynomial of
    # degree <= m/2 in x; the trapezoid rule is exact for frequencies < n_ang.
    return min(n_ang - 1, 2 * (2 * n_lat - 1) + 1)


def monomial_exponents(degree: int) -> np.ndarray:
    exps = [m for m in itertools.product(range(degree + 1), repeat=4) if sum(m) <= degree]
    exps.sort(key=lambda m: (sum(m), tuple(-e for e in m)))
    return np.array(exps, dtype=int)


def monomial_values(exps: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    out = np.ones((points.shape[0], len(exps)))
    for a in range(4):
        powers = points[:, a : a + 1] ** np.arange(exps[:, a].max() + 1)
        out *= powers[:, exps[:, a]]
    return out


def linear_field_derivative(exps: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Matrix of ``p -> grad p . (A y)`` on monomial coefficients."""
    index = {tuple(m): n for n, m in enumerate(exps)}
    D = np.zeros((len(exps), len(exps)))
    for col, m in enumerate(exps):
        for a in range(4):
            if m[a] == 0:
                continue
            for b in range(4):
                if A[a, b] == 0.0:
                    continue
                mm = m.copy()
                mm[a] -= 1
                mm[b] += 1
                D[index[tuple(mm)], col] += m[a] * A[a, b]
    return D


def build_sphere_domain(degree: int, res: tuple[int, int] | None = None) -> FrameDomain:
    """The standard Cartan S^3 with a basis of polynomial degree ``<= degree``.

    ``res = (n_lat, n_ang)`` must integrate products of two basis functions
    (degree ``2*degree``) exactly.
    """
    if degree < 1:
        raise ConfigurationError("sphere degree must be >= 1")
    need = 2 * degree
    if res is None:
        res = ((degree + 2) // 2, need + 1)
    n_lat, n_ang = res
    if sphere_rule_degree(n_lat, n_ang) < need:
        raise ConfigurationError(
            f"resolution {res} integrates degree {sphere_rule_degree(n_lat, n_ang)} exactly; "
            f"degree {need} required"
        )
    nodes, weights = hopf_quadrature(n_lat, n_ang)
    exps = monomial_exponents(degree)
    M = monomial_values(exps, nodes)
    total = exps.sum(axis=1)

    C = np.zeros((len(exps), 0))
    labels: list[int] = []
    discarded = 0
    for k in range(degree + 1):
        idx = np.flatnonzero(total == k)
        E = np.zeros((len(exps), len(idx)))
        E[idx, np.arange(len(idx))] = 1.0
        if C.shape[1]:
            E -= C @ ((M @ C).T @ (weights[:, None] * (M @ E)))
        ME = M @ E
        G = ME.T @ (weights[:, None] * ME)
        lam, U = np.linalg.eigh(G)
        keep = lam > GRAM_THRESHOLD
        discarded += int((~keep).sum())
        C = np.hstack([C, E @ (U[:, keep] / np.sqrt(lam[keep]))])
        labels += [k] * int(keep.sum())
    if discarded:
        log.debug("sphere basis: discarded %d Gram directions below %g", discarded, GRAM_THRESHOLD)

    V = M @ C
    WV = weights[:, None] * V

    def project(A):
        return WV.T @ (M @ (linear_field_derivative(exps, A) @ C))

    left = np.stack([project(left_matrix(u)) for u in UNITS])
    right = np.stack([project(right_matrix(u)) for u in UNITS])
    return FrameDomain(
        kind=DomainKind.SPHERE3,
        nodes=nodes,
        weights=weights,
        kappa=2.0,
        degree=degree,
        resolution=(n_lat, n_ang),
        basis_values=V,
        basis_degree=np.array(labels),
        derivative=left,
        monomials=exps,
        monomial_coeffs=C,
        right_derivative=right,
        discarded_directions=discarded,
    )


# ---------------------------------------------------------------------------
# T^3


def half_space_modes(K: int) -> np.ndarray:
    """Representatives ``k`` of ``{k, -k}`` with ``0 < |k|_inf <= K``, by |k|_inf."""
    ks = [k for k in itertools.product(range(-K, K + 1), repeat=3) if k > (0, 0, 0)]
    ks.sort(key=lambda k: (max(map(abs, k)), k))
    return np.array(ks, dtype=int).reshape(-1, 3)


def _fourier_values(modes: np.ndarray, points: np.ndarray) -> np.ndarray:
    phase = 2.0 * np.pi * points @ modes.T
    out = np.empty((points.shape[0], 1 + 2 * len(modes)))
    out[:, 0] = 1.0
    out[:, 1::2] = np.sqrt(2.0) * np.cos(phase)
    out[:, 2::2] = np.sqrt(2.0) * np.sin(phase)
    return out


def build_torus_domain(A=None, N: int = 8, degree: int | None = None) -> FrameDomain:
    """Flat T^3 with frame ``v_i = sum_j A_ij d_j`` on an ``N^3`` grid.

    Modes ``|k|_inf <= degree`` are kept (default the largest value for which
    products of two basis functions are still resolved, ``(N - 1) // 2``).
    """
    A = np.eye(3) if A is None else np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise ConfigurationError("frame matrix must be 3x3")
    if abs(np.linalg.det(A)) < 1e-12:
        raise ConfigurationError("frame matrix is singular")
    if N < 4 or N % 2:
        raise ConfigurationError("torus grid size N must be even and >= 4")
    if degree is None:
        degree = (N - 1) // 2
    if 2 * degree >= N:
        raise ConfigurationError(f"N={N} cannot resolve products of modes |k|<={degree}")
    g = np.arange(N) / N
    nodes = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    weights = np.full(N**3, 1.0 / N**3)
    modes = half_space_modes(degree)
    V = _fourier_values(modes, nodes)
    nb = V.shape[1]
    lam = 2.0 * np.pi * modes @ A.T  # (nmodes, 3): 2 pi (A k)_i
    P = np.zeros((3, nb, nb))
    c = 1 + 2 * np.arange(len(modes))
    for i in range(3):
        # d/dv cos = -l sin, d/dv sin = l cos
        P[i, c + 1, c] = -lam[:, i]
        P[i, c, c + 1] = lam[:, i]
    labels = np.concatenate([[0], np.repeat(np.abs(modes).max(axis=1), 2)]) if len(modes) else np.array([0])
    log.debug("torus domain: N=%d, %d basis functions, cond(A)=%.3g", N, nb, np.linalg.cond(A))
    return FrameDomain(
        kind=DomainKind.TORUS3,
        nodes=nodes,
        weights=weights,
        kappa=1.0,
        degree=degree,
        resolution=(N,),
        basis_values=V,
        basis_degree=labels.astype(int),
        derivative=P,
        frame_matrix=A,
        modes=modes,
        extras={"condition_number": float(np.linalg.cond(A))},
    )


# ---------------------------------------------------------------------------
# Frame data checks


@dataclass
class HypercontactReport:
    kappa: float
    duality: float  # max |alpha_i(v_j) - delta_ij|
    dalpha_kappa: float  # max |d alpha_i(v_j, v_k) - kappa|, cyclic
    lie_bracket: float  # max |[v_i, v_j] - kappa v_k|
    mu: float  # max |mu_i|
    hodge: float  # max |d alpha_i - kappa * alpha_i| on frame pairs
    volume_forms: float  # max |alpha_i ^ d alpha_i - alpha_j ^ d alpha_j| and mixed terms
    orthonormality: float  # max |<v_i, v_j> - delta_ij|
    closedness: float = 0.0  # torus: max |d eps_i|

    def max_violation(self) -> float:
        return max(
            self.duality,
            self.dalpha_kappa,
            self.lie_bracket,
            self.mu,
            self.hodge,
            self.volume_forms,
            self.orthonormality,
            self.closedness,
        )

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["max_violation"] = self.max_violation()
        return out


CYCLIC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def lie_bracket_model(i: int, j: int) -> np.ndarray:
    """Matrix ``B`` with ``[v_i, v_j](y) = B y`` on S^3.

    Sign convention ``[v, w] = grad_w v - grad_v w``, opposite to the usual
    vector-field commutator; for linear fields ``y -> Q y`` this is the matrix commutator ``Q_i Q_j - Q_j Q_i``.
    """
    Qi, Qj = left_matrix(UNITS[i]), left_matrix(UNITS[j])
    return Qi @ Qj - Qj @ Qi


def verify_hypercontact(d: FrameDomain) -> HypercontactReport:
    """Evaluate the Cartan identities at every node and report max violations."""
    if d.kind is DomainKind.TORUS3:
        A = d.frame_matrix
        eps = np.linalg.inv(A).T  # rows: coefficients of eps_i in dt
        dual = np.abs(eps @ A.T - np.eye(3)).max()
        # constant coefficients: d eps_i = 0 identically
        return HypercontactReport(
            kappa=d.kappa, duality=float(dual), dalpha_kappa=0.0, lie_bracket=0.0, mu=0.0,
            hodge=0.0, volume_forms=0.0, orthonormality=0.0, closedness=0.0,
        )

    y = d.nodes
    Q = [left_matrix(u) for u in UNITS]
    v = np.stack([y @ q.T for q in Q])  # (3, N, 4)

    def alpha(i, X):  # alpha_i(y; X) = <q_i y, X>
        return np.sum(v[i] * X, axis=-1)

    def dalpha(i, X, Y):  # d(<Q_i y, dy>)(X, Y) = -2 X^T Q_i Y
        return -2.0 * np.einsum("na,ab,nb->n", X, Q[i], Y)

    duality = max(np.abs(alpha(i, v[j]) - (i == j)).max() for i in range(3) for j in range(3))
    dk = max(np.abs(dalpha(i, v[j], v[k]) - d.kappa).max() for i, j, k in CYCLIC)
    mu = max(np.abs(alpha(1, v[2])).max(), np.abs(alpha(2, v[0])).max(), np.abs(alpha(0, v[1])).max())

    hodge = 0.0
    for i, j, k in CYCLIC:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            star = alpha(j, v[a]) * alpha(k, v[b]) - alpha(j, v[b]) * alpha(k, v[a])
            hodge = max(hodge, np.abs(dalpha(i, v[a], v[b]) - d.kappa * star).max())

    def wedge3(i, j):  # (alpha_i ^ d alpha_j)(v1, v2, v3)
        return (
            alpha(i, v[0]) * dalpha(j, v[1], v[2])
            + alpha(i, v[1]) * dalpha(j, v[2], v[0])
            + alpha(i, v[2]) * dalpha(j, v[0], v[1])
        )

    vol = [wedge3(i, i) for i in range(3)]
    volume_forms = max(np.abs(vol[0] - vol[1]).max(), np.abs(vol[1] - vol[2]).max())
    for i in range(3):
        for j in range(i + 1, 3):
            volume_forms = max(volume_forms, np.abs(wedge3(i, j) + wedge3(j, i)).max())

    bracket = 0.0
    for i, j, k in CYCLIC:
        B = lie_bracket_model(i, j)
        bracket = max(bracket, np.abs(y @ B.T - d.kappa * v[k]).max())

    gram = np.einsum("ina,jna->ijn", v, v)
    ortho = np.abs(gram - np.eye(3)[:, :, None]).max()
    return HypercontactReport(
        kappa=d.kappa,
        duality=float(duality),
        dalpha_kappa=float(dk),
        lie_bracket=float(bracket),
        mu=float(mu),
        hodge=float(hodge),
        volume_forms=float(volume_forms),
        orthonormality=float(ortho),
    )


def hopf_map(lam, y) -> np.ndarray:
    """``h_lambda(y) = -conj(y) lambda y``, constant on left Reeb orbits."""
    from .quat import as_quat_array, qconj

    lam = as_quat_array(lam)
    y = as_quat_array(y)
    return -qmul(qmul(qconj(y), lam), y)


def conjugate_hopf_map(lam, y) -> np.ndarray:
    """``y lambda conj(y) = -h_lambda(conj y)``, constant on right circle orbits.

    Its inclusion into Im(H) is an eigenfunction of the Dirac operator with
    eigenvalue -4; ``hopf_map`` itself is not.
    """
    from .quat import as_quat_array, qconj

    lam = as_quat_array(lam)
    y = as_quat_array(y)
    return qmul(qmul(y, lam), qconj(y))


def reeb_derivative(d: FrameDomain, i: int, f):
    """``d f / d v_i`` of a band-limited field, exact on the basis."""
    if f.domain is not d:
        raise ValueError("field lives on a different domain")
    return f.with_coeffs(np.tensordot(d.derivative[i], f.coeffs, axes=(1, 0)))
