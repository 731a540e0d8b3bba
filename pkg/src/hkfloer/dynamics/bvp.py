"""Connecting orbits of ``d_s u + eps^-1 D u = grad H(u)`` as boundary-value problems.

The cylinder is cut to ``[-S, S]``.  Coefficients on the first ``m`` basis
functions are collocated with the Hermite-Simpson (Lobatto IIIA) scheme; the
ends are pinned to the unstable space of the negative end and the stable space
of the positive end, and a phase condition removes the time shift.  The scheme
is symmetric, so the exponential dichotomy of the linearization survives
discretization.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..domain import FrameDomain
from ..field import FieldMap, Target, constant, synthesize
from ..hamiltonian import HamiltonianSpec, TrigTerm
from .critical import CriticalPoint, dirac_sparse, find_critical_points
from .morse import morse_orbit

log = logging.getLogger(__name__)

MAGIC = b"HKTRAJ01"


class BVPError(RuntimeError):
    pass


class NewtonDivergence(BVPError):
    pass


class EnlargeSError(BVPError):
    """The truncated cylinder is too short: the ends are too far from the critical points."""


class FitQualityError(ValueError):
    pass


# -- space-time evaluation -------------------------------------------------------


@dataclass
class _System:
    d: FrameDomain
    H: HamiltonianSpec
    eps: float
    m: int
    n: int

    def __post_init__(self):
        self.N = self.m * 4 * self.n
        self.D = dirac_sparse(self.d, self.n, None).tocsr()[: self.N, : self.N] / self.eps
        self.V = self.d.basis_values[:, : self.m]
        self.WV = self.d.weights[:, None] * self.V

    def values(self, C):
        """Node values for stacked coefficients ``(P, N)`` -> ``(P, q, 4n)``."""
        return np.einsum("qa,pac->pqc", self.V, C.reshape(len(C), self.m, 4 * self.n), optimize=True)

    def _y(self, P):
        return np.broadcast_to(self.d.nodes, (P,) + self.d.nodes.shape)

    def rhs(self, C):
        """``-eps^-1 D c + P grad H(V c)`` for every row of C."""
        X = self.values(C)
        G = self.H.gradient(X, self._y(len(C)))
        proj = np.einsum("qa,pqc->pac", self.WV, G, optimize=True).reshape(len(C), self.N)
        return -(self.D @ C.T).T + proj

    def hessians(self, C):
        X = self.values(C)
        Hs = self.H.hessian(X, self._y(len(C)))
        flat = np.all(Hs == Hs[:, :1], axis=(1, 2, 3))
        varying = np.flatnonzero(~flat)
        dense = {}
        if len(varying):
            G = np.einsum("qa,pqij,qb->paibj", self.WV, Hs[varying], self.V, optimize=True)
            G = G.reshape(len(varying), self.N, self.N)
            dense = dict(zip(varying.tolist(), 0.5 * (G + G.transpose(0, 2, 1))))
        eye = sp.eye(self.m)
        return [sp.kron(eye, sp.csr_matrix(Hs[p, 0]), format="csr") if flat[p] else sp.csr_matrix(dense[p])
                for p in range(len(C))]

    def jacobians(self, C):
        return [(-self.D + G).tocsr() for G in self.hessians(C)]

    def action(self, C):
        """``eps^-1 A(u) - integral kappa H(u)`` per row."""
        k = self.d.kappa
        quad = 0.5 * k * np.einsum("pi,pi->p", C, (self.D @ C.T).T)
        X = self.values(C)
        hv = self.H.value(X, self._y(len(C)))
        return quad - k * hv @ self.d.weights

    def linearization(self, c):
        """``A = eps^-1 D - Hess`` at a coefficient vector (dense)."""
        return (self.D - self.hessians(c[None])[0]).toarray()


# -- solution container ----------------------------------------------------------


@dataclass
class TrajectorySolution:
    epsilon: float
    s: np.ndarray  # nodes, length M+1
    coeffs: np.ndarray  # (2M+1, m, n, 4): node, midpoint, node, ...
    domain: FrameDomain
    target: Target
    H: HamiltonianSpec
    endpoints: tuple
    residual: float = 0.0
    defect: float = 0.0
    energy: float = 0.0
    expected_energy: float = 0.0
    actions: np.ndarray | None = None
    history: list = field(default_factory=list)
    rho: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n(self) -> int:
        return self.coeffs.shape[2]

    @property
    def S(self) -> float:
        return float(self.s[-1])

    @property
    def points(self) -> np.ndarray:
        """All collocation points (nodes and midpoints) in order."""
        mids = 0.5 * (self.s[:-1] + self.s[1:])
        out = np.empty(2 * len(self.s) - 1)
        out[0::2] = self.s
        out[1::2] = mids
        return out

    @property
    def node_coeffs(self) -> np.ndarray:
        return self.coeffs[0::2]

    def system(self) -> _System:
        return _System(self.domain, self.H, self.epsilon, self.m, self.n)

    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(len(self.coeffs), -1)

    def ds(self) -> np.ndarray:
        """``d_s u`` coefficients at every collocation point, from the equation."""
        return self.system().rhs(self.flat()).reshape(self.coeffs.shape)

    def slice(self, j: int) -> FieldMap:
        return synthesize(self.domain, self.target, self.node_coeffs[j])

    def slices(self) -> list[FieldMap]:
        return [self.slice(j) for j in range(len(self.s))]

    def oscillation(self) -> float:
        """``sup_s sup_y |u(s, y) - mean u(s)|`` on the quadrature nodes."""
        V = self.domain.basis_values[:, 1 : self.m]
        vals = np.einsum("qa,pac->pqc", V, self.coeffs[:, 1:].reshape(len(self.coeffs), self.m - 1, -1))
        return float(np.linalg.norm(vals.reshape(*vals.shape[:2], self.n, 4), axis=-1).max(initial=0.0))

    def frame_derivative_values(self) -> np.ndarray:
        """``d_{v_i} u`` at the nodes, shape ``(3, P, q, n, 4)``."""
        P = self.domain.derivative[:, : self.m, : self.m]
        V = self.domain.basis_values[:, : self.m]
        dc = np.einsum("iab,pbnc->ipanc", P, self.coeffs)
        return np.einsum("qa,ipanc->ipqnc", V, dc, optimize=True)

    def frame_sup(self) -> float:
        """``sup |d_{v_i} u|`` over s, y and i."""
        return float(np.linalg.norm(self.frame_derivative_values(), axis=-1).max())

    def energy_error(self) -> float:
        return abs(self.energy - self.expected_energy) / max(abs(self.expected_energy), 1e-300)

    def monotone(self, tol: float = 1e-10) -> bool:
        a = self.actions
        return bool(np.all(np.diff(a) <= tol * max(1.0, np.abs(a).max())))

    def shifted(self, ds: float) -> np.ndarray:
        """Node coefficients of ``u(s + ds)`` by piecewise-cubic interpolation (clamped)."""
        return _interpolate(self, self.s + ds)

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "S": self.S,
            "intervals": len(self.s) - 1,
            "basis": self.m,
            "residual": self.residual,
            "defect": self.defect,
            "energy": self.energy,
            "expected_energy": self.expected_energy,
            "energy_error": self.energy_error(),
            "monotone": self.monotone(),
            "oscillation": self.oscillation(),
            "frame_sup": self.frame_sup(),
            "newton_iterations": len(self.history) - 1,
        }

    def diagnostics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "action", "ds_norm", "mean_re", "mean_i", "mean_j", "mean_k"])
        dsn = np.sqrt(self.domain.kappa) * np.linalg.norm(self.ds()[0::2].reshape(len(self.s), -1), axis=1)
        mean = self.node_coeffs[:, 0, 0] / np.sqrt(self.domain.volume)
        for j, s in enumerate(self.s):
            w.writerow([f"{s:.12g}", f"{self.actions[j]:.12g}", f"{dsn[j]:.12g}"]
                       + [f"{v:.12g}" for v in mean[j]])
        return buf.getvalue()

    def write(self, path) -> None:
        header = json.dumps({
            "epsilon": self.epsilon,
            "points": len(self.coeffs),
            "shape": list(self.coeffs.shape[1:]),
            "domain": self.domain.kind.value,
            "resolution": list(self.domain.resolution),
            "hamiltonian": self.H.as_dict(),
            "summary": self.summary(),
        }, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(np.uint32(len(header)).tobytes())
            fh.write(header)
            fh.write(np.ascontiguousarray(self.s, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.coeffs, dtype="<f8").tobytes())


def read_trajectory(path) -> tuple[dict, np.ndarray, np.ndarray]:
    """Header, s-nodes and coefficients of a container written by ``TrajectorySolution.write``."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a trajectory container")
        hlen = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        header = json.loads(fh.read(hlen))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    P = header["points"]
    M1 = (P + 1) // 2
    s = raw[:M1].copy()
    coeffs = raw[M1:].reshape(P, *header["shape"]).copy()
    return header, s, coeffs


def _interpolate(sol: TrajectorySolution, s_new) -> np.ndarray:
    """Cubic Hermite interpolation of the collocation solution at ``s_new``."""
    s = sol.s
    C = sol.flat()
    F = sol.system().rhs(C)
    nodes, dn = C[0::2], F[0::2]
    s_new = np.clip(np.asarray(s_new, dtype=float), s[0], s[-1])
    j = np.clip(np.searchsorted(s, s_new, side="right") - 1, 0, len(s) - 2)
    h = s[j + 1] - s[j]
    t = ((s_new - s[j]) / h)[:, None]
    h00 = 2 * t**3 - 3 * t**2 + 1
    h10 = t**3 - 2 * t**2 + t
    h01 = -2 * t**3 + 3 * t**2
    h11 = t**3 - t**2
    out = h00 * nodes[j] + h10 * h[:, None] * dn[j] + h01 * nodes[j + 1] + h11 * h[:, None] * dn[j + 1]
    return out.reshape(len(s_new), *sol.coeffs.shape[1:])


# -- endpoint handling -------------------------------------------------------------


def _endpoint_coeffs(f, d, target, m):
    if isinstance(f, CriticalPoint):
        f = f.f
    if isinstance(f, FieldMap):
        return f.coeffs[:m].reshape(-1).copy()
    return constant(d, target, f).coeffs[:m].reshape(-1)


def decay_floor_time(rho: float, level: float = 1e-8) -> float:
    """Half-length ``S`` with ``exp(-rho S) = level``."""
    return float(np.log(1.0 / level) / rho)


def _morse_guess(xm, xp, H, d, target, m):
    s_orbit, x_orbit = morse_orbit(xm, xp, H)
    L = target.lattice_scale or H.period
    lift = np.asarray(xp, float).ravel() + L * np.round((x_orbit[-1] - np.asarray(xp, float).ravel()) / L)
    vol = np.sqrt(d.volume)

    def guess(s):
        s = np.atleast_1d(s)
        x = np.stack([np.interp(s, s_orbit, x_orbit[:, i], left=x_orbit[0, i], right=lift[i])
                      for i in range(x_orbit.shape[1])], axis=-1)
        C = np.zeros((len(s), m, target.n, 4))
        C[:, 0] = x.reshape(len(s), target.n, 4) * vol
        return C.reshape(len(s), -1)

    return guess, lift


def _y_noise(d, m, n, points, amplitude, seed):
    rng = np.random.default_rng(seed)
    out = np.zeros((points, m, n, 4))
    out[:, 1:] = rng.standard_normal((points, m - 1, n, 4))
    if m > 1:
        out *= amplitude / np.sqrt(m - 1)
    return out.reshape(points, -1)


# -- solver --------------------------------------------------------------------------


def connect_orbit_bvp(
    f_minus,
    f_plus,
    H: HamiltonianSpec,
    eps: float,
    s_grid=None,
    d: FrameDomain | None = None,
    target: Target | None = None,
    degree: int | None = None,
    guess=None,
    h: float = 0.2,
    S: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 25,
    boundary_tol: float = 1e-6,
    noise: float = 0.0,
    seed: int = 0,
) -> TrajectorySolution:
    """Solve for a trajectory from ``f_minus`` (s = -S) to ``f_plus`` (s = +S).

    Endpoints may be CriticalPoints, FieldMaps or positions in R^{4n} (constants).
    The default guess is the y-independent gradient line of H joining the means.
    """
    if d is None:
        d = (f_minus.f if isinstance(f_minus, CriticalPoint) else f_minus).domain
    if target is None:
        src = f_minus.f if isinstance(f_minus, CriticalPoint) else f_minus
        target = src.target if isinstance(src, FieldMap) else Target(H.dim // 4, H.period)
    n = target.n
    m = d.nbasis if degree is None else d.nbasis_upto(degree)
    sysm = _System(d, H, eps, m, n)
    N = sysm.N

    cm = _endpoint_coeffs(f_minus, d, target, m)
    cp = _endpoint_coeffs(f_plus, d, target, m)
    vol = np.sqrt(d.volume)
    xm = cm.reshape(m, n, 4)[0].ravel() / vol
    xp = cp.reshape(m, n, 4)[0].ravel() / vol

    guess_fn = guess
    if guess_fn is None:
        if np.allclose(cm, cp, atol=1e-12):
            guess_fn = lambda s: np.repeat(cm[None], len(np.atleast_1d(s)), axis=0)  # noqa: E731
        else:
            H0 = _y_average(H)
            guess_fn, lift = _morse_guess(xm, xp, H0, d, target, m)
            cp = cp.copy()
            cp.reshape(m, n, 4)[0] += ((lift - xp) * vol).reshape(n, 4)
    elif isinstance(guess_fn, TrajectorySolution):
        prev = guess_fn
        guess_fn = lambda s: _interpolate(prev, s).reshape(len(np.atleast_1d(s)), -1)  # noqa: E731

    if guess is None and np.allclose(cm, cp, atol=1e-12):
        r0 = float(np.abs(sysm.rhs(cm[None])[0]).max())
        if r0 <= tol:
            # the endpoint is itself a solution: the constant trajectory, no Newton needed
            if s_grid is None:
                S = 1.0 if S is None else float(S)
                s_grid = np.linspace(-S, S, 2 * int(np.ceil(S / h)) + 1)
            s = np.asarray(s_grid, dtype=float)
            Y = np.repeat(cm[None], 2 * len(s) - 1, axis=0)
            sol = from_samples(s, Y.reshape(len(Y), m, n, 4), d, target, H, eps)
            sol.endpoints = (f_minus, f_plus)
            sol.residual = r0
            sol.history = [r0]
            sol.meta = {"boundary_defect": 0.0, "h": float(np.diff(s).max()), "stationary": True}
            return sol

    Am = sysm.linearization(cm)
    Ap = sysm.linearization(cp)
    wm, Vm = np.linalg.eigh(Am)
    wp, Vp = np.linalg.eigh(Ap)
    gaps = np.concatenate([np.abs(wm), np.abs(wp)])
    if gaps.min() < 1e-8:
        raise BVPError("degenerate endpoint: the linearization has a kernel")
    rho = float(min(np.abs(wm).min(), np.abs(wp).min()))
    if s_grid is None:
        S = decay_floor_time(rho) if S is None else float(S)
        M = 2 * int(np.ceil(S / h))
        s_grid = np.linspace(-S, S, M + 1)
    s = np.asarray(s_grid, dtype=float)
    M = len(s) - 1
    if M < 2 or np.any(np.diff(s) <= 0):
        raise ValueError("s-grid must be strictly increasing with at least two intervals")
    hs = np.diff(s)
    mids = 0.5 * (s[:-1] + s[1:])
    pts = np.empty(2 * M + 1)
    pts[0::2], pts[1::2] = s, mids

    Qm = Vm[:, wm > 0]  # rows pinning the stable part at -S
    Qp = Vp[:, wp < 0]  # rows pinning the unstable part at +S
    stationary = np.allclose(cm, cp, atol=1e-12)
    phase = 0 if stationary else 1  # a nonconstant orbit has a free time shift
    if Qm.shape[1] + Qp.shape[1] + phase != N:
        raise BVPError(
            f"dimension count mismatch: {Qm.shape[1]} + {Qp.shape[1]} + {phase} != {N}; "
            "endpoints must differ by one in index")

    Y = np.asarray(guess_fn(pts), dtype=float).reshape(2 * M + 1, N).copy()
    if guess is not None and target.is_torus:
        # a supplied guess fixes the lattice copies of the endpoints
        L = target.lattice_scale
        for row, c in ((0, cm), (-1, cp)):
            end = Y[row].reshape(m, n, 4)[0].ravel() / vol
            x = c.reshape(m, n, 4)[0].ravel() / vol
            c.reshape(m, n, 4)[0] += (L * np.round((end - x) / L) * vol).reshape(n, 4)
    if noise:
        Y += _y_noise(d, m, n, 2 * M + 1, noise, seed)
    j0 = int(np.argmin(np.abs(s)))  # phase node
    g0 = np.asarray(guess_fn(np.array([s[j0]])), dtype=float).reshape(N)
    dg0 = sysm.rhs(g0[None])[0]
    dg0 = dg0 / max(np.linalg.norm(dg0), 1e-300)

    def residual(Y):
        F = sysm.rhs(Y)
        Cn, Cm_, Fn, Fm = Y[0::2], Y[1::2], F[0::2], F[1::2]
        hh = hs[:, None]
        E1 = Cn[1:] - Cn[:-1] - hh / 6 * (Fn[:-1] + 4 * Fm + Fn[1:])
        E2 = Cm_ - 0.5 * (Cn[:-1] + Cn[1:]) - hh / 8 * (Fn[:-1] - Fn[1:])
        inner = np.stack([E1, E2], axis=1).reshape(-1)
        return np.concatenate([
            Qm.T @ (Y[0] - cm),
            inner,
            Qp.T @ (Y[-1] - cp),
            [dg0 @ (Y[2 * j0] - g0)] if phase else [],
        ]), F

    def jacobian(Y):
        Js = sysm.jacobians(Y)
        I = sp.eye(N, format="csr")
        P = 2 * M + 1
        rows = [[None] * P for _ in range(2 * M + 2)]
        rows[0][0] = sp.csr_matrix(Qm.T)
        for j in range(M):
            a, b, c = 2 * j, 2 * j + 1, 2 * j + 2
            h_ = hs[j]
            rows[1 + 2 * j][a] = -I - h_ / 6 * Js[a]
            rows[1 + 2 * j][b] = -(4 * h_ / 6) * Js[b]
            rows[1 + 2 * j][c] = I - h_ / 6 * Js[c]
            rows[2 + 2 * j][a] = -0.5 * I - h_ / 8 * Js[a]
            rows[2 + 2 * j][b] = I
            rows[2 + 2 * j][c] = -0.5 * I + h_ / 8 * Js[c]
        rows[2 * M + 1][P - 1] = sp.csr_matrix(Qp.T)
        J = sp.bmat(rows, format="csc")
        if not phase:
            return J
        prow = sp.lil_matrix((1, P * N))
        prow[0, 2 * j0 * N : (2 * j0 + 1) * N] = dg0
        return sp.vstack([J, prow.tocsr()], format="csc")

    R, F = residual(Y)
    history = [float(np.abs(R).max())]
    for _ in range(max_iter):
        if history[-1] <= tol:
            break
        J = jacobian(Y)
        try:
            step = splu(J).solve(-R)
        except RuntimeError as exc:
            raise NewtonDivergence(f"singular collocation Jacobian: {exc}") from exc
        lam = 1.0
        while True:
            Rn, Fn_ = residual(Y + lam * step.reshape(Y.shape))
            if np.abs(Rn).max() < (1 - 1e-4 * lam) * history[-1] or lam < 1e-4:
                break
            lam *= 0.5
        Y = Y + lam * step.reshape(Y.shape)
        R, F = Rn, Fn_
        history.append(float(np.abs(R).max()))
        if not np.isfinite(history[-1]) or history[-1] > 1e6 * max(history[0], 1.0):
            raise NewtonDivergence(f"Newton diverged (residual {history[-1]:.3e})")
    if history[-1] > tol:
        raise NewtonDivergence(f"Newton stalled at residual {history[-1]:.3e} after {max_iter} iterations")

    bdef = max(np.linalg.norm(Y[0] - cm), np.linalg.norm(Y[-1] - cp)) / vol
    if bdef > boundary_tol:
        raise EnlargeSError(f"boundary defect {bdef:.2e} exceeds {boundary_tol:.1e}; enlarge S")

    kappa = d.kappa
    nrm = np.einsum("pi,pi->p", F, F)
    energy = float(kappa * np.sum(hs / 6 * (nrm[0:-1:2] + 4 * nrm[1::2] + nrm[2::2])))
    actions = sysm.action(Y[0::2])
    em, ep = sysm.action(np.stack([cm, cp]))
    sol = TrajectorySolution(
        epsilon=eps, s=s, coeffs=Y.reshape(2 * M + 1, m, n, 4), domain=d, target=target, H=H,
        endpoints=(f_minus, f_plus), residual=history[-1], energy=energy,
        expected_energy=float(em - ep), actions=actions, history=history, rho=rho,
        meta={"boundary_defect": float(bdef), "h": float(hs.max())},
    )
    sol.defect = collocation_defect(sol)
    return sol


def _y_average(H: HamiltonianSpec) -> HamiltonianSpec:
    """Drop y-dependent terms; the guess for a probed H is the unprobed gradient line."""
    if H.y_independent:
        return H
    return replace(H, terms=tuple(t for t in H.terms if t.domain_freq is None))


def collocation_defect(sol: TrajectorySolution, gauss: int = 3) -> float:
    """Space-time L^2 norm of ``d_s p - F(p)`` for the piecewise-cubic interpolant ``p``."""
    g, w = np.polynomial.legendre.leggauss(gauss)
    s = sol.s
    h = np.diff(s)
    pts = (s[:-1, None] + 0.5 * h[:, None] * (g[None] + 1)).ravel()
    wts = (0.5 * h[:, None] * w[None]).ravel()
    C = sol.flat()
    F = sol.system().rhs(C)
    nodes, dn = C[0::2], F[0::2]
    j = np.repeat(np.arange(len(h)), gauss)
    t = ((pts - s[j]) / h[j])[:, None]
    hj = h[j][:, None]
    p = ((2 * t**3 - 3 * t**2 + 1) * nodes[j] + (t**3 - 2 * t**2 + t) * hj * dn[j]
         + (-2 * t**3 + 3 * t**2) * nodes[j + 1] + (t**3 - t**2) * hj * dn[j + 1])
    dp = ((6 * t**2 - 6 * t) * nodes[j] + (3 * t**2 - 4 * t + 1) * hj * dn[j]
          + (-6 * t**2 + 6 * t) * nodes[j + 1] + (3 * t**2 - 2 * t) * hj * dn[j + 1]) / hj
    r = dp - sol.system().rhs(p)
    return float(np.sqrt(sol.domain.kappa * np.sum(wts * np.einsum("pi,pi->p", r, r))))


# -- decay ----------------------------------------------------------------------------


def ds_norms(sol: TrajectorySolution) -> np.ndarray:
    """``||d_s u(s, .)||_{L^2}`` at the nodes (kappa-weighted)."""
    dsn = sol.ds()[0::2].reshape(len(sol.s), -1)
    return np.sqrt(sol.domain.kappa) * np.linalg.norm(dsn, axis=1)


def decay_rate(sol: TrajectorySolution, tail_fraction: float = 0.5, min_points: int = 8,
               min_r2: float = 0.999) -> tuple[float, float]:
    """Fitted exponential rates ``(rho_minus, rho_plus)`` of ``||d_s u||`` on the two tails.

    The tail is the outer ``tail_fraction`` of each half of the cylinder.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    s = sol.s
    g = ds_norms(sol)
    scale = g.max(initial=0.0)
    if scale <= 1e-13 * max(1.0, float(np.abs(sol.coeffs).max())) or not np.isfinite(scale):
        raise FitQualityError("zero signal: d_s u vanishes identically")
    S = min(-s[0], s[-1])
    rates = []
    for side in (-1, 1):
        mask = side * s >= (1 - tail_fraction) * S
        ss, gg = s[mask], g[mask]
        if len(ss) < min_points:
            raise FitQualityError("tail too short for a fit")
        if np.any(gg <= 1e-14 * scale):
            raise FitQualityError("tail signal below round-off")
        order = np.argsort(side * ss)
        if np.any(np.diff(gg[order]) > 0):
            raise FitQualityError("tail is not monotonically decaying")
        y = np.log(gg)
        A = np.stack([ss, np.ones_like(ss)], axis=1)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        fit = A @ coef
        r2 = 1 - np.sum((y - fit) ** 2) / max(np.sum((y - y.mean()) ** 2), 1e-300)
        if r2 < min_r2:
            raise FitQualityError(f"poor exponential fit (R^2 = {r2:.6f})")
        rates.append(float(-side * coef[0]))
    return rates[0], rates[1]


def endpoint_gaps(sol: TrajectorySolution) -> tuple[float, float]:
    """Slowest rates allowed by the endpoint linearizations ``eps^-1 D - Hess``.

    At ``-S`` the solution leaves along negative eigenvectors, at ``+S`` it arrives
    along positive ones.
    """
    sysm = sol.system()
    Y = sol.flat()
    wm = np.linalg.eigvalsh(sysm.linearization(Y[0]))
    wp = np.linalg.eigvalsh(sysm.linearization(Y[-1]))
    return float(-wm[wm < 0].max()), float(wp[wp > 0].min())


def from_samples(s, coeffs, domain, target, H, eps=1.0) -> TrajectorySolution:
    """Wrap a given space-time field (node and midpoint coefficients) as a solution object."""
    coeffs = np.asarray(coeffs, dtype=float)
    sol = TrajectorySolution(eps, np.asarray(s, dtype=float), coeffs, domain, target, H, (None, None))
    sol.actions = sol.system().action(sol.flat()[0::2])
    return sol


# -- adiabatic limit --------------------------------------------------------------------


@dataclass
class AdiabaticReport:
    eps: list
    oscillation: list
    frame_sup: list
    probe_frame_sup: list
    constants: list
    ratios: list
    energy_errors: list
    decay: list
    gaps: list
    residuals: list
    solutions: list = field(default_factory=list, repr=False)

    @property
    def ratios_ok(self) -> bool:
        return all(0.75 <= r <= 1.25 for r in self.ratios)

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "oscillation": self.oscillation,
            "frame_sup": self.frame_sup,
            "probe_frame_sup": self.probe_frame_sup,
            "constants": self.constants,
            "ratios": self.ratios,
            "ratios_ok": self.ratios_ok,
            "energy_errors": self.energy_errors,
            "decay": self.decay,
            "gaps": self.gaps,
            "residuals": self.residuals,
        }


def probe_hamiltonian(H: HamiltonianSpec, delta: float = 1e-3, axis: int = 0, domain_dim: int = 3) -> HamiltonianSpec:
    """``H + delta cos(2 pi x_axis + 2 pi t_1)``: a weak y-dependent probe."""
    freq = [0] * H.dim
    freq[axis] = 1
    w = [0] * domain_dim
    w[0] = 1
    return H.plus(TrigTerm(tuple(freq), delta, 0.0, tuple(w)))


def adiabatic_experiment(
    H: HamiltonianSpec,
    eps_list,
    pair,
    d: FrameDomain,
    target: Target,
    degree: int | None = None,
    h: float = 0.2,
    probe: float = 1e-3,
    probe_h: float = 0.5,
    keep_solutions: bool = False,
) -> AdiabaticReport:
    """BVP solves across ``eps_list`` for an index-1 pair of constant critical points.

    The unprobed solves measure y-oscillation, energy and decay.  A weak y-dependent
    probe of the Hamiltonian makes ``sup |d_{v_i} u|`` nonzero so its ``O(eps)``
    scaling can be measured.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    xm, xp = (np.asarray(p, dtype=float).ravel() for p in pair)
    Hp = probe_hamiltonian(H, probe, domain_dim=d.nodes.shape[1]) if probe else None
    rep = AdiabaticReport([], [], [], [], [], [], [], [], [], [])
    for eps in eps_list:
        sol = connect_orbit_bvp(xm, xp, H, eps, d=d, target=target, degree=degree, h=h)
        rep.eps.append(eps)
        rep.oscillation.append(sol.oscillation())
        rep.frame_sup.append(sol.frame_sup())
        rep.energy_errors.append(sol.energy_error())
        rep.decay.append(list(decay_rate(sol)))
        rep.gaps.append(list(endpoint_gaps(sol)))
        rep.residuals.append(sol.residual)
        if Hp is not None:
            lift = sol.flat()[-1].reshape(sol.m, sol.n, 4)[0].ravel() / np.sqrt(d.volume)
            ends = []
            for x in (xm, lift):
                pts = find_critical_points(Hp, d, target, seeds=[x], eps=eps, degree=degree, with_index=False)
                if not pts:
                    raise BVPError(f"probe critical point near {x} not found")
                f = pts[0].f
                shift = (x - pts[0].position)
                L = target.lattice_scale or H.period
                shift = L * np.round(shift / L)
                c = f.coeffs.copy()
                c[0] += (shift * np.sqrt(d.volume)).reshape(c[0].shape)
                ends.append(f.with_coeffs(c))
            psol = connect_orbit_bvp(ends[0], ends[1], Hp, eps, d=d, target=target, degree=degree,
                                     h=probe_h, guess=sol)
            fs = psol.frame_sup()
            rep.probe_frame_sup.append(fs)
            rep.constants.append(fs / eps)
            rep.residuals[-1] = max(rep.residuals[-1], psol.residual)
            if keep_solutions:
                rep.solutions.append((sol, psol))
        elif keep_solutions:
            rep.solutions.append((sol, None))
    rep.ratios = [b / a for a, b in zip(rep.constants, rep.constants[1:])]
    return rep
