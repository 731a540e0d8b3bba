"""Spectral flow of symmetric matrix families and the Floer index of critical points."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .dirac import dirac_matrix, hessian_galerkin
from .domain import FrameDomain
from .field import Target, constant
from .hamiltonian import HamiltonianSpec

log = logging.getLogger(__name__)


class SpectralFlowError(RuntimeError):
    pass


class DegenerateEndpointError(SpectralFlowError):
    pass


class AmbiguousCrossingError(SpectralFlowError):
    pass


class DegenerateCriticalPointError(ValueError):
    pass


@dataclass
class OperatorFamily:
    """``t -> M(t)`` on ``[0, 1]``, symmetric matrices of a fixed size.

    Either a callable ``matrix_at`` or a list of ``(coefficient(t), matrix)``
    terms; the latter restricts to invariant blocks without reassembly.
    """

    matrix_at: Callable[[float], np.ndarray] | None = None
    grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 17))
    epsilon: float = 0.0
    label: str = ""
    terms: list | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.matrix_at is None:
            if not self.terms:
                raise ValueError("family needs a matrix callable or terms")
            terms = self.terms
            self.matrix_at = lambda t: sum(c(t) * M for c, M in terms)

    @classmethod
    def from_terms(cls, terms, grid=None, epsilon: float = 0.0, label: str = "") -> "OperatorFamily":
        grid = np.linspace(0.0, 1.0, 17) if grid is None else np.asarray(grid)
        return cls(None, grid, epsilon, label, list(terms))

    def eigenvalues(self, t: float) -> np.ndarray:
        t = float(t)
        if t not in self._cache:
            M = self.matrix_at(t)
            self._cache[t] = np.linalg.eigvalsh(0.5 * (M + M.T))
        return self._cache[t]

    @property
    def size(self) -> int:
        return self.matrix_at(0.0).shape[0]

    def restrict(self, idx: np.ndarray) -> "OperatorFamily":
        idx = np.asarray(idx)
        if self.terms is not None:
            sub = [(c, M[np.ix_(idx, idx)]) for c, M in self.terms]
            return OperatorFamily.from_terms(sub, self.grid, self.epsilon, self.label)
        return OperatorFamily(lambda t: self.matrix_at(t)[np.ix_(idx, idx)], self.grid, self.epsilon, self.label)

    def reversed(self) -> "OperatorFamily":
        grid = 1.0 - self.grid[::-1]
        if self.terms is not None:
            rev = [((lambda c: lambda t: c(1.0 - t))(c), M) for c, M in self.terms]
            return OperatorFamily.from_terms(rev, grid, self.epsilon, self.label)
        return OperatorFamily(lambda t: self.matrix_at(1.0 - t), grid, self.epsilon, self.label)

    def blocks(self, probes=(0.0, 0.3819660112501051, 1.0)) -> list[np.ndarray]:
        """Index sets of invariant blocks, from the joint sparsity pattern at a few parameters."""
        if self.terms is not None:
            mats = [np.abs(M) for _, M in self.terms]
        else:
            mats = [np.abs(self.matrix_at(t)) for t in probes]
        tol = 1e-12 * max(1.0, max(m.max() for m in mats))
        pattern = sum(m > tol for m in mats)
        ncomp, lab = connected_components(csr_matrix(pattern), directed=False)
        return [np.flatnonzero(lab == c) for c in range(ncomp)]


def concatenate(a: OperatorFamily, b: OperatorFamily) -> OperatorFamily:
    """``a`` on ``[0, 1/2]`` followed by ``b`` on ``[1/2, 1]``."""

    def M(t):
        return a.matrix_at(2 * t) if t <= 0.5 else b.matrix_at(2 * t - 1)

    grid = np.unique(np.r_[0.5 * a.grid, 0.5 + 0.5 * b.grid])
    return OperatorFamily(M, grid, a.epsilon, f"{a.label}+{b.label}")


@dataclass
class FlowTrace:
    flow: int
    crossings: list  # (t, +1/-1)
    ts: np.ndarray
    endpoint_gap: float
    negatives: tuple  # (n_minus(0), n_minus(1))


def _cluster_spacing(lam: np.ndarray, tie: float) -> np.ndarray:
    """Distance from each eigenvalue to the nearest eigenvalue outside its cluster."""
    out = np.full(len(lam), np.inf)
    diffs = np.abs(lam[:, None] - lam[None, :])
    diffs[diffs <= tie] = np.inf
    if len(lam) > 1:
        out = diffs.min(axis=1)
    return out


def track_flow(
    fam: OperatorFamily,
    zero_tol: float = 1e-10,
    endpoint_tol: float = 1e-8,
    max_depth: int = 30,
) -> FlowTrace:
    """Net upward-minus-downward zero crossings with adaptive step refinement."""
    lam0, lam1 = fam.eigenvalues(0.0), fam.eigenvalues(1.0)
    gap = min(np.abs(lam0).min(), np.abs(lam1).min())
    if gap <= endpoint_tol:
        raise DegenerateEndpointError(f"endpoint operator has eigenvalue within {gap:.2e} of zero")

    def clear(t, lo, hi):
        # move a sample point off an eigenvalue sitting at zero, staying inside (lo, hi)
        for frac in (0.0, 0.1180339887, -0.1180339887, 0.2360679775, -0.2360679775):
            u = t + frac * (hi - lo)
            if lo < u < hi:
                lam = fam.eigenvalues(u)
                if np.abs(lam).min() > zero_tol * max(1.0, np.abs(lam).max()):
                    return u
        return t

    crossings = []
    visited = [0.0]
    grid = np.unique(np.r_[0.0, np.asarray(fam.grid, dtype=float), 1.0])
    grid[1:-1] = [clear(t, lo, hi) for lo, t, hi in zip(grid[:-2], grid[1:-1], grid[2:])]
    stack = [(a, b, 0) for a, b in zip(grid[:-1], grid[1:])][::-1]
    while stack:
        a, b, depth = stack.pop()
        la, lb = fam.eigenvalues(a), fam.eigenvalues(b)
        scale = max(1.0, np.abs(la).max())
        move = np.abs(lb - la)
        # only eigenvalues that may reach zero within the step need clean matching
        cand = np.minimum(np.abs(la), np.abs(lb)) <= move + zero_tol * scale
        span = _cluster_spacing(la, 1e-9 * scale)
        near_zero = (np.abs(la) <= zero_tol * scale) | (np.abs(lb) <= zero_tol * scale)
        ambiguous = np.any(near_zero) or np.any(move[cand] > 0.5 * span[cand])
        if ambiguous:
            if depth >= max_depth:
                raise AmbiguousCrossingError(f"crossing in [{a:.6g}, {b:.6g}] unresolved after {depth} bisections")
            m = clear(0.5 * (a + b), a, b)
            stack.append((m, b, depth + 1))
            stack.append((a, m, depth + 1))
            continue
        up = int(np.sum((la < 0) & (lb > 0)))
        down = int(np.sum((la > 0) & (lb < 0)))
        for _ in range(up):
            crossings.append((0.5 * (a + b), +1))
        for _ in range(down):
            crossings.append((0.5 * (a + b), -1))
        visited.append(b)
    flow = sum(s for _, s in crossings)
    neg = (int(np.sum(lam0 < 0)), int(np.sum(lam1 < 0)))
    if flow != neg[0] - neg[1]:
        raise SpectralFlowError(f"tracked flow {flow} disagrees with negative-count difference {neg}")
    return FlowTrace(flow, crossings, np.array(visited), float(gap), neg)


def spectral_flow(fam: OperatorFamily, blockwise: bool = True, **kw) -> int:
    """Net number of eigenvalues crossing zero upward minus downward."""
    if not blockwise:
        return track_flow(fam, **kw).flow
    return sum(track_flow(fam.restrict(idx), **kw).flow for idx in fam.blocks())


def loop_flow_check(loop: OperatorFamily, closure_tol: float = 1e-10, **kw) -> int:
    """Spectral flow of a closed family; zero for flat targets."""
    gap = np.abs(loop.matrix_at(0.0) - loop.matrix_at(1.0)).max()
    if gap > closure_tol:
        raise ValueError(f"family is not closed: endpoint mismatch {gap:.2e}")
    return spectral_flow(loop, **kw)


# ---------------------------------------------------------------------------
# Floer index


def default_shift(d: FrameDomain, degree: int | None = None) -> float:
    """Half the smallest positive eigenvalue of the truncated Dirac operator."""
    return 0.5 * dirac_gap(d, degree)


def dirac_gap(d: FrameDomain, degree: int | None = None) -> float:
    """Smallest positive eigenvalue of the truncated Dirac operator (cached per domain)."""
    key = ("dirac_gap", d.degree if degree is None else degree)
    if key not in d.extras:
        D = dirac_matrix(d, 1, degree)
        fam = OperatorFamily.from_terms([(lambda t: 1.0, D)])
        w = np.concatenate([np.linalg.eigvalsh(D[np.ix_(i, i)]) for i in fam.blocks()])
        d.extras[key] = float(w[w > 1e-8].min())
    return d.extras[key]


def index_family(
    d: FrameDomain,
    x,
    H: HamiltonianSpec,
    eps: float | None = None,
    degree: int | None = None,
    target: Target | None = None,
    grid=None,
) -> OperatorFamily:
    """``t -> D - t Hess H(x) + eps (1 - t)`` along the constant path at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    target = target or Target(len(x) // 4)
    eps = default_shift(d, degree) if eps is None else eps
    f = constant(d, target, x)
    D = dirac_matrix(d, target.n, degree)
    G = hessian_galerkin(d, H, f, degree)
    terms = [(lambda t: 1.0, D), (lambda t: -t, G), (lambda t: eps * (1.0 - t), np.eye(len(D)))]
    return OperatorFamily.from_terms(terms, grid, eps, "index")


def floer_index(
    x,
    H: HamiltonianSpec,
    d: FrameDomain,
    eps: float | None = None,
    degree: int | None = None,
    target: Target | None = None,
    hess_tol: float = 1e-8,
) -> int:
    """``-specflow`` from the shifted Dirac operator to ``D - Hess H(x)``."""
    x = np.asarray(x, dtype=float).ravel()
    hmin = np.abs(np.linalg.eigvalsh(H.hessian(x))).min() if H.y_independent else np.inf
    if hmin <= hess_tol:
        raise DegenerateCriticalPointError(f"Hessian of H at {x} is degenerate ({hmin:.2e})")
    if H.y_independent:
        hmax = np.abs(np.linalg.eigvalsh(H.hessian(x))).max()
        if hmax >= dirac_gap(d, degree):
            log.warning("Hessian norm %.3g exceeds the Dirac gap %.3g; index formula not guaranteed",
                        hmax, dirac_gap(d, degree))
    fam = index_family(d, x, H, eps, degree, target)
    return -spectral_flow(fam)


def morse_index(x, H: HamiltonianSpec) -> int:
    """Number of negative Hessian eigenvalues of a y-independent H."""
    return int(np.sum(np.linalg.eigvalsh(H.hessian(np.asarray(x, dtype=float).ravel())) < 0))


@dataclass
class IndexReport:
    x: list
    mu: int
    mu_by_degree: dict
    morse_index: int
    expected: int

    @property
    def stable(self) -> bool:
        return len(set(self.mu_by_degree.values())) == 1

    @property
    def agrees(self) -> bool:
        return self.stable and self.mu == self.expected


def floer_index_report(x, H: HamiltonianSpec, d: FrameDomain, degrees=None, eps=None) -> IndexReport:
    """Index at two consecutive truncation degrees plus the direct Hessian count."""
    x = np.asarray(x, dtype=float).ravel()
    if degrees is None:
        degrees = (max(1, d.degree - 1), d.degree)
    mus = {int(k): floer_index(x, H, d, eps, k) for k in degrees}
    ind = morse_index(x, H)
    mu = mus[int(degrees[-1])]
    return IndexReport(x.tolist(), mu, mus, ind, len(x) - ind)


# ---------------------------------------------------------------------------
# export


def trajectories(fam: OperatorFamily, ts=None, window: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sorted eigenvalues on a uniform grid, optionally keeping only ``|lambda| <= window``."""
    ts = np.linspace(0.0, 1.0, 41) if ts is None else np.asarray(ts)
    lam = np.array([fam.eigenvalues(t) for t in ts])
    if window is not None:
        keep = np.any(np.abs(lam) <= window, axis=0)
        lam = lam[:, keep]
    return ts, lam


def trajectories_csv(ts: np.ndarray, lam: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("t," + ",".join(f"lambda{j}" for j in range(lam.shape[1])) + "\n")
    for t, row in zip(ts, lam):
        buf.write(f"{t:.12g}," + ",".join(f"{v:.12g}" for v in row) + "\n")
    return buf.getvalue()


def trajectories_svg(ts: np.ndarray, lam: np.ndarray, title: str = "eigenvalue flow") -> str:
    from .svgplot import line_plot

    series = [(ts, lam[:, j]) for j in range(lam.shape[1])]
    return line_plot(series, title=title, xlabel="t", ylabel="eigenvalue", hline=0.0)


def block_eigvalsh(M: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, computed per invariant block."""
    fam = OperatorFamily.from_terms([(lambda t: 1.0, M)])
    return np.sort(np.concatenate([np.linalg.eigvalsh(M[np.ix_(i, i)]) for i in fam.blocks()]))


def field_index_family(f, H: HamiltonianSpec, eps: float = 1.0, shift: float | None = None, degree=None):
    """Index family for a possibly nonconstant critical point ``f``.

    Path ``f_t = mean(f) + t (f - mean(f))`` with Hamiltonian ``t H``; the operator
    is ``eps^-1 D - Hess(t H)(f_t) + shift (1 - t)``.
    """
    from .field import mean_value

    d = f.domain
    shift = default_shift(d, degree) / eps if shift is None else shift
    D = dirac_matrix(d, f.n, degree) / eps
    xbar = mean_value(f)
    base = constant(d, f.target, xbar)
    eye = np.eye(len(D))

    def M(t):
        ft = base.with_coeffs(base.coeffs + t * (f.coeffs - base.coeffs))
        return D - t * hessian_galerkin(d, H, ft, degree) + shift * (1.0 - t) * eye

    return OperatorFamily(M, np.linspace(0.0, 1.0, 17), shift, "field-index")
