"""Mod-2 Floer chain complex of a y-independent Hamiltonian in the small-epsilon regime.

Generators are the constant critical maps graded by their Floer index; a
boundary entry is the number of positive gradient lines of H between the two
critical points, taken mod 2.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np

from . import gf2
from .domain import FrameDomain, build_torus_domain
from .dynamics.bvp import BVPError, connect_orbit_bvp
from .dynamics.critical import CriticalPoint, critical_point_record
from .dynamics.morse import morse_trajectories, separable_critical_points
from .field import Target, constant
from .hamiltonian import HamiltonianSpec, TrigTerm

log = logging.getLogger(__name__)


class BoundarySquaredError(ValueError):
    """The boundary operator does not square to zero."""


@dataclass
class ChainComplex:
    dim: int  # real dimension 4n of the target; degrees run over 0..dim
    generators: dict = field(default_factory=dict)  # mu -> list of CriticalPoint
    boundary: dict = field(default_factory=dict)  # k -> uint8 matrix (len gens[k-1], len gens[k])
    provenance: dict = field(default_factory=dict)  # (k, row, col) -> integer trajectory count
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in range(self.dim + 1):
            self.generators.setdefault(k, [])
        for k in range(1, self.dim + 1):
            shape = (len(self.generators[k - 1]), len(self.generators[k]))
            self.boundary.setdefault(k, np.zeros(shape, dtype=np.uint8))

    @property
    def degrees(self) -> range:
        return range(self.dim + 1)

    def rank(self, k: int) -> int:
        return len(self.generators.get(k, []))

    @property
    def multiplicities(self) -> list[int]:
        return [self.rank(k) for k in self.degrees]

    @property
    def total(self) -> int:
        return sum(self.multiplicities)

    def matrix(self, k: int) -> np.ndarray:
        """Boundary from degree k to k-1 (empty outside 1..dim)."""
        if k in self.boundary:
            return self.boundary[k]
        return np.zeros((self.rank(k - 1), self.rank(k)), dtype=np.uint8)

    @property
    def is_zero(self) -> bool:
        return all(not np.any(m) for m in self.boundary.values())

    def as_dict(self) -> dict:
        gens = []
        for k in self.degrees:
            for j, g in enumerate(self.generators[k]):
                gens.append({"mu": k, "slot": j, "morse_index": g.morse_index,
                             "position": [float(v) for v in g.position], "action": g.action_value})
        return {
            "dim": self.dim,
            "multiplicities": self.multiplicities,
            "generators": gens,
            "boundary": {str(k): self.boundary[k].tolist() for k in sorted(self.boundary)},
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1)

    def boundary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["degree", "source", "target", "count", "entry"])
        for (k, row, col), cnt in sorted(self.provenance.items()):
            w.writerow([k, col, row, cnt, cnt % 2])
        return buf.getvalue()


# -- critical points of y-independent H on the torus -------------------------------


def _separable_part(H: HamiltonianSpec) -> HamiltonianSpec:
    return HamiltonianSpec(H.dim, tuple(t for t in H.terms if np.count_nonzero(t.freq) <= 1), H.period)


def torus_critical_points(H: HamiltonianSpec, tol: float = 1e-12, max_iter: int = 50,
                          steps: int = 8) -> list[np.ndarray]:
    """Critical points of H on the torus.

    Separable H is solved factor by factor.  The critical points of a weakly
    coupled H are continued from those of its separable part, switching the
    coupling on in ``steps`` stages with Newton in R^{4n} at each stage.
    """
    base_h = _separable_part(H)
    base = [p for p, _ in separable_critical_points(base_h)]
    if H.is_separable:
        return base
    coupling = tuple(t for t in H.terms if np.count_nonzero(t.freq) > 1)
    L = H.period
    out = []
    for x in base:
        for lam in np.linspace(0.0, 1.0, steps + 1)[1:]:
            Hl = base_h.plus(*(replace(t, amplitude=lam * t.amplitude) for t in coupling))
            for _ in range(max_iter):
                g = Hl.gradient(x)
                if np.linalg.norm(g) <= tol:
                    break
                x = x - np.linalg.solve(Hl.hessian(x), g)
            else:
                raise RuntimeError(f"continuation lost the critical point near {x}")
        x = np.mod(x, L)
        if any(np.linalg.norm((x - y + 0.5 * L) % L - 0.5 * L) < 1e-8 for y in out):
            raise ValueError("coupling is too strong: two critical points merged")
        out.append(x)
    return out


# -- complex ---------------------------------------------------------------------


def build_complex(
    H: HamiltonianSpec,
    eps: float = 0.1,
    d: FrameDomain | None = None,
    target: Target | None = None,
    degree: int | None = 1,
    spot_checks: int = 0,
    seed: int = 0,
    **morse_kw,
) -> ChainComplex:
    """Chain complex of a y-independent H on the flat torus target.

    ``spot_checks`` pairs with a nonzero count are re-solved as space-time
    trajectories at ``eps``; their energy defect and y-oscillation go to ``meta``.
    """
    if not H.y_independent:
        raise ValueError("the complex is built for y-independent Hamiltonians")
    target = target or Target(H.dim // 4, H.period)
    if not target.is_torus:
        raise ValueError("the complex needs a torus target")
    d = d or build_torus_domain(N=6, degree=2)
    H_eps = H.scaled(eps)
    points = torus_critical_points(H)

    cx = ChainComplex(H.dim)
    for x in points:
        rec = critical_point_record(constant(d, target, x), H, eps, degree)
        if not rec.nondegenerate or rec.mu is None:
            raise ValueError(f"degenerate critical point at {x}")
        cx.generators[rec.mu].append(rec)
    for k in cx.degrees:
        cx.generators[k].sort(key=lambda g: tuple(np.round(g.position, 9)))

    for k in range(1, cx.dim + 1):
        mat = np.zeros((cx.rank(k - 1), cx.rank(k)), dtype=np.uint8)
        for col, gm in enumerate(cx.generators[k]):
            for row, gp in enumerate(cx.generators[k - 1]):
                if gp.morse_index - gm.morse_index != 1:
                    raise ValueError("grading disagrees with the Morse index")
                res = morse_trajectories(gm.position, gp.position, H, with_samples=False, **morse_kw)
                if res.count:
                    cx.provenance[(k, row, col)] = res.count
                mat[row, col] = res.mod2
        cx.boundary[k] = mat

    cx.meta = {"eps": float(eps), "generators": cx.total, "separable": H.is_separable,
               "index_scale": float(np.abs(np.linalg.eigvalsh(H_eps.hessian(points[0]))).max()) if points else 0.0}
    if spot_checks:
        cx.meta["spot_checks"] = _spot_check(cx, H, eps, d, target, degree, spot_checks, seed)
    return cx


def _spot_check(cx, H, eps, d, target, degree, count, seed):
    keys = sorted(cx.provenance)
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(keys), size=min(count, len(keys)), replace=False)) if keys else []
    out = []
    for idx in chosen:
        k, row, col = keys[idx]
        gm, gp = cx.generators[k][col], cx.generators[k - 1][row]
        entry = {"degree": k, "source": col, "target": row}
        try:
            sol = connect_orbit_bvp(gm.position, gp.position, H, eps, d=d, target=target, degree=degree)
            entry.update(energy_error=sol.energy_error(), oscillation=sol.oscillation(), ok=True)
        except BVPError as exc:
            entry.update(ok=False, error=str(exc))
        out.append(entry)
    return out


def verify_boundary_squared(c: ChainComplex) -> bool:
    for k in range(2, c.dim + 1):
        if np.any(gf2.matmul(c.matrix(k - 1), c.matrix(k))):
            return False
    return True


def homology(c: ChainComplex) -> list[int]:
    """``dim ker d_k - rank d_{k+1}`` over GF(2) for every degree."""
    if not verify_boundary_squared(c):
        raise BoundarySquaredError("boundary does not square to zero")
    ranks = {k: gf2.rank(c.matrix(k)) for k in range(1, c.dim + 1)}
    dims = []
    for k in c.degrees:
        kernel = c.rank(k) - ranks.get(k, 0)
        dims.append(kernel - ranks.get(k + 1, 0))
    return dims


def torus_betti(dim: int) -> list[int]:
    return [comb(dim, k) for k in range(dim + 1)]


def betti_compare(dims, target) -> bool:
    """Do the degree-wise dims equal the Z/2 Betti numbers of the torus target?"""
    dim = target.dim if isinstance(target, Target) else int(target)
    return [int(v) for v in dims] == torus_betti(dim)


# -- admissible Hamiltonians -------------------------------------------------------


def two_well_factor(a: float = 0.02, dim: int = 4, axis: int = 0, base: float = 0.02) -> HamiltonianSpec:
    """Cosine sum whose ``axis`` factor is ``a cos(4 pi x)``: two minima and two maxima there."""
    rows = [[(1, base, 0.0)] for _ in range(dim)]
    rows[axis] = [(2, a, 0.0)]
    return HamiltonianSpec.separable(rows)


def random_admissible(rng: np.random.Generator, dim: int = 4, coupling: float = 0.0,
                      amplitude=(0.01, 0.03), second_harmonic: float = 0.4) -> HamiltonianSpec:
    """A random Morse function on the torus built from separable factors.

    Each factor is ``a cos(2 pi x + phi)``, with probability ``second_harmonic``
    plus a smaller ``b cos(4 pi x + psi)``, ``b <= a/5`` (still two critical points),
    or dominated by it (four critical points).  ``coupling`` adds one
    ``c cos(2 pi (x_i + x_j) + chi)`` term with ``|c| <= coupling``.
    """
    if coupling > 1e-2:
        raise ValueError("coupling amplitude must not exceed 1e-2")
    rows = []
    for _ in range(dim):
        a = rng.uniform(*amplitude)
        phi = rng.uniform(0, 2 * np.pi)
        row = [(1, a, phi)]
        u = rng.uniform()
        if u < second_harmonic / 2:
            row.append((2, rng.uniform(0.05, 0.2) * a, rng.uniform(0, 2 * np.pi)))
        elif u < second_harmonic:
            row = [(1, 0.15 * a, phi), (2, a, rng.uniform(0, 2 * np.pi))]
        rows.append(row)
    H = HamiltonianSpec.separable(rows)
    if coupling:
        i, j = sorted(rng.choice(dim, size=2, replace=False))
        freq = [0] * dim
        freq[i] = freq[j] = 1
        H = H.plus(TrigTerm(tuple(freq), float(rng.uniform(-coupling, coupling)), float(rng.uniform(0, 2 * np.pi))))
    return H


def admissible_family(count: int = 20, seed: int = 0, dim: int = 4, coupling: float = 0.0) -> list[HamiltonianSpec]:
    rng = np.random.default_rng(seed)
    return [random_admissible(rng, dim, coupling) for _ in range(count)]
