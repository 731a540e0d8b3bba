"""Band-limited maps from a frame domain into flat quaternionic targets.

A :class:`FieldMap` stores both the node values ``(N, n, 4)`` and the
coefficients ``(nb, n, 4)`` on the domain's orthonormal basis.  Vector fields
along a map into a flat target use the same type.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import DomainKind, FrameDomain
from .quat import as_quat_array


class TopologyError(ValueError):
    """Raised when an operation needs a global lift that is not available."""


@dataclass(frozen=True)
class Target:
    """``H^n``, or the flat torus ``H^n / (L Z)^{4n}`` when ``lattice_scale`` is set."""

    n: int = 1
    lattice_scale: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("target dimension n must be >= 1")
        if self.lattice_scale is not None and self.lattice_scale <= 0:
            raise ValueError("lattice scale must be positive")

    @property
    def dim(self) -> int:
        return 4 * self.n

    @property
    def is_torus(self) -> bool:
        return self.lattice_scale is not None

    def reduce(self, values):
        """Reduce lifted values into the fundamental cell ``[0, L)``."""
        if not self.is_torus:
            return np.asarray(values)
        return np.mod(values, self.lattice_scale)


@dataclass(frozen=True, eq=False)
class FieldMap:
    domain: FrameDomain
    target: Target
    coeffs: np.ndarray
    values: np.ndarray
    contractible: bool = True
    winding: np.ndarray | None = None
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.target.n

    def with_coeffs(self, coeffs, **changes) -> "FieldMap":
        coeffs = np.asarray(coeffs, dtype=float)
        return replace(self, coeffs=coeffs, values=_synth(self.domain, coeffs), **changes)

    def __add__(self, other):
        if isinstance(other, FieldMap):
            _check_same(self, other)
            return self.with_coeffs(self.coeffs + other.coeffs, truncated=self.truncated or other.truncated)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, FieldMap):
            _check_same(self, other)
            return self.with_coeffs(self.coeffs - other.coeffs, truncated=self.truncated or other.truncated)
        return NotImplemented

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, c):
        return self.with_coeffs(float(c) * self.coeffs)

    __rmul__ = __mul__

    def flat(self) -> np.ndarray:
        """Coefficient vector ordered (basis, component)."""
        return self.coeffs.reshape(-1)

    def norm(self) -> float:
        """Unweighted L^2 norm (Parseval on the orthonormal basis)."""
        return float(np.linalg.norm(self.coeffs))


def _check_same(a: FieldMap, b: FieldMap):
    if a.domain is not b.domain:
        raise ValueError("fields live on different domains")
    if a.target.n != b.target.n:
        raise ValueError("fields have different target dimensions")


def _synth(d: FrameDomain, coeffs: np.ndarray) -> np.ndarray:
    return np.tensordot(d.basis_values, coeffs, axes=(1, 0))


def synthesize(d: FrameDomain, target: Target, coeffs) -> FieldMap:
    """Build a field from basis coefficients of shape ``(nb', n, 4)``, ``nb' <= nb``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim == 2:
        coeffs = coeffs[:, None, :]
    if coeffs.shape[1:] != (target.n, 4):
        raise ValueError(f"coefficients must have shape (m, {target.n}, 4), got {coeffs.shape}")
    if coeffs.shape[0] > d.nbasis:
        raise IndexError(f"{coeffs.shape[0]} coefficients exceed the {d.nbasis} basis functions")
    full = np.zeros((d.nbasis, target.n, 4))
    full[: coeffs.shape[0]] = coeffs
    return FieldMap(d, target, full, _synth(d, full))


def analyze(f: FieldMap) -> np.ndarray:
    """Coefficients recovered from node values by quadrature."""
    d = f.domain
    return np.tensordot(d.basis_values * d.weights[:, None], f.values, axes=(0, 0))


def from_values(d: FrameDomain, target: Target, values, check: bool = True) -> FieldMap:
    """Project node values onto the basis; flags ``truncated`` if information is lost."""
    values = np.asarray(values, dtype=float).reshape(len(d.nodes), target.n, 4)
    coeffs = np.tensordot(d.basis_values * d.weights[:, None], values, axes=(0, 0))
    synth = _synth(d, coeffs)
    lost = float(np.abs(synth - values).max()) if check else 0.0
    scale = max(1.0, float(np.abs(values).max()))
    return FieldMap(d, target, coeffs, synth, truncated=lost > 1e-10 * scale)


def from_function(d: FrameDomain, target: Target, fn) -> FieldMap:
    """Sample ``fn(nodes) -> (N, n, 4)`` (or ``(N, 4)`` when n = 1) and project."""
    vals = np.asarray(fn(d.nodes), dtype=float)
    if vals.ndim == 2:
        vals = vals[:, None, :]
    return from_values(d, target, vals)


def constant(d: FrameDomain, target: Target, x) -> FieldMap:
    x = np.asarray(x, dtype=float).reshape(target.n, 4)
    coeffs = np.zeros((d.nbasis, target.n, 4))
    coeffs[0] = x * np.sqrt(d.volume)
    return FieldMap(d, target, coeffs, _synth(d, coeffs))


def mean_value(f: FieldMap) -> np.ndarray:
    """``(1/Vol) * integral of f``, shape ``(n, 4)``."""
    if f.target.is_torus and not f.contractible and f.winding is None:
        raise TopologyError("non-contractible torus-valued map without winding data has no lift")
    d = f.domain
    return d.integrate(f.values) / d.volume


def random_bandlimited(
    d: FrameDomain, target: Target, degree: int, amplitude: float, seed: int
) -> FieldMap:
    """Coefficients uniform in ``[-amplitude, amplitude]`` on basis functions of degree <= ``degree``."""
    if degree > d.degree:
        raise ValueError(f"degree {degree} exceeds domain degree {d.degree}")
    rng = np.random.default_rng(seed)
    m = d.nbasis_upto(degree)
    c = rng.uniform(-amplitude, amplitude, size=(m, target.n, 4))
    return synthesize(d, target, c)


def inner(f: FieldMap, g: FieldMap, weighted: bool = True) -> float:
    """``<f, g>_{L^2}``, kappa-weighted by default."""
    _check_same(f, g)
    k = f.domain.kappa if weighted else 1.0
    return k * float(np.vdot(f.coeffs, g.coeffs))


def quadrature_inner(f: FieldMap, g: FieldMap, weighted: bool = True) -> float:
    """Same as :func:`inner` but summed over node values."""
    _check_same(f, g)
    k = f.domain.kappa if weighted else 1.0
    return k * float(f.domain.weights @ np.sum(f.values * g.values, axis=(1, 2)))


# ---------------------------------------------------------------------------
# serialization


MAGIC = b"HKFIELD1"


def field_header(f: FieldMap) -> dict:
    d = f.domain
    return {
        "domain": d.kind.value,
        "resolution": list(d.resolution),
        "degree": d.degree,
        "n": f.target.n,
        "lattice": f.target.lattice_scale,
        "nodes": len(d.nodes),
        "contractible": f.contractible,
        "frame_matrix": None if d.frame_matrix is None else d.frame_matrix.tolist(),
    }


def write_field(f: FieldMap, path) -> None:
    """Binary container: magic, header length, JSON header, float64 row-major values."""
    header = json.dumps(field_header(f), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(header)).tobytes())
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path, d: FrameDomain) -> FieldMap:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError("not a field container")
        hlen = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        header = json.loads(fh.read(hlen))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if header["domain"] != d.kind.value or tuple(header["resolution"]) != tuple(d.resolution):
        raise ValueError("container was written on a different domain")
    target = Target(header["n"], header["lattice"])
    f = from_values(d, target, raw.reshape(header["nodes"], target.n, 4))
    return replace(f, contractible=header["contractible"])


def field_csv(f: FieldMap) -> str:
    """CSV: header comment lines, then one row per node (coordinates, values)."""
    d = f.domain
    buf = io.StringIO()
    for key, val in field_header(f).items():
        buf.write(f"# {key}={json.dumps(val)}\n")
    coords = ["y0", "y1", "y2", "y3"] if d.kind is DomainKind.SPHERE3 else ["t1", "t2", "t3"]
    comps = [f"f{a}_{c}" for a in range(f.target.n) for c in "wxyz"]
    buf.write(",".join(coords + comps) + "\n")
    rows = np.hstack([d.nodes, f.values.reshape(len(d.nodes), -1)])
    for row in rows:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def quaternion_field(d: FrameDomain, fn, target: Target | None = None) -> FieldMap:
    """Project a quaternion-valued function of the node coordinates (n = 1)."""
    target = target or Target(1)
    return from_function(d, target, lambda y: as_quat_array(fn(y)))
