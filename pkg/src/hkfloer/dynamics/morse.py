"""Positive gradient lines ``x' = grad H(x)`` between critical points of a y-independent H.

Separable Hamiltonians are counted exactly, factor by factor.  Otherwise the
unstable manifold of the lower endpoint is shot through (after reversing time
when the stable side is smaller).  On a two-dimensional unstable manifold the
circle of directions splits into arcs flowing to the same lifted maximum; arc
boundaries are refined by multisection and kept when they land on the upper
endpoint.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from ..hamiltonian import HamiltonianSpec

log = logging.getLogger(__name__)


class MorseSmaleError(RuntimeError):
    """Stable and unstable manifolds meet non-transversally (within tolerance)."""


@dataclass
class MorseCount:
    count: int
    samples: list = field(default_factory=list)  # (s, x) arrays, one per counted orbit
    method: str = "separable"

    @property
    def mod2(self) -> int:
        return self.count % 2


# -- critical points -------------------------------------------------------------


def _factor_terms(H: HamiltonianSpec, i: int):
    return [t for t in H.terms if t.freq[i] != 0]


def factor_critical_points(H: HamiltonianSpec, i: int, samples: int = 4096) -> list[tuple[float, bool]]:
    """Critical points of the i-th factor of a separable H in ``[0, L)`` as (position, is_max)."""
    terms = _factor_terms(H, i)
    if not terms:
        raise ValueError(f"coordinate {i} carries no term; H is degenerate")
    L = H.period
    k = np.array([2 * np.pi * t.freq[i] / L for t in terms])
    a = np.array([t.amplitude for t in terms])
    ph = np.array([t.phase for t in terms])

    def d1(x):
        return -np.sum(a * k * np.sin(k * x + ph))

    def d2(x):
        return -np.sum(a * k**2 * np.cos(k * x + ph))

    n = samples * int(np.max(np.abs([t.freq[i] for t in terms])))
    xs = np.linspace(0.0, L, n + 1)
    vals = -np.sin(np.outer(xs, k) + ph) @ (a * k)
    out = []
    for j in range(n):
        lo, hi = vals[j], vals[j + 1]
        if lo == 0.0:
            root = xs[j]
        elif lo * hi < 0:
            root = brentq(d1, xs[j], xs[j + 1], xtol=1e-15)
        else:
            continue
        curv = d2(root)
        if abs(curv) < 1e-9:
            raise ValueError(f"degenerate critical point of factor {i} at {root}")
        out.append((float(root % L), bool(curv < 0)))
    out.sort()
    return out


def separable_critical_points(H: HamiltonianSpec) -> list[tuple[np.ndarray, int]]:
    """All critical points of a separable H on the torus with their Morse indices."""
    if not (H.is_separable and H.y_independent and not H.quadratic):
        raise ValueError("separable_critical_points needs a separable, y-independent trigonometric H")
    factors = [factor_critical_points(H, i) for i in range(H.dim)]
    pts = []
    for combo in itertools.product(*factors):
        pts.append((np.array([c[0] for c in combo]), sum(c[1] for c in combo)))
    return pts


# -- helpers ---------------------------------------------------------------------


def _index(H, x):
    return int(np.sum(np.linalg.eigvalsh(H.hessian(x)) < 0))


def _wrap(v, L):
    return v - L * np.round(v / L)


def _near(a, b, L, tol):
    return np.linalg.norm(_wrap(np.asarray(a) - np.asarray(b), L)) <= tol


def _check_pair(xm, xp, H):
    xm = np.asarray(xm, dtype=float).ravel()
    xp = np.asarray(xp, dtype=float).ravel()
    if not H.y_independent:
        raise ValueError("Morse trajectories need a y-independent Hamiltonian")
    if _near(xm, xp, H.period, 1e-9):
        raise ValueError("endpoints must be distinct critical points")
    for x in (xm, xp):
        g = np.linalg.norm(H.gradient(x))
        if g > 1e-8:
            raise ValueError(f"{x} is not a critical point (|grad H| = {g:.2e})")
    im, ip = _index(H, xm), _index(H, xp)
    if ip - im != 1:
        raise ValueError(f"index difference ind(x+) - ind(x-) = {ip - im}, expected 1")
    return xm, xp


def _vector_field(H, sign=1.0, mask=None):
    def rhs(_, z):
        x = z.reshape(-1, H.dim)
        g = sign * H.gradient(x)
        return (g if mask is None else g * mask).ravel()

    return rhs


def _flow_time(H, xm, xp, delta):
    rates = [np.abs(np.linalg.eigvalsh(H.hessian(x))).min() for x in (xm, xp)]
    return (3.0 * np.log(1.0 / delta) + 30.0) / min(rates)


def orbit_samples(H, x0, direction, delta, T, sign=1.0, n=401, mask=None):
    sol = solve_ivp(_vector_field(H, sign, mask), (0.0, T), x0 + delta * direction,
                    method="DOP853", rtol=1e-10, atol=1e-13, dense_output=True)
    s = np.linspace(0.0, T, n)
    return s, sol.sol(s).T


# -- counting --------------------------------------------------------------------


def _separable_count(xm, xp, H, with_samples=True):
    L = H.period
    diff = np.flatnonzero(np.abs(_wrap(xm - xp, L)) > 1e-9)
    if len(diff) != 1:
        return MorseCount(0, [], "separable")
    i = int(diff[0])
    crit = factor_critical_points(H, i)
    pos = np.array([c[0] for c in crit])
    j = int(np.argmin(np.abs(_wrap(pos - xm[i], L))))
    r = len(pos)
    if crit[j][1]:
        return MorseCount(0, [], "separable")
    count, samples = 0, []
    T = _flow_time(H, xm, xp, 1e-6)
    for step, sgn in ((1, 1.0), (-1, -1.0)):
        nb = (j + step) % r
        if crit[nb][1] and _near(pos[nb], xp[i], L, 1e-9):
            count += 1
            e = np.zeros(H.dim)
            e[i] = sgn
            if with_samples:
                # only coordinate i moves; freezing the rest keeps rounding off the unstable directions
                samples.append(orbit_samples(H, xm, e, 1e-6, T, mask=np.abs(e)))
    return MorseCount(count, samples, "separable")


def _shoot_endpoints(H, x0, offsets, T, sign):
    """Integrate a batch of trajectories; returns path samples (n_t, batch, dim)."""
    z0 = (x0[None, :] + offsets).ravel()
    ts = np.linspace(0.0, T, 2001)
    sol = solve_ivp(_vector_field(H, sign), (0.0, T), z0, method="DOP853",
                    rtol=1e-10, atol=1e-13, t_eval=ts)
    if not sol.success:
        raise RuntimeError(sol.message)
    return ts, sol.y.T.reshape(len(ts), len(offsets), H.dim)


def _closest(paths, target, L):
    off = _wrap(paths - target, L)
    dist = np.linalg.norm(off, axis=-1)
    k = np.argmin(dist, axis=0)
    idx = np.arange(paths.shape[1])
    return dist[k, idx], off[k, idx]


def _boundaries(shoot, lo, hi, e_lo, e_hi, rounds, fan=16):
    """Midpoints of every resolved endpoint change inside ``[lo, hi]``."""
    if rounds == 0:
        return [0.5 * (lo + hi)]
    grid = np.linspace(lo, hi, fan + 1)
    _, e, _, _ = shoot(grid[1:-1])
    ends = np.concatenate([e_lo[None], e, e_hi[None]])
    out = []
    for a in range(fan):
        if np.any(ends[a] != ends[a + 1]):
            out += _boundaries(shoot, grid[a], grid[a + 1], ends[a], ends[a + 1], rounds - 1, fan)
    return out


def _shooting_count(xm, xp, H, delta=1e-7, n_theta=32, conv_tol=0.02, tangency_tol=1e-3, rounds=8,
                    merge_tol=1e-7, side_width=1e-8):
    L = H.period
    conv_tol, tangency_tol = conv_tol * L, tangency_tol * L
    sign = 1.0
    im = _index(H, xm)
    k = H.dim - im
    if im + 1 < k:
        # reverse time: flow of -grad H from x+ to x-, unstable dimension ind(x+)
        xm, xp, sign = xp, xm, -1.0
        k = im + 1
    if k > 2:
        raise NotImplementedError("shooting supports unstable dimension at most 2")
    w, V = np.linalg.eigh(sign * H.hessian(xm))
    Eu, rates = V[:, w > 0], w[w > 0]
    wp, Vp = np.linalg.eigh(sign * H.hessian(xp))
    eu_plus = Vp[:, wp > 0]
    T = _flow_time(H, xm, xp, delta)

    if k == 1:
        dirs = np.stack([Eu[:, 0], -Eu[:, 0]])
        ts, paths = _shoot_endpoints(H, xm, delta * dirs, T, sign)
        ends = paths[-1]
        hit = [j for j in range(2) if _near(ends[j], xp, L, conv_tol)]
        samples = [(ts, paths[:, j]) for j in hit]
        if sign < 0:
            samples = [(s, x[::-1]) for s, x in samples]
        return MorseCount(len(hit), samples, "shooting")

    # ellipse adapted to the two unstable rates: x_fast / x_slow^ratio is constant
    # along linearized orbits, so every orbit class is met at a resolvable angle
    ratio = rates[1] / rates[0]
    slow, fast = delta ** (1.0 / ratio), delta
    if slow > 1e-2:
        slow, fast = 1e-2, 1e-2**ratio
    if fast < 1e-12:
        raise NotImplementedError(f"unstable rates too anisotropic for shooting (ratio {ratio:.2f})")

    def dirs_of(theta):
        theta = np.atleast_1d(theta)
        return slow * np.cos(theta)[:, None] * Eu[:, 0] + fast * np.sin(theta)[:, None] * Eu[:, 1]

    def shoot(theta):
        ts, paths = _shoot_endpoints(H, xm, dirs_of(theta), T, sign)
        dmin, _ = _closest(paths, xp, L)
        # lifted end state in R^m, on a grid much finer than the critical point spacing
        ends = np.round(paths[-1] / (1e-4 * L)).astype(np.int64)
        return dmin, ends, ts, paths

    # irrational offset keeps symmetric crossings off the sample grid
    thetas = 0.1234567 + np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    dmin, ends, _, _ = shoot(thetas)
    changes = np.any(ends != np.roll(ends, -1, axis=0), axis=1)
    hits = []
    for j in range(n_theta):
        jn = (j + 1) % n_theta
        if not changes[j]:
            local_min = min(dmin[j - 1], dmin[jn]) > dmin[j]
            if dmin[j] < tangency_tol and local_min and not changes[j - 1]:
                raise MorseSmaleError(
                    f"tangency near theta={thetas[j]:.6f}: closest approach {dmin[j]:.2e} without crossing")
            continue
        for theta in _boundaries(shoot, thetas[j], thetas[j] + 2 * np.pi / n_theta, ends[j], ends[jn], rounds):
            trio = np.array([theta - side_width, theta, theta + side_width])
            ts, paths = _shoot_endpoints(H, xm, dirs_of(trio), T, sign)
            d, off = _closest(paths, xp, L)
            # a genuine crossing: the neighbours leave x+ on opposite sides of its stable manifold
            side = off @ eu_plus
            if d[1] < conv_tol and float(np.sum(side[0] * side[2])) < 0:
                hits.append((float(np.mod(theta, 2 * np.pi)), ts, paths[:, 1]))
    # orbits lingering near x+ split one crossing into a cluster of end-state changes
    hits.sort(key=lambda h: h[0])
    kept = []
    for h in hits:
        if kept and h[0] - kept[-1][0] <= merge_tol:
            continue
        kept.append(h)
    if len(kept) > 1 and kept[0][0] + 2 * np.pi - kept[-1][0] <= merge_tol:
        kept.pop()
    samples = [(ts, x[::-1] if sign < 0 else x) for _, ts, x in kept]
    return MorseCount(len(kept), samples, "shooting")


def morse_trajectories(xm, xp, H: HamiltonianSpec, method: str = "auto", with_samples: bool = True, **kw) -> MorseCount:
    """Count positive gradient lines from ``xm`` to ``xp`` (``ind(xp) = ind(xm) + 1``)."""
    xm, xp = _check_pair(xm, xp, H)
    if method == "auto":
        method = "separable" if H.is_separable and not H.quadratic else "shooting"
    if method == "separable":
        return _separable_count(xm, xp, H, with_samples)
    if method == "shooting":
        return _shooting_count(xm, xp, H, **kw)
    raise ValueError(f"unknown method {method!r}")


def morse_orbit(xm, xp, H: HamiltonianSpec, which: int = 0, method: str = "auto"):
    """One gradient line as (s, x) with ``s = 0`` where H crosses its mid value."""
    res = morse_trajectories(xm, xp, H, method)
    if res.count == 0:
        raise ValueError("no gradient line joins the given critical points")
    s, x = res.samples[which]
    # cut at the closest approach: past it, rounding errors leave along unstable directions of xp
    def dist(z):
        return np.linalg.norm(_wrap(x - np.asarray(z, float).ravel(), H.period), axis=1)

    j1 = int(np.argmin(dist(xp)))
    j0 = int(np.argmin(dist(xm)[: j1 + 1]))
    s, x = s[j0 : j1 + 1], x[j0 : j1 + 1]
    h = H.value(x)
    mid = 0.5 * (H.value(np.asarray(xm, float)) + H.value(np.asarray(xp, float)))
    j = int(np.argmin(np.abs(h - mid)))
    return s - s[j], x
