"""Trigonometric Hamiltonians ``H: X x M -> R`` on flat quaternionic targets.

``H(x, y) = sum_t a_t cos(2 pi m_t . x / L + phi_t + theta_t(y)) + c/2 |x - x0|^2``

with integer target frequencies ``m_t`` (so ``H`` descends to the torus of side
``L``) and an optional domain phase ``theta_t``: ``2 pi k . t`` on T^3 or
``w . y`` on S^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrigTerm:
    freq: tuple  # integer target frequency in Z^{4n}
    amplitude: float
    phase: float = 0.0
    domain_freq: tuple | None = None  # length 3 (torus) or 4 (sphere)

    def theta(self, y) -> np.ndarray | float:
        if self.domain_freq is None:
            return 0.0
        w = np.asarray(self.domain_freq, dtype=float)
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != len(w):
            raise ValueError("domain frequency does not match the domain dimension")
        scale = 2.0 * np.pi if len(w) == 3 else 1.0
        return scale * (y @ w)


@dataclass(frozen=True)
class HamiltonianSpec:
    dim: int  # real dimension 4n
    terms: tuple = ()
    period: float = 1.0
    quadratic: float = 0.0
    center: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for t in self.terms:
            if len(t.freq) != self.dim:
                raise ValueError(f"term frequency {t.freq} is not in Z^{self.dim}")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, dim: int) -> "HamiltonianSpec":
        return cls(dim)

    @classmethod
    def separable(cls, coefficients, period: float = 1.0) -> "HamiltonianSpec":
        """``sum_i sum_p a_ip cos(2 pi p x_i / L + phi_ip)``.

        ``coefficients[i]`` is a list of ``(p, a, phi)`` triples for coordinate i.
        """
        dim = len(coefficients)
        terms = []
        for i, row in enumerate(coefficients):
            for p, a, phi in row:
                m = [0] * dim
                m[i] = int(p)
                terms.append(TrigTerm(tuple(m), float(a), float(phi)))
        return cls(dim, tuple(terms), period)

    @classmethod
    def cosine_sum(cls, amplitudes, period: float = 1.0) -> "HamiltonianSpec":
        """``sum_i a_i cos(2 pi x_i / L)``."""
        return cls.separable([[(1, a, 0.0)] for a in amplitudes], period)

    @classmethod
    def quadratic_well(cls, dim: int, c: float, center=None) -> "HamiltonianSpec":
        center = tuple(np.zeros(dim) if center is None else np.asarray(center, dtype=float).ravel())
        return cls(dim, (), 1.0, float(c), center)

    def plus(self, *terms: TrigTerm) -> "HamiltonianSpec":
        return HamiltonianSpec(self.dim, self.terms + tuple(terms), self.period, self.quadratic, self.center)

    def scaled(self, s: float) -> "HamiltonianSpec":
        terms = tuple(TrigTerm(t.freq, s * t.amplitude, t.phase, t.domain_freq) for t in self.terms)
        return HamiltonianSpec(self.dim, terms, self.period, s * self.quadratic, self.center)

    # -- properties ---------------------------------------------------------

    @property
    def y_independent(self) -> bool:
        return all(t.domain_freq is None for t in self.terms)

    @property
    def is_separable(self) -> bool:
        return all(np.count_nonzero(t.freq) <= 1 for t in self.terms)

    def _arrays(self):
        m = np.array([t.freq for t in self.terms], dtype=float).reshape(-1, self.dim)
        a = np.array([t.amplitude for t in self.terms], dtype=float)
        p = np.array([t.phase for t in self.terms], dtype=float)
        return 2.0 * np.pi * m / self.period, a, p

    def _angles(self, x, y):
        k, _, p = self._arrays()
        ang = x @ k.T + p
        if not self.y_independent:
            if y is None:
                raise ValueError("y-dependent Hamiltonian needs domain points")
            th = [np.broadcast_to(t.theta(y), ang.shape[:-1]) for t in self.terms]
            ang = ang + np.stack(th, axis=-1)
        return ang

    def _offset(self, x):
        c = np.zeros(self.dim) if self.center is None else np.asarray(self.center)
        return x - c

    # -- evaluators ---------------------------------------------------------

    def value(self, x, y=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _, a, _ = self._arrays()
        out = np.cos(self._angles(x, y)) @ a if self.terms else np.zeros(x.shape[:-1])
        if self.quadratic:
            out = out + 0.5 * self.quadratic * np.sum(self._offset(x) ** 2, axis=-1)
        return out

    def gradient(self, x, y=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k, a, _ = self._arrays()
        out = -(np.sin(self._angles(x, y)) * a) @ k if self.terms else np.zeros(x.shape)
        if self.quadratic:
            out = out + self.quadratic * self._offset(x)
        return out

    def hessian(self, x, y=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k, a, _ = self._arrays()
        out = np.zeros(x.shape + (self.dim,))
        if self.terms:
            c = -np.cos(self._angles(x, y)) * a
            out = np.einsum("...t,ti,tj->...ij", c, k, k)
        if self.quadratic:
            out = out + self.quadratic * np.eye(self.dim)
        return out

    def third(self, x, y=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k, a, _ = self._arrays()
        if not self.terms:
            return np.zeros(x.shape + (self.dim, self.dim))
        c = np.sin(self._angles(x, y)) * a
        return np.einsum("...t,ti,tj,tl->...ijl", c, k, k, k)

    # -- norms --------------------------------------------------------------

    def derivative_sup(self, j: int, samples: int = 1 << 14) -> float:
        """``sup |nabla^j H|`` (operator norm on X, sup over X x M).

        Sampled per coordinate when ``H`` is separable and y-independent,
        otherwise the triangle bound ``sum |a| |k|^j``.
        """
        if self.quadratic and j <= 1:
            return np.inf
        quad = self.quadratic if j == 2 else 0.0
        if not self.terms:
            return abs(quad)
        k, a, p = self._arrays()
        if not (self.is_separable and self.y_independent):
            return float(np.sum(np.abs(a) * np.linalg.norm(k, axis=1) ** j)) + abs(quad)
        s = np.linspace(0.0, self.period, samples, endpoint=False)
        highs, lows, sups = [], [], []
        for i in range(self.dim):
            sel = np.flatnonzero(k[:, i])
            if not len(sel):
                continue
            ang = np.outer(s, k[sel, i]) + p[sel]
            # j-th derivative of cos(ang) is cos(ang + j pi/2)
            h = np.cos(ang + j * np.pi / 2) @ (a[sel] * k[sel, i] ** j)
            highs.append(h.max())
            lows.append(h.min())
            sups.append(np.abs(h).max())
        if j == 0:
            const = sum(t.amplitude * np.cos(t.phase) for t in self.terms if not any(t.freq))
            return float(max(sum(highs) + const, -(sum(lows) + const)))
        if j == 1:
            return float(np.sqrt(np.sum(np.square(sups))))
        return float(max(sups)) + abs(quad)

    def c_norm(self, ell: int) -> float:
        """``||H||_{C^ell} = max_{j <= ell} sup |nabla^j H|``."""
        return max(self.derivative_sup(j) for j in range(ell + 1))

    def norms(self) -> dict:
        return {f"C{l}": self.c_norm(l) for l in range(4)}

    def as_dict(self) -> dict:
        return {
            "dim": self.dim,
            "period": self.period,
            "quadratic": self.quadratic,
            "center": None if self.center is None else list(self.center),
            "terms": [
                {
                    "freq": list(t.freq),
                    "amplitude": t.amplitude,
                    "phase": t.phase,
                    "domain_freq": None if t.domain_freq is None else list(t.domain_freq),
                }
                for t in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HamiltonianSpec":
        allowed = {"dim", "period", "quadratic", "center", "terms"}
        unknown = set(data) - allowed
        if unknown:
            raise KeyError(f"unknown Hamiltonian keys: {sorted(unknown)}")
        terms = []
        for t in data.get("terms", []):
            bad = set(t) - {"freq", "amplitude", "phase", "domain_freq"}
            if bad:
                raise KeyError(f"unknown Hamiltonian term keys: {sorted(bad)}")
            df = t.get("domain_freq")
            terms.append(
                TrigTerm(tuple(int(v) for v in t["freq"]), float(t["amplitude"]), float(t.get("phase", 0.0)),
                         None if df is None else tuple(df))
            )
        center = data.get("center")
        return cls(
            int(data["dim"]), tuple(terms), float(data.get("period", 1.0)), float(data.get("quadratic", 0.0)),
            None if center is None else tuple(center),
        )
