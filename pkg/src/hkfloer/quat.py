"""Quaternions, H^n vectors and the left-multiplication complex structures.

Arrays of shape ``(..., 4)`` hold quaternions in the basis ``1, i, j, k``.
A vector of ``H^n`` is an array of shape ``(n, 4)``; fields carry extra
leading axes.  The complex structures ``I, J, K`` act by *left*
multiplication with ``i, j, k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Imaginary units as arrays; index 0, 1, 2 <-> I, J, K.
UNITS = np.eye(4)[1:]


@dataclass(frozen=True)
class Quat:
    w: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def from_array(cls, a) -> "Quat":
        a = np.asarray(a, dtype=float)
        return cls(*map(float, a))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def conj(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def __mul__(self, other):
        if isinstance(other, (Quat, ImQuat)):
            return Quat.from_array(qmul(self.as_array(), as_quat_array(other)))
        return Quat.from_array(self.as_array() * float(other))

    def __rmul__(self, other):
        return Quat.from_array(self.as_array() * float(other))

    def __add__(self, other):
        return Quat.from_array(self.as_array() + as_quat_array(other))

    def __sub__(self, other):
        return Quat.from_array(self.as_array() - as_quat_array(other))

    def __neg__(self):
        return Quat(-self.w, -self.x, -self.y, -self.z)


@dataclass(frozen=True)
class ImQuat:
    """Imaginary quaternion ``x i + y j + z k``; a point of S^2 when unit."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([0.0, self.x, self.y, self.z])

    def as_quat(self) -> Quat:
        return Quat(0.0, self.x, self.y, self.z)

    def coefficients(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients()))


ONE = Quat(1.0)
I_UNIT = ImQuat(1.0, 0.0, 0.0)
J_UNIT = ImQuat(0.0, 1.0, 0.0)
K_UNIT = ImQuat(0.0, 0.0, 1.0)


def as_quat_array(a) -> np.ndarray:
    if isinstance(a, (Quat, ImQuat)):
        return a.as_array()
    return np.asarray(a, dtype=float)


def qmul(a, b) -> np.ndarray:
    """Hamilton product of quaternion arrays, broadcasting over leading axes."""
    a = as_quat_array(a)
    b = as_quat_array(b)
    a0, a1, a2, a3 = np.moveaxis(a, -1, 0)
    b0, b1, b2, b3 = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ],
        axis=-1,
    )


def qconj(a) -> np.ndarray:
    return as_quat_array(a) * np.array([1.0, -1.0, -1.0, -1.0])


def left_matrix(q) -> np.ndarray:
    """4x4 real matrix of ``v -> q v``."""
    q = as_quat_array(q)
    return qmul(q, np.eye(4)).T


def right_matrix(q) -> np.ndarray:
    """4x4 real matrix of ``v -> v q``."""
    q = as_quat_array(q)
    return qmul(np.eye(4), q).T


def structure_matrix(lam) -> np.ndarray:
    """Matrix of ``J_lambda = l1 I + l2 J + l3 K`` on a single H factor."""
    if isinstance(lam, ImQuat):
        lam = lam.coefficients()
    lam = np.asarray(lam, dtype=float)
    if lam.shape == (4,):
        lam = lam[1:]
    return sum(c * left_matrix(u) for c, u in zip(lam, UNITS))


def structure_apply(lam, v) -> np.ndarray:
    """Apply ``J_lambda`` entrywise to an array of quaternions ``(..., 4)``.

    ``lam`` need not be a unit vector; ``J_lambda`` is linear in it.
    """
    if isinstance(lam, ImQuat):
        lam = lam.as_array()
    lam = np.asarray(lam, dtype=float)
    if lam.shape == (3,):
        lam = np.concatenate([[0.0], lam])
    return qmul(lam, as_quat_array(v))


def inner(a, b) -> float:
    """Real Euclidean inner product on R^{4n}: sum of Re(a_k conj(b_k))."""
    return float(np.sum(as_quat_array(a) * as_quat_array(b)))


def omega(lam, xi, eta) -> float:
    """Symplectic form ``omega_lambda(xi, eta) = <J_lambda xi, eta>``."""
    return inner(structure_apply(lam, xi), eta)
