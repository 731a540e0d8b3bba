"""Dense linear algebra over GF(2) on uint8 arrays."""

from __future__ import annotations

import numpy as np


def as_gf2(a) -> np.ndarray:
    return (np.asarray(a) % 2).astype(np.uint8)


def matmul(a, b) -> np.ndarray:
    a = as_gf2(a).astype(np.int64)
    b = as_gf2(b).astype(np.int64)
    return ((a @ b) % 2).astype(np.uint8)


def row_reduce(a) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and pivot columns."""
    m = as_gf2(a).copy()
    rows, cols = m.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.flatnonzero(m[r:, c])
        if not len(hits):
            continue
        p = r + hits[0]
        if p != r:
            m[[r, p]] = m[[p, r]]
        others = np.flatnonzero(m[:, c])
        others = others[others != r]
        m[others] ^= m[r]
        pivots.append(c)
        r += 1
    return m, pivots


def rank(a) -> int:
    a = np.asarray(a)
    if a.size == 0:
        return 0
    return len(row_reduce(a)[1])


def nullspace(a) -> np.ndarray:
    """Basis of ker(a) as rows."""
    a = as_gf2(a)
    rows, cols = a.shape
    R, piv = row_reduce(a)
    free = [c for c in range(cols) if c not in piv]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for k, fc in enumerate(free):
        basis[k, fc] = 1
        for i, pc in enumerate(piv):
            basis[k, pc] = R[i, fc]
    return basis
