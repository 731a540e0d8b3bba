"""Pointwise and integrated a-priori estimates evaluated on computed trajectories.

All quantities are taken for the unit-speed picture ``v(s, y) = u(eps s, y)``,
which solves ``d_s v + D v = eps grad H(v)``; the constants therefore use
``eps H``.  The space-time operator is ``d_s^2 + sum_i d_{v_i} d_{v_i}``: second
differences in ``s`` on the collocation points and the spectral frame
Laplacian on ``M``.  Boundary rows in ``s`` are dropped.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import trapezoid

from ..action import action as _action
from ..domain import DomainKind, FrameDomain
from ..field import synthesize
from .bvp import TrajectorySolution


def _second_difference(g, s):
    """Three-point second derivative along axis 0 at interior points (non-uniform grid)."""
    h0 = (s[1:-1] - s[:-2]).reshape((-1,) + (1,) * (g.ndim - 1))
    h1 = (s[2:] - s[1:-1]).reshape((-1,) + (1,) * (g.ndim - 1))
    return 2.0 * (h1 * g[:-2] - (h0 + h1) * g[1:-1] + h0 * g[2:]) / (h0 * h1 * (h0 + h1))


def frame_laplacian_values(d: FrameDomain, g: np.ndarray) -> np.ndarray:
    """``sum_i d_{v_i} d_{v_i}`` of node functions ``g`` of shape ``(..., q)``."""
    c = np.einsum("qa,...q->...a", d.basis_values * d.weights[:, None], g)
    P = d.derivative
    Lc = np.einsum("iab,ibc,...c->...a", P, P, c)
    return np.einsum("qa,...a->...q", d.basis_values, Lc)


def _simpson_cumulative(vals, s):
    """Per-interval Simpson integrals from values on nodes and midpoints (length 2M+1)."""
    h = np.diff(s)
    return h / 6 * (vals[0:-1:2] + 4 * vals[1::2] + vals[2::2])


def pointwise_fields(sol: TrajectorySolution) -> dict:
    """``d_s v``, ``|d_s v|^2``, ``e_v`` and ``|dv|^2`` on (collocation point, node)."""
    eps = sol.epsilon
    d = sol.domain
    V = d.basis_values[:, : sol.m]
    w = eps * sol.ds()  # (P, m, n, 4) coefficients of d_s v
    wv = np.einsum("qa,panc->pqnc", V, w)
    ds_sq = np.sum(wv**2, axis=(2, 3))
    dv = sol.frame_derivative_values()  # (3, P, q, n, 4)
    frame_sq = np.sum(dv**2, axis=(0, 3, 4))
    e = 0.5 * ds_sq + 0.5 * frame_sq
    return {"w": w, "ds_sq": ds_sq, "frame_sq": frame_sq, "e": e, "du_sq": 2 * e, "s": sol.points / eps}


def _h_norms(H, eps):
    return {k: eps * H.c_norm(k) for k in (1, 2, 3)}, eps * H.derivative_sup(1)


def ddu_check(sol: TrajectorySolution, fields=None, width: int = 4, margin: int = 4) -> dict:
    """``int_{s0}^{s1} int |d_s d_s v|^2 + |D d_s v|^2 <= (C + 4/r^2) int_{s0-r}^{s1+r} int |d_s v|^2``.

    Windows are node-aligned: ``width`` intervals inside, ``margin`` intervals on
    each side (so ``r = margin * h / eps``).
    """
    fields = fields or pointwise_fields(sol)
    eps = sol.epsilon
    kappa = sol.domain.kappa
    sysm = sol.system()
    W = fields["w"].reshape(len(sol.coeffs), -1)
    Js = sysm.jacobians(sol.flat())
    # d_s of d_s v in the unit-speed picture: eps^2 J_F F
    wdot = np.stack([eps * (J @ wp) for J, wp in zip(Js, W)])
    Dw = (sysm.D @ W.T).T * eps  # eps^-1 D scaled back to D
    inner_lhs = kappa * (np.einsum("pi,pi->p", wdot, wdot) + np.einsum("pi,pi->p", Dw, Dw))
    outer = kappa * np.einsum("pi,pi->p", W, W)
    st = sol.s / eps
    lhs_int = _simpson_cumulative(inner_lhs, st)
    rhs_int = _simpson_cumulative(outer, st)
    norms, _ = _h_norms(sol.H, eps)
    sup_ds = float(np.sqrt(fields["ds_sq"].max()))
    C = 2 * norms[3] * sup_ds + 2 * norms[2] ** 2
    M = len(sol.s) - 1
    windows = []
    worst = 0.0
    cmin = 0.0
    for j0 in range(margin, M - margin - width + 1, width):
        j1 = j0 + width
        r = st[j0] - st[j0 - margin]
        lhs = float(lhs_int[j0:j1].sum())
        wide = float(rhs_int[j0 - margin : j1 + margin].sum())
        rhs = (C + 4 / r**2) * wide
        windows.append((float(st[j0]), float(st[j1]), float(r), lhs, rhs))
        if wide > 0:
            worst = max(worst, lhs / rhs)
            cmin = max(cmin, lhs / wide - 4 / r**2)
        elif lhs > 0:
            worst = np.inf
    holds = all(lhs <= rhs * (1 + 1e-9) + 1e-300 for *_, lhs, rhs in windows)
    return {"C_bound": float(C), "C_min": float(cmin), "worst_ratio": float(worst),
            "holds": bool(holds), "windows": len(windows)}


def dudsu_check(sol: TrajectorySolution, fields=None) -> dict:
    """Slice-wise ``1/2 int |dv|^2 <= A_id(v(s)) + Vol sup|grad H|^2 + 3/2 int |d_s v|^2``.

    ``A_id`` is the action on the Cartan sphere; on the flat torus the
    corresponding identity has no action term.
    """
    fields = fields or pointwise_fields(sol)
    d = sol.domain
    wts = d.weights
    _, grad_sup = _h_norms(sol.H, sol.epsilon)
    lhs = 0.5 * fields["du_sq"] @ wts
    ds_int = fields["ds_sq"] @ wts
    if d.kind is DomainKind.SPHERE3:
        A = np.array([_action(synthesize(d, sol.target, c)) for c in sol.coeffs])
    else:
        A = np.zeros(len(sol.coeffs))
    rhs = A + d.volume * grad_sup**2 + 1.5 * ds_int
    ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
    return {"holds": bool(np.all(lhs <= rhs * (1 + 1e-9) + 1e-300)), "worst_ratio": float(ratio.max()),
            "slices": int(len(lhs))}


def space_time_laplacian(sol: TrajectorySolution, g: np.ndarray, s: np.ndarray) -> np.ndarray:
    """``(d_s^2 + L) g`` at interior collocation points; ``g`` has shape ``(P, q)``."""
    return _second_difference(g, s) + frame_laplacian_values(sol.domain, g[1:-1])


def _fit(neg, denom, floor=1e-14):
    mask = denom > floor
    if not np.any(mask):
        return 0.0
    return float(max(0.0, np.max(neg[mask] / denom[mask])))


def ler_fit(sol: TrajectorySolution, fields=None) -> dict:
    """Smallest constants with ``sL e >= -A - B e^{3/2}`` (one free at a time) and the fitted C."""
    fields = fields or pointwise_fields(sol)
    s = fields["s"]
    e = fields["e"]
    sle = space_time_laplacian(sol, e, s)
    ei = e[1:-1]
    neg = np.maximum(-sle, 0.0)
    norms, _ = _h_norms(sol.H, sol.epsilon)
    h3 = norms[3]
    phi = h3**2 + (1 + h3**2) * ei + h3 * ei**1.5
    return {
        "A_min": float(neg.max(initial=0.0)),
        "B_min": _fit(neg, ei**1.5),
        "C_fit": _fit(neg, phi),
        "sL_e_min": float(sle.min(initial=0.0)),
    }


def les_fit(sol: TrajectorySolution, fields=None) -> dict:
    """Smallest C with ``sL |d_s v|^2 >= -C (1 + |dv|^2) |d_s v|^2``."""
    fields = fields or pointwise_fields(sol)
    g = fields["ds_sq"]
    sl = space_time_laplacian(sol, g, fields["s"])
    neg = np.maximum(-sl, 0.0)
    denom = (1 + fields["du_sq"][1:-1]) * g[1:-1]
    return {"C_min": _fit(neg, denom, floor=1e-14 * max(g.max(initial=0.0), 1e-300))}


def monitor_apriori(sol: TrajectorySolution) -> dict:
    """Report the a-priori inequalities along a flat-target trajectory."""
    fields = pointwise_fields(sol)
    return {
        "ddu": ddu_check(sol, fields),
        "dudsu": dudsu_check(sol, fields),
        "ler": ler_fit(sol, fields),
        "les": les_fit(sol, fields),
        "e_max": float(fields["e"].max(initial=0.0)),
        "unit_speed_length": float(fields["s"][-1] - fields["s"][0]),
    }


def heinz_alpha(n: int, mu: float) -> float:
    if not 1.0 <= mu <= (n + 2) / n:
        raise ValueError(f"exponent {mu} outside [1, {(n + 2) / n}]")
    den = 2 + n - n * mu
    return np.inf if den <= 0 else 2.0 / den


def heinz_monitor(e, A: float, B: float, mu_exp: float, d: FrameDomain, s=None, n: int | None = None,
                  interior: float = 0.1, r: float = 1.0) -> dict:
    """Check ``sL e >= -A - B e^mu`` and report the mean-value ratio.

    ``e`` has shape ``(P, q)`` on a space-time grid ``s`` (n = 4) or ``(q,)`` on M
    (n = 3).  ``sup_K`` runs over the interior ``1 - 2*interior`` fraction in ``s``.
    At the critical exponent the ratio is taken against ``A r^2 + r^-n int e``.
    """
    e = np.asarray(e, dtype=float)
    if np.any(e < 0):
        raise ValueError("e must be nonnegative")
    static = e.ndim == 1
    n = (3 if static else 4) if n is None else n
    alpha = heinz_alpha(n, mu_exp)
    if static:
        Le = frame_laplacian_values(d, e)
        margin = Le + A + B * e**mu_exp
        sup_k = float(e.max(initial=0.0))
        integral = float(d.weights @ e)
    else:
        s = np.asarray(s, dtype=float)
        Le = _second_difference(e, s) + frame_laplacian_values(d, e[1:-1])
        margin = Le + A + B * e[1:-1] ** mu_exp
        lo, hi = s[0] + interior * (s[-1] - s[0]), s[-1] - interior * (s[-1] - s[0])
        keep = (s >= lo) & (s <= hi)
        sup_k = float(e[keep].max(initial=0.0))
        slice_int = e @ d.weights
        integral = float(trapezoid(slice_int, s))
    scale = max(1.0, float(np.abs(Le).max(initial=0.0)))
    holds = bool(np.all(margin >= -1e-9 * scale))
    if np.isfinite(alpha):
        denom = A + integral + (B ** (n / 2) * integral) ** alpha
    else:
        denom = A * r**2 + integral / r**n
    ratio = sup_k / denom if denom > 0 else (0.0 if sup_k == 0 else np.inf)
    return {"alpha": float(alpha), "holds": holds, "min_margin": float(margin.min(initial=0.0)),
            "sup_K": sup_k, "integral": integral, "ratio": float(ratio), "n": n, "mu": mu_exp}
