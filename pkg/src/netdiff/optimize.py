"""Nelder-Mead over a batch of independent starting points.

Many short fits from a grid of starts are far cheaper when the objective is
evaluated for all simplices at once, so the simplex updates are vectorised
over the batch.  Each batch member follows the standard fixed-coefficient
Nelder-Mead rules exactly as if run alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar


@dataclass
class BatchResult:
    x: np.ndarray  # (B, d) best vertex per start
    fun: np.ndarray  # (B,)
    iterations: np.ndarray  # (B,)
    converged: np.ndarray  # (B,) bool


def nelder_mead_batch(f, x0, lower, upper, step=None, xatol=1e-10, fatol=1e-12,
                      max_iter=2000, stall=100) -> BatchResult:
    """Minimise ``f`` from every row of ``x0`` inside the box ``[lower, upper]``.

    ``f(x, member)`` maps an ``(m, d)`` array of points to ``(m,)`` values;
    ``member`` gives the batch row each point belongs to, so one call can
    serve members with different objectives.  Every trial
    point is projected onto the box before evaluation.  A member stops when
    its simplex spans less than ``xatol`` in every coordinate and its vertex
    values differ by less than ``fatol * max(1, |best|)``, or when its best
    value has not improved for ``stall`` iterations (reported as not
    converged).  Stopped members are frozen.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    B, d = x0.shape
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (d,))
    if step is None:
        step = 0.05 * (hi - lo)
    step = np.broadcast_to(np.asarray(step, dtype=float), (d,))

    def proj(x):
        return np.clip(x, lo, hi)

    rows = np.arange(B)
    sim = np.repeat(proj(x0)[:, None, :], d + 1, axis=1)
    for k in range(d):
        v = sim[:, k + 1, k] + step[k]
        # step inward when the start sits on the upper face
        v = np.where(v > hi[k], sim[:, k + 1, k] - step[k], v)
        sim[:, k + 1, k] = v
    sim = proj(sim)
    fs = f(sim.reshape(-1, d), np.repeat(rows, d + 1)).reshape(B, d + 1)

    active = np.ones(B, dtype=bool)
    converged = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    record = np.full(B, np.inf)
    since = np.zeros(B, dtype=int)
    for _ in range(max_iter):
        # only live members are touched; frozen ones keep their simplex
        a = np.flatnonzero(active)
        if a.size == 0:
            break
        loc = np.arange(a.size)
        order = np.argsort(fs[a], axis=1, kind="stable")
        S = sim[a][loc[:, None], order]
        F = fs[a][loc[:, None], order]
        spread_x = np.abs(S[:, 1:] - S[:, :1]).max(axis=(1, 2))
        spread_f = np.abs(F[:, 1:] - F[:, :1]).max(axis=1)
        done = (spread_x <= xatol) & (spread_f <= fatol * np.maximum(1.0, np.abs(F[:, 0])))
        converged[a] = done
        better = F[:, 0] < record[a]
        record[a] = np.where(better, F[:, 0], record[a])
        since[a] = np.where(better, 0, since[a] + 1)
        live = ~done & (since[a] < stall)
        sim[a], fs[a] = S, F
        active[a] = live
        a, S, F = a[live], S[live], F[live]
        if a.size == 0:
            break
        iters[a] += 1

        best, worst, second = F[:, 0], F[:, -1], F[:, -2]
        c = S[:, :-1].mean(axis=1)
        xw = S[:, -1]
        xr = proj(c + (c - xw))
        xe = proj(c + 2.0 * (c - xw))
        xoc = proj(c + 0.5 * (c - xw))
        xic = proj(c - 0.5 * (c - xw))
        fr, fe, foc, fic = (f(p, a) for p in (xr, xe, xoc, xic))

        new_x = xw.copy()
        new_f = worst.copy()

        expand = fr < best
        use_e = expand & (fe < fr)
        use_r = (expand & ~use_e) | ((fr >= best) & (fr < second))
        outside = (fr >= second) & (fr < worst)
        inside = fr >= worst
        take_oc = outside & (foc <= fr)
        take_ic = inside & (fic < worst)
        shrink = (outside & ~take_oc) | (inside & ~take_ic)

        for mask, px, pf in ((use_e, xe, fe), (use_r, xr, fr), (take_oc, xoc, foc), (take_ic, xic, fic)):
            new_x[mask] = px[mask]
            new_f[mask] = pf[mask]

        upd = ~shrink
        S[upd, -1] = new_x[upd]
        F[upd, -1] = new_f[upd]
        if shrink.any():
            pts = proj(S[shrink, :1] + 0.5 * (S[shrink, 1:] - S[shrink, :1]))
            S[shrink, 1:] = pts
            F[shrink, 1:] = f(pts.reshape(-1, d), np.repeat(a[shrink], d)).reshape(-1, d)
        sim[a], fs[a] = S, F

    k = np.argmin(fs, axis=1)
    return BatchResult(sim[rows, k], fs[rows, k], iters, converged)


def golden_section(f, lo: float, hi: float, tol: float = 1e-3) -> float:
    """Bounded scalar minimiser on ``[lo, hi]`` to absolute tolerance ``tol``."""
    if hi <= lo:
        return float(lo)
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(res.x)
