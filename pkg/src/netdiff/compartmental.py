"""Discrete-time compartmental SIR model and its moment-matching fit to network diffusions."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from netdiff import parallel
from netdiff.diffusion import DiffusionTrace, Mode, run_diffusion, sample_percolation
from netdiff.errors import FitError, InputError
from netdiff.generators import ErrorGraphSpec, generate_error_graph
from netdiff.graph import Graph, union
from netdiff.optimize import nelder_mead_batch

log = logging.getLogger(__name__)

S_BOUNDS = (0.0, 5.0)
R_BOUNDS = (1e-6, 1.0)
GRID_SIZE = 11


@dataclass(frozen=True)
class SirParams:
    s: float
    r: float

    def __post_init__(self):
        if not np.isfinite(self.s) or self.s < 0:
            raise InputError(f"transmission parameter must be finite and nonnegative, got {self.s}")
        if not 0.0 <= self.r <= 1.0:
            raise InputError(f"removal rate must lie in [0, 1], got {self.r}")


def r0_from_params(params: SirParams) -> float:
    if params.r <= 0:
        raise InputError("R0 is undefined for a zero removal rate")
    return params.s / params.r


@dataclass
class SirTrajectory:
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    n: float
    clamped: bool = False

    @property
    def ever(self) -> np.ndarray:
        return self.I + self.R


def _simulate(s, r, n, I0, T):
    """Vectorised recursion over parameter arrays ``s`` and ``r``; returns (S, I, R, clamped)."""
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    shape = (T + 1,) + s.shape
    S, I, R = np.empty(shape), np.empty(shape), np.empty(shape)
    S[0], I[0], R[0] = n - I0, I0, 0.0
    clamped = np.zeros(s.shape, dtype=bool)
    for t in range(1, T + 1):
        new = s / n * S[t - 1] * I[t - 1]
        gone = r * I[t - 1]
        St = S[t - 1] - new
        It = I[t - 1] + new - gone
        Rt = R[t - 1] + gone
        bad = (St < 0) | (St > n) | (It < 0) | (It > n) | (Rt > n)
        if bad.any():
            clamped |= bad
            St, It, Rt = np.clip(St, 0, n), np.clip(It, 0, n), np.clip(Rt, 0, n)
        S[t], I[t], R[t] = St, It, Rt
    return S, I, R, clamped


def simulate_sir(params: SirParams, n: float, I0: float, T: int) -> SirTrajectory:
    """Step the discrete SIR recursion ``T`` times from ``(n - I0, I0, 0)``.

    Values leaving ``[0, n]`` are clamped back and the trajectory is flagged.
    """
    if not 0 < I0 <= n:
        raise InputError(f"need 0 < I0 <= n, got I0={I0}, n={n}")
    if T < 0:
        raise InputError(f"T must be nonnegative, got {T}")
    S, I, R, clamped = _simulate(params.s, params.r, float(n), float(I0), T)
    if clamped:
        log.warning("SIR trajectory clamped to [0, n] for s=%g r=%g", params.s, params.r)
    return SirTrajectory(S, I, R, float(n), bool(clamped))


def trace_to_ir(trace: DiffusionTrace) -> tuple[np.ndarray, np.ndarray]:
    """Observed compartments of a network run.

    A node is infected only in the step it is activated and removed afterwards,
    so ``I(t)`` is the count activated at ``t`` and ``R(t)`` the count
    activated before ``t``.
    """
    I = trace.new_by_step.astype(float)
    R = np.concatenate(([0.0], np.cumsum(I)[:-1]))
    return I, R


def _objective(s, r, I_obs, R_obs, n, I0, T_fit):
    """Mean squared moment gap over steps ``1..T_fit`` for each column of observed data."""
    S, I, R, clamped = _simulate(s, r, n, I0, T_fit)
    gi = I_obs[1 : T_fit + 1] - I[1:]
    gr = R_obs[1 : T_fit + 1] - R[1:]
    return ((gi**2 + gr**2).sum(axis=0)) / T_fit, clamped


@dataclass
class FitResult:
    params: SirParams
    objective: float
    r0: float
    start_objective_min: float
    clamped: bool
    converged: bool
    n: float
    I0: float
    T_fit: int
    rmse_in: float = float("nan")
    rmse_out: float = float("nan")
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"s": self.params.s, "r": self.params.r, "r0": self.r0, "objective": self.objective,
                "clamped": self.clamped, "converged": self.converged, "n": self.n, "I0": self.I0,
                "T_fit": self.T_fit, "rmse_in": self.rmse_in, "rmse_out": self.rmse_out, **self.extra}


def _start_grid():
    s = np.linspace(*S_BOUNDS, GRID_SIZE)
    r = np.linspace(0.0, R_BOUNDS[1], GRID_SIZE)
    r[0] = 0.01
    ss, rr = np.meshgrid(s, r, indexing="ij")
    return np.column_stack((ss.ravel(), rr.ravel()))


def fit_many(series, n: float, I0: float, T_fit: int, xatol: float = 1e-10, fatol: float = 1e-14) -> list[FitResult]:
    """Fit ``(s, r)`` separately to each observed ``(I, R)`` pair in ``series``.

    Every fit starts Nelder-Mead from all points of an 11 x 11 grid over the
    parameter box and keeps the best end point.  All fits and starts advance
    together in one batch.
    """
    if T_fit < 2:
        raise InputError(f"T_fit must be at least 2, got {T_fit}")
    series = list(series)
    if not series:
        return []
    I_obs = np.column_stack([np.asarray(I, dtype=float)[: T_fit + 1] for I, _ in series])
    R_obs = np.column_stack([np.asarray(R, dtype=float)[: T_fit + 1] for _, R in series])
    if I_obs.shape[0] < T_fit + 1:
        raise InputError(f"observed series shorter than T_fit + 1 = {T_fit + 1}")
    for k in range(I_obs.shape[1]):
        if not (I_obs[1:, k].any() or R_obs[1:, k].any()):
            raise FitError(f"observed series {k} is all zeros in the fit window")
    grid = _start_grid()
    G, K = len(grid), I_obs.shape[1]
    # batch member b fits series b // G from start b % G
    owner = np.repeat(np.arange(K), G)

    def f(x, member):
        k = owner[member]
        return _objective(x[:, 0], x[:, 1], I_obs[:, k], R_obs[:, k], n, I0, T_fit)[0]

    starts = np.tile(grid, (K, 1))
    start_vals = f(starts, np.arange(len(starts))).reshape(K, G)
    res = nelder_mead_batch(f, starts, (S_BOUNDS[0], R_BOUNDS[0]), (S_BOUNDS[1], R_BOUNDS[1]),
                            xatol=xatol, fatol=fatol)
    fun = res.fun.reshape(K, G)
    best = np.argmin(fun, axis=1)
    out = []
    for k in range(K):
        b = k * G + best[k]
        s_hat, r_hat = res.x[b]
        obj, clamped = _objective(np.array([s_hat]), np.array([r_hat]), I_obs[:, [k]], R_obs[:, [k]], n, I0, T_fit)
        if clamped[0]:
            raise FitError(f"fit {k} ends at a clamped trajectory (s={s_hat:g}, r={r_hat:g})")
        p = SirParams(float(s_hat), float(r_hat))
        out.append(FitResult(p, float(obj[0]), r0_from_params(p), float(start_vals[k].min()),
                             False, bool(res.converged[b]), float(n), float(I0), T_fit))
    return out


def fit_gmm(I_obs, R_obs, n: float, I0: float, T_fit: int) -> tuple[SirParams, float]:
    """Best ``(s, r)`` matching observed infected and removed counts on steps ``1..T_fit``."""
    fit = fit_many([(I_obs, R_obs)], n, I0, T_fit)[0]
    return fit.params, fit.objective


def rmse(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def forecast_errors(fit: FitResult, ever_obs: np.ndarray, horizon: int) -> tuple[float, float]:
    """In-sample and out-of-sample RMSE of the ever-activated count.

    In-sample covers steps ``1..T_fit``; out-of-sample the next ``horizon`` steps.
    """
    T_fit = fit.T_fit
    traj = _simulate(fit.params.s, fit.params.r, fit.n, fit.I0, T_fit + horizon)
    ever_mod = traj[1] + traj[2]
    ins = rmse(ever_obs[1 : T_fit + 1], ever_mod[1 : T_fit + 1])
    outs = rmse(ever_obs[T_fit + 1 : T_fit + horizon + 1], ever_mod[T_fit + 1 :])
    return ins, outs


def _network_rep(i, rng, L, beta, i0, p, T, mode):
    if beta > 0:
        g = union(L, generate_error_graph(L.n, ErrorGraphSpec(beta), rng=rng))
    else:
        g = L
    return run_diffusion(sample_percolation(g, p, mode, rng), [i0], T).new_by_step


def network_sir_fits(L: Graph, beta: float, i0: int, p: float, T: int, reps: int, seed: int,
                     threads: int = 1, mode=Mode.UNDIRECTED, I0: float = 1.0) -> dict:
    """Fit the compartmental model to each of ``reps`` network diffusions and average.

    Runs use ``L`` alone when ``beta == 0`` and ``L`` plus a fresh error graph
    otherwise.  The fit window is ``T // 4`` steps and forecasts are scored
    over the following ``T // 4`` steps.
    """
    T_fit = T // 4
    fn = functools.partial(_network_rep, L=L, beta=beta, i0=int(i0), p=p, T=T, mode=Mode(mode))
    new = np.vstack(parallel.replicate(fn, reps, seed, threads=threads)).astype(float)
    series = []
    for row in new:
        R = np.concatenate(([0.0], np.cumsum(row)[:-1]))
        series.append((row, R))
    fits = fit_many(series, L.n, I0, T_fit)
    r0 = np.array([f.r0 for f in fits])
    ins, outs = [], []
    for f, row in zip(fits, new):
        a, b = forecast_errors(f, np.cumsum(row), T_fit)
        f.rmse_in, f.rmse_out = a, b
        ins.append(a)
        outs.append(b)
    return {
        "r0_hat": float(r0.mean()),
        "r0_hat_se": float(r0.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan"),
        "rmse_in": float(np.mean(ins)),
        "rmse_out": float(np.mean(outs)),
        "T": T, "T_fit": T_fit, "reps": reps, "beta": beta, "p": p, "I0": I0, "n": L.n,
        "seed": int(seed), "converged_share": float(np.mean([f.converged for f in fits])),
        "fits": fits,
    }
