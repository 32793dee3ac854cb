"""Diffusion exposure, fixed-effects regression and the link-dropping Monte Carlo."""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from netdiff import parallel
from netdiff.errors import InputError, NumericError
from netdiff.generators import drop_links
from netdiff.graph import Graph, all_distances, components
from netdiff.ingestion import VillageData

log = logging.getLogger(__name__)

POWER_RTOL = 1e-9
POWER_MAX_ITER = 10_000
# components up to this size iterate on a dense copy (cheaper per product)
DENSE_LIMIT = 2000


def _power_radius(A, n: int) -> float:
    """Top eigenvalue of a connected nonnegative symmetric matrix by shifted power iteration.

    Iterating ``A + I`` avoids the sign oscillation of bipartite graphs.
    """
    if n <= DENSE_LIMIT:
        A = A.toarray()
    x = np.ones(n) / math.sqrt(n)
    lam = 0.0
    for it in range(1, POWER_MAX_ITER + 1):
        y = A @ x + x
        new = float(x @ y)
        y /= math.sqrt(float(y @ y))
        if it > 1 and abs(new - lam) <= POWER_RTOL * abs(new):
            return new - 1.0
        x, lam = y, new
    raise NumericError(f"power iteration did not converge in {POWER_MAX_ITER} iterations")


def spectral_radius(g: Graph) -> float:
    """Largest adjacency eigenvalue: the maximum over connected components of each one's top eigenvalue."""
    if g.n == 0:
        raise InputError("empty graph")
    if g.edge_count == 0:
        return 0.0
    comp = components(g)
    A = g.to_sparse()
    best = 0.0
    for c in np.unique(comp):
        nodes = np.flatnonzero(comp == c)
        if len(nodes) < 2:
            continue
        if len(nodes) == 2:
            best = max(best, 1.0)
            continue
        sub = A[nodes][:, nodes]
        best = max(best, _power_radius(sub, len(nodes)))
    return best


def diameter(g: Graph) -> int:
    """Longest finite shortest-path length (0 for an edgeless graph)."""
    best = 0
    for _, d in all_distances(g):
        fin = d[np.isfinite(d)]
        if fin.size:
            best = max(best, int(fin.max()))
    return best


@dataclass(frozen=True)
class ExposureVector:
    values: np.ndarray
    p_used: float
    T_used: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise NumericError("exposure must be finite and nonnegative")


def diffusion_exposure(g: Graph, seeds, p: float, T: int, radius: float | None = None) -> ExposureVector:
    """Expected number of times each node hears from the seeds in ``T`` rounds of passing.

    Computes ``sum_{t=1..T} (p A)^t s`` with ``T`` sparse products.
    ``radius`` skips recomputing the spectral radius for the stability warning.
    """
    s = np.asarray(seeds, dtype=float)
    if s.shape != (g.n,):
        raise InputError(f"seed vector has shape {s.shape}, graph has {g.n} nodes")
    if T < 1:
        raise InputError(f"T must be at least 1, got {T}")
    if p < 0:
        raise InputError(f"p must be nonnegative, got {p}")
    if g.edge_count and p * (spectral_radius(g) if radius is None else radius) > 1 + 1e-12:
        log.warning("p times the spectral radius exceeds 1; exposure grows with T")
    A = g.to_sparse()
    term = s
    total = np.zeros(g.n)
    for _ in range(T):
        term = p * (A @ term)
        total += term
    return ExposureVector(total, float(p), int(T))


def village_exposure(g: Graph, treated, p: float | None = None, T: int | None = None) -> ExposureVector:
    """Exposure with ``p = 1 / spectral radius`` and ``T = diameter`` unless given."""
    lam = spectral_radius(g)
    if p is None:
        p = 1.0 / lam if lam > 0 else 0.0
    if T is None:
        T = max(diameter(g), 1)
    return diffusion_exposure(g, treated, p, T, radius=lam)


def standardize(v, mask=None) -> np.ndarray:
    """Shift and scale ``v`` so the entries under ``mask`` have mean 0 and sample sd 1."""
    v = np.asarray(v, dtype=float)
    m = np.ones(len(v), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    x = v[m]
    if x.size < 2:
        raise InputError("need at least two observations to standardise")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise NumericError("zero variance, cannot standardise")
    return (v - x.mean()) / sd


@dataclass(frozen=True)
class RegressionResult:
    coefficient: float
    clustered_se: float
    p_value: float
    n_obs: int
    cluster_count: int
    coefficients: tuple[float, ...] = ()
    names: tuple[str, ...] = ()

    @property
    def t_stat(self) -> float:
        return self.coefficient / self.clustered_se

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        z = stats.norm.ppf(0.5 + level / 2)
        return self.coefficient - z * self.clustered_se, self.coefficient + z * self.clustered_se


def _demean(M: np.ndarray, groups: np.ndarray) -> np.ndarray:
    _, inv, counts = np.unique(groups, return_inverse=True, return_counts=True)
    sums = np.zeros((len(counts), M.shape[1]))
    np.add.at(sums, inv, M)
    return M - (sums / counts[:, None])[inv]


def _first_collinear(X: np.ndarray, tol: float = 1e-10) -> int | None:
    scale = np.linalg.norm(X, axis=0)
    for j in range(X.shape[1]):
        if scale[j] <= tol * max(1.0, scale.max()):
            return j
        if j and np.linalg.matrix_rank(X[:, : j + 1] / np.maximum(scale[: j + 1], 1e-300), tol=1e-8) <= j:
            return j
    return None


def ols_fe(y, x_main, controls=None, fe=None, clusters=None, names=None) -> RegressionResult:
    """OLS of ``y`` on ``x_main`` and ``controls`` with absorbed group effects and clustered errors.

    Group effects in ``fe`` are removed by within-group demeaning (without
    ``fe`` an intercept is partialled out instead).  The variance is
    cluster-robust with the ``G/(G-1) * (N-1)/(N-K)`` correction, ``K``
    counting the non-absorbed regressors; p-values use the normal reference.
    """
    y = np.asarray(y, dtype=float)
    N = len(y)
    x = np.asarray(x_main, dtype=float).reshape(N, 1)
    C = np.empty((N, 0)) if controls is None else np.asarray(controls, dtype=float).reshape(N, -1)
    X = np.hstack((x, C))
    names = tuple(names) if names is not None else ("x",) + tuple(f"control{j}" for j in range(C.shape[1]))
    if len(names) != X.shape[1]:
        raise InputError("names must label the main regressor and every control")
    groups = np.zeros(N, dtype=int) if fe is None else np.asarray(fe)
    cl = np.arange(N) if clusters is None else np.asarray(clusters)
    if len(groups) != N or len(cl) != N:
        raise InputError("fe and cluster ids must have one entry per observation")
    K = X.shape[1]
    n_groups = len(np.unique(groups))
    if N <= K + n_groups:
        raise InputError(f"{N} observations cannot identify {K} regressors and {n_groups} groups")
    Z = _demean(np.column_stack((y, X)), groups)
    yd, Xd = Z[:, 0], Z[:, 1:]
    bad = _first_collinear(Xd)
    if bad is not None:
        raise NumericError(f"regressor {names[bad]!r} is collinear with earlier regressors or the fixed effects")
    XtX_inv = np.linalg.inv(Xd.T @ Xd)
    beta = XtX_inv @ (Xd.T @ yd)
    u = yd - Xd @ beta
    _, cinv = np.unique(cl, return_inverse=True)
    G = int(cinv.max()) + 1
    if G < 2:
        raise InputError("need at least two clusters")
    scores = np.zeros((G, K))
    np.add.at(scores, cinv, Xd * u[:, None])
    meat = scores.T @ scores
    corr = G / (G - 1) * (N - 1) / (N - K)
    V = corr * XtX_inv @ meat @ XtX_inv
    se = math.sqrt(max(V[0, 0], 0.0))
    if se > 0:
        pval = float(2 * stats.norm.sf(abs(beta[0]) / se))
    else:
        pval = 0.0 if beta[0] != 0 else 1.0
    return RegressionResult(float(beta[0]), se, pval, N, G, tuple(float(b) for b in beta), names)


# -- pooled village regression ----------------------------------------------------------

@dataclass(frozen=True)
class PeerSpec:
    outcome: str = "takeup"
    controls: tuple[str, ...] = ("female", "age", "education", "rice_area")
    include_degree: bool = True
    hold_p: bool = False  # keep the full-graph p and T on degraded graphs


def _stack(villages, graphs, spec: PeerSpec, params=None):
    """Pooled untreated sample: (y, exposure, controls, village ids, per-village (p, T))."""
    ys, xs, cs, vs, used = [], [], [], [], []
    for k, (v, g) in enumerate(zip(villages, graphs)):
        treated = v.treated
        if params is not None:
            e = village_exposure(g, treated, *params[k])
        else:
            e = village_exposure(g, treated)
        used.append((e.p_used, e.T_used))
        keep = ~treated
        cols = [v.columns[c][keep] for c in spec.controls]
        if spec.include_degree:
            cols.append(g.degrees[keep].astype(float))
        ys.append(v.columns[spec.outcome][keep])
        xs.append(e.values[keep])
        cs.append(np.column_stack(cols) if cols else np.empty((keep.sum(), 0)))
        vs.append(np.full(keep.sum(), k))
    return np.concatenate(ys), np.concatenate(xs), np.vstack(cs), np.concatenate(vs), used


def exposure_regression(villages, graphs=None, spec: PeerSpec = PeerSpec(), params=None):
    """Regress the outcome on standardised exposure, controls and village effects, clustered by village.

    Returns the regression and the per-village ``(p, T)`` used for exposure.
    """
    graphs = [v.graph for v in villages] if graphs is None else graphs
    y, x, C, vid, used = _stack(villages, graphs, spec, params)
    names = ("exposure",) + spec.controls + (("degree",) if spec.include_degree else ())
    res = ols_fe(y, standardize(x), C, fe=vid, clusters=vid, names=names)
    return res, used


def _mc_rep(i, rng, villages, k, spec, full_params):
    degraded = []
    for v in villages:
        dbar = v.graph.degrees.mean()
        degraded.append(drop_links(v.graph, min(1.0, 1.0 / (k * dbar)) if dbar > 0 else 0.0, rng))
    try:
        res, _ = exposure_regression(villages, degraded, spec, full_params if spec.hold_p else None)
    except (NumericError, InputError) as e:
        return None, str(e)
    return (res.coefficient, res.p_value), None


def mc_mismeasurement(villages: list[VillageData], k_values, reps: int, seed: int, threads: int = 1,
                      spec: PeerSpec = PeerSpec()) -> dict:
    """Bias and p-value of the exposure coefficient when links go missing at random.

    For each ``k`` every village loses each link independently with
    probability ``1 / (k * mean degree)``; exposure, standardisation and the
    regression are redone on the degraded graphs.  Bias is
    ``100 * (gamma_degraded - gamma_full) / gamma_full``.
    """
    if not villages:
        raise InputError("no villages")
    for k in k_values:
        if k < 1:
            raise InputError(f"k must be at least 1, got {k}")
    full, full_params = exposure_regression(villages, spec=spec)
    out = {"full": full, "k": {}}
    for j, k in enumerate(k_values):
        fn = functools.partial(_mc_rep, villages=list(villages), k=float(k), spec=spec, full_params=full_params)
        res = parallel.replicate(fn, reps, seed, threads=threads, tag=j)
        rows = [(i, r) for i, (r, err) in enumerate(res) if r is not None]
        failures = [(i, err) for i, (_, err) in enumerate(res) if err is not None]
        for i, err in failures:
            log.warning("k=%g replication %d excluded: %s", k, i, err)
        idx = np.array([i for i, _ in rows], dtype=int)
        gam = np.array([r[0] for _, r in rows])
        pv = np.array([r[1] for _, r in rows])
        bias = 100.0 * (gam - full.coefficient) / full.coefficient
        betas = [1.0 / (k * v.graph.degrees.mean()) for v in villages if v.graph.degrees.mean() > 0]
        out["k"][k] = {
            "rep": idx, "bias_pct": bias, "p_value": pv, "gamma": gam,
            "failed": len(failures), "mean_beta": float(np.mean(betas)),
        }
    return out


def summarize_mc(result: dict, level: float = 0.05) -> list[dict]:
    rows = []
    for k, r in result["k"].items():
        b, p = r["bias_pct"], r["p_value"]
        rows.append({
            "k": k, "mean_beta": r["mean_beta"], "reps": len(b), "failed": r["failed"],
            "bias_mean": float(b.mean()), "bias_sd": float(b.std(ddof=1)) if len(b) > 1 else float("nan"),
            "bias_q05": float(np.quantile(b, 0.05)), "bias_q50": float(np.quantile(b, 0.5)),
            "bias_q95": float(np.quantile(b, 0.95)), "fail_to_reject": float((p >= level).mean()),
        })
    return rows
