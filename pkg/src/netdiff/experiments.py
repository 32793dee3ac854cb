"""Monte Carlo experiment drivers.

Every replicated experiment takes a master ``seed`` and a ``threads`` count.
Replication ``i`` draws from its own stream (see :mod:`netdiff.parallel`), so
results do not depend on how replications are spread over workers.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from netdiff import parallel
from netdiff.diffusion import (
    DecaySpec,
    DiffusionTrace,
    Mode,
    Percolation,
    activation_thresholds,
    attribute_regions,
    count_jumps,
    jaccard_curve,
    run_diffusion,
    sample_percolation,
    spread_with_uniforms,
)
from netdiff.errors import EstimationError, ExperimentError, InputError, PerturbationError
from netdiff.generators import (
    ErrorGraphSpec,
    LatentPositions,
    admissible_pairs,
    generate_error_graph,
)
from netdiff.graph import Graph, bfs_levels, difference, union
from netdiff.ingestion import VillageData
from netdiff.optimize import golden_section


@dataclass
class CurveResult:
    """Per-step Monte Carlo mean with its standard error.

    ``extra`` holds additional named per-step columns written after
    ``t,mean,stderr``; ``metadata`` is emitted as JSON alongside the table.
    """

    mean: np.ndarray
    stderr: np.ndarray
    reps: int
    metadata: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps <= 0:
            raise InputError("a curve needs at least one replication")

    @property
    def T(self) -> int:
        return len(self.mean) - 1

    def argmin(self) -> int:
        return int(np.nanargmin(self.mean))

    def write(self, out_dir, name: str) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        table = out_dir / f"{name}.csv"
        cols = ["t", "mean", "stderr", *self.extra]
        with table.open("w") as fh:
            fh.write(",".join(cols) + "\n")
            for t in range(len(self.mean)):
                vals = [self.mean[t], self.stderr[t], *(self.extra[k][t] for k in self.extra)]
                fh.write(f"{t}," + ",".join(_fmt(v) for v in vals) + "\n")
        meta = out_dir / f"{name}.json"
        meta.write_text(json.dumps({"reps": self.reps, **self.metadata}, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return table, meta


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _mean_se(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column means and standard errors ignoring NaN; also the per-column NaN count."""
    valid = ~np.isnan(rows)
    k = valid.sum(axis=0)
    s = np.where(valid, rows, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = s.sum(axis=0) / k
        dev = np.where(valid, rows - mean, 0.0)
        var = (dev**2).sum(axis=0) / (k - 1)
        se = np.sqrt(var / k)
    mean = np.where(k > 0, mean, np.nan)
    se = np.where(k > 1, se, np.nan)
    return mean, se, len(rows) - k


def _base_meta(seed, **cfg) -> dict:
    return {"seed": int(seed), "rng": parallel.RNG_NAME, **cfg}


# -- sensitive dependence on the seed -------------------------------------------------

@dataclass(frozen=True)
class SeedPerturbation:
    i0: int
    j0: int
    e1: int
    e2: int
    d_e2: int
    neighborhood_share: float
    J_share: float
    J: tuple[int, ...] = ()

    def __post_init__(self):
        if self.j0 == self.i0:
            raise InputError("perturbed seed must differ from i0")


def build_perturbation(L: Graph, E: Graph, i0: int, rng) -> SeedPerturbation:
    """Alternative seed just beyond the second-nearest error-link endpoint.

    ``e1``/``e2`` are the nearest and second-nearest nodes to ``i0`` (hops in
    ``L`` union ``E``, ties by index) that carry an error link.  Candidate
    seeds are the nodes at distance ``d(e2) + 1`` from ``i0``; one is drawn
    uniformly.
    """
    if E.edge_count == 0:
        raise PerturbationError("error graph has no links")
    G = union(L, E)
    dist = bfs_levels(G.indptr, G.indices, [i0])
    ends = np.flatnonzero(E.degrees > 0)
    ends = ends[dist[ends] >= 0]
    if len(ends) < 2:
        raise PerturbationError("fewer than two error-link endpoints reachable from i0")
    order = np.lexsort((ends, dist[ends]))
    e1, e2 = int(ends[order[0]]), int(ends[order[1]])
    d2 = int(dist[e2])
    J = np.flatnonzero(dist == d2 + 1)
    if len(J) == 0:
        raise PerturbationError(f"no nodes at distance {d2 + 1} from i0")
    hood = int(((dist >= 0) & (dist <= d2 + 1)).sum())
    j0 = int(J[rng.integers(len(J))])
    return SeedPerturbation(
        i0=int(i0), j0=j0, e1=e1, e2=e2, d_e2=d2,
        neighborhood_share=hood / L.n, J_share=len(J) / hood, J=tuple(J.tolist()),
    )


def _sens_rep(i, rng, G, i0, j0, p, T, mode):
    perc = sample_percolation(G, p, mode, rng)
    a = run_diffusion(perc, [i0], T)
    b = run_diffusion(perc, [j0], T)
    return jaccard_curve(a, b, T)


def sensitive_dependence_curve(L: Graph, E: Graph, i0: int, j0: int, p: float, T: int, reps: int,
                               seed: int, threads: int = 1, mode=Mode.UNDIRECTED,
                               tag: int = parallel.STREAM_REPLICATION) -> CurveResult:
    """Mean Jaccard overlap between runs seeded at ``i0`` and ``j0`` on a shared percolation.

    Replications where both ever-activated sets are empty at a step have an
    undefined overlap there; they are left out of that step's mean and the
    number dropped is reported in ``metadata['dropped']``.
    """
    G = union(L, E)
    fn = functools.partial(_sens_rep, G=G, i0=int(i0), j0=int(j0), p=p, T=T, mode=Mode(mode))
    rows = np.vstack(parallel.replicate(fn, reps, seed, threads=threads, tag=tag))
    mean, se, dropped = _mean_se(rows)
    meta = _base_meta(seed, experiment="sens-dep", i0=int(i0), j0=int(j0), p=p, T=T,
                      mode=Mode(mode).value, error_links=E.edge_count, dropped=dropped.tolist())
    return CurveResult(mean, se, reps, meta)


# replication streams of draw k use tag DRAW_TAG_BASE + k
DRAW_TAG_BASE = 100


def lattice_center(positions: LatentPositions) -> int:
    """Node closest to the centre of the unit cube (ties to the lowest index)."""
    d = ((positions.coords - 0.5) ** 2).sum(axis=1)
    return int(np.argmin(d))


def sensitive_dependence_over_draws(L: Graph, beta: float, i0: int, p: float, T: int, draws: int,
                                    reps: int, seed: int, threads: int = 1,
                                    mode=Mode.UNDIRECTED) -> tuple[CurveResult, list[SeedPerturbation]]:
    """Jaccard curve averaged over independent (error graph, alternative seed) draws."""
    spec = ErrorGraphSpec(beta)
    curves, perts = [], []
    for k in range(draws):
        rng = parallel.stream(seed, parallel.STREAM_ERROR_GRAPH, k)
        E = generate_error_graph(L.n, spec, rng=rng)
        pert = build_perturbation(L, E, i0, rng)
        perts.append(pert)
        c = sensitive_dependence_curve(L, E, i0, pert.j0, p, T, reps, seed, threads, mode, tag=DRAW_TAG_BASE + k)
        curves.append(c)
    rows = np.vstack([c.mean for c in curves])
    mean, se, _ = _mean_se(rows)
    meta = _base_meta(seed, experiment="sens-dep-draws", i0=int(i0), beta=beta, p=p, T=T, draws=draws,
                      reps_per_draw=reps, mode=Mode(mode).value,
                      j0=[q.j0 for q in perts], d_e2=[q.d_e2 for q in perts],
                      neighborhood_share=[q.neighborhood_share for q in perts],
                      J_share=[q.J_share for q in perts])
    return CurveResult(mean, se, draws * reps, meta), perts


# -- forecast ratio --------------------------------------------------------------------

def _ratio_rep(i, rng, L, spec, admissible, i0, p, decay, T, mode):
    E = generate_error_graph(L.n, spec, rng=rng, admissible=admissible)
    G = union(L, E)
    if decay is None:
        perc = sample_percolation(G, p, mode, rng)
        yg = run_diffusion(perc, [i0], T).ever_counts()
        yl = run_diffusion(perc.restrict(L), [i0], T).ever_counts()
    else:
        size = G.edge_count if mode is Mode.UNDIRECTED else 2 * G.edge_count
        u = rng.random(size)
        yg = spread_with_uniforms(G, [i0], T, decay, u, mode).ever_counts()
        if mode is Mode.UNDIRECTED:
            ul = u[G.edge_ids(L.edges)]
        else:
            ul = u[np.searchsorted(G.entry_keys(), L.entry_keys())]
        yl = spread_with_uniforms(L, [i0], T, decay, ul, mode).ever_counts()
    return np.concatenate((yl, yg)).astype(float), E.edge_count


def forecast_ratio_curve(L: Graph, beta: float, i0: int, p: float | DecaySpec, T: int, reps: int,
                         seed: int, threads: int = 1, delta: float = 1.0, support_rule="all-pairs",
                         positions: LatentPositions | None = None, mode=Mode.UNDIRECTED) -> CurveResult:
    """Ratio of mean ever-activated counts on ``L`` and on ``L`` plus a fresh error graph.

    Each replication redraws the error graph and one percolation of ``G``;
    the run on ``L`` uses that percolation restricted to ``L`` (common random
    numbers), so ``beta = 0`` gives a ratio of exactly one.  The curve is a
    ratio of means; its standard error comes from the delta method.
    """
    if beta < 0:
        raise InputError(f"beta must be nonnegative, got {beta}")
    mode = Mode(mode)
    spec = ErrorGraphSpec(beta, delta, support_rule if delta < 1 else "all-pairs")
    adm = admissible_pairs(L.n, spec, base=L, positions=positions) if beta > 0 else None
    decay = p if isinstance(p, DecaySpec) else None
    pp = None if decay else float(p)
    fn = functools.partial(_ratio_rep, L=L, spec=spec, admissible=adm, i0=int(i0), p=pp,
                           decay=decay, T=T, mode=mode)
    out = parallel.replicate(fn, reps, seed, threads=threads)
    rows = np.vstack([o[0] for o in out])
    links = np.array([o[1] for o in out])
    yl, yg = rows[:, : T + 1], rows[:, T + 1 :]
    ml, mg = yl.mean(axis=0), yg.mean(axis=0)
    ratio = ml / mg
    if reps > 1:
        vl, vg = yl.var(axis=0, ddof=1), yg.var(axis=0, ddof=1)
        cov = ((yl - ml) * (yg - mg)).sum(axis=0) / (reps - 1)
        var = (vl / mg**2 - 2 * ml * cov / mg**3 + ml**2 * vg / mg**4) / reps
        se = np.sqrt(np.maximum(var, 0.0))
    else:
        se = np.full(T + 1, np.nan)
    meta = _base_meta(seed, experiment="forecast-ratio", beta=beta, delta=delta, i0=int(i0), T=T,
                      mode=mode.value, mean_error_links=float(links.mean()),
                      p=pp, decay=None if decay is None else {"p0": decay.p0, "lambda": decay.lam})
    return CurveResult(ratio, se, reps, meta, extra={"mean_L": ml, "mean_G": mg})


# -- estimators ------------------------------------------------------------------------

def p_hat_counts(trace: DiffusionTrace, L: Graph) -> tuple[int, int]:
    """Numerator and denominator of the single-exposure passing-probability estimator.

    A node-step qualifies when the node is still susceptible after ``t - 1``
    and exactly one of its ``L``-neighbours was activated at ``t - 1``; it
    counts in the numerator when the node is activated at ``t``.
    """
    if trace.n != L.n:
        raise InputError("trace and graph disagree on node count")
    act = trace.activation_time
    A = L.to_sparse()
    num = den = 0
    for t in range(1, trace.T + 1):
        fresh = (act == t - 1).astype(float)
        if not fresh.any():
            break
        exposed = A @ fresh
        susceptible = (act < 0) | (act >= t)
        q = susceptible & (exposed == 1)
        den += int(q.sum())
        num += int((q & (act == t)).sum())
    return num, den


def estimate_p(traces, L: Graph) -> float:
    """Pooled single-exposure estimate of the passing probability."""
    if isinstance(traces, DiffusionTrace):
        traces = [traces]
    num = den = 0
    for tr in traces:
        a, b = p_hat_counts(tr, L)
        num += a
        den += b
    if den == 0:
        raise EstimationError("no node-step with exactly one newly activated neighbour")
    return num / den


def estimate_r0(p_hat: float, mean_degree: float) -> float:
    if not (np.isfinite(p_hat) and np.isfinite(mean_degree)) or p_hat < 0 or mean_degree < 0:
        raise InputError("p_hat and mean degree must be finite and nonnegative")
    return p_hat * mean_degree


# batch b of estimate_p_experiment draws from tag BATCH_TAG_BASE + b
BATCH_TAG_BASE = 1000


def _p_rep(i, rng, L, p, T, mode):
    i0 = int(rng.integers(L.n))
    tr = run_diffusion(sample_percolation(L, p, mode, rng), [i0], T)
    return p_hat_counts(tr, L)


def estimate_p_experiment(L: Graph, p: float, T: int, seed: int, min_qualifying: int = 10_000,
                          batch: int = 50, max_reps: int = 100_000, threads: int = 1,
                          mode=Mode.UNDIRECTED) -> dict:
    """Simulate diffusions on ``L`` from uniform seeds until enough qualifying node-steps accrue."""
    num = den = reps = 0
    while den < min_qualifying:
        if reps >= max_reps:
            raise EstimationError(f"only {den} qualifying node-steps after {reps} runs")
        fn = functools.partial(_p_rep, L=L, p=p, T=T, mode=Mode(mode))
        out = parallel.replicate(fn, batch, seed, threads=threads, tag=BATCH_TAG_BASE + reps // batch)
        for a, b in out:
            num += a
            den += b
        reps += batch
    p_hat = num / den
    d = float(L.degrees.mean())
    return {"p_hat": p_hat, "numerator": num, "qualifying": den, "runs": reps,
            "mean_degree": d, "r0_hat": estimate_r0(p_hat, d), "p_true": p}


# -- sampling to find error links --------------------------------------------------------

def _beta_rep(i, rng, n, beta, m):
    E = generate_error_graph(n, ErrorGraphSpec(beta), rng=rng)
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.choice(n, size=m, replace=False)] = True
    if E.edge_count == 0:
        return 0
    return int((chosen[E.edges[:, 0]] & chosen[E.edges[:, 1]]).sum())


def beta_sampling_experiment(n: int, beta: float, m: int, reps: int, seed: int, threads: int = 1) -> dict:
    """Survey ``m`` random nodes out of ``n`` and count error links among them.

    Each replication draws a full error graph on ``n`` nodes, samples ``m``
    nodes without replacement and counts the error links with both endpoints
    in the sample.  Reports the share of surveys that find no link, the
    implied ``beta_hat = count / C(m, 2)`` and the closed form
    ``(1 - beta) ** C(m, 2)``.
    """
    if m < 2:
        raise InputError(f"need at least two sampled nodes, got m={m}")
    if m > n:
        raise InputError(f"cannot sample m={m} of n={n} nodes")
    pairs = m * (m - 1) // 2
    fn = functools.partial(_beta_rep, n=n, beta=beta, m=m)
    counts = np.array(parallel.replicate(fn, reps, seed, threads=threads))
    p_none = float((counts == 0).mean())
    analytic = float(np.exp(pairs * np.log1p(-beta))) if beta < 1 else float(pairs == 0)
    beta_hat = counts / pairs
    return {
        "n": n, "beta": beta, "m": m, "reps": reps, "pairs": pairs,
        "p_no_links": p_none,
        "p_no_links_se": math.sqrt(max(analytic * (1 - analytic), 0.0) / reps),
        "p_no_links_analytic": analytic,
        "beta_hat_mean": float(beta_hat.mean()),
        "beta_hat_sd": float(beta_hat.std(ddof=1)) if reps > 1 else 0.0,
        "beta_hat_quantiles": np.quantile(beta_hat, [0.05, 0.5, 0.95]).tolist(),
        "counts": counts,
    }


def p_no_links(beta: float, m: int) -> float:
    """Closed-form probability that none of the ``C(m, 2)`` surveyed pairs is an error link."""
    return float(np.exp((m * (m - 1) // 2) * np.log1p(-beta)))


# -- detection by widespread testing -------------------------------------------------------

def _region_detection(region: np.ndarray, act: np.ndarray, T: int, alpha: float, flags=None):
    """Per-step true and detected region counts for one trace.

    With ``flags`` the detected count uses those realised test outcomes;
    without, it is the exact expectation over test outcomes,
    ``sum_regions 1 - (1 - alpha) ** size_t``.
    """
    live = region >= 0
    nreg = int(region.max()) + 1 if live.any() else 0
    true = np.zeros(T + 1)
    found = np.zeros(T + 1)
    if nreg == 0:
        return true, found
    r, a = region[live], act[live]
    start = np.full(nreg, T + 1)
    np.minimum.at(start, r, a)
    true = np.cumsum(np.bincount(start, minlength=T + 2)[: T + 1]).astype(float)
    if flags is not None:
        f = flags[live]
        first_seen = np.full(nreg, T + 1)
        np.minimum.at(first_seen, r[f], a[f])
        found = np.cumsum(np.bincount(first_seen, minlength=T + 2)[: T + 1]).astype(float)
        return true, found
    # region sizes through t, accumulated step by step
    size = np.zeros((T + 1, nreg))
    np.add.at(size, (a, r), 1.0)
    size = np.cumsum(size, axis=0)
    found = (1.0 - (1.0 - alpha) ** size).sum(axis=1)
    return true, found


def detection_experiment(trace: DiffusionTrace, perc: Percolation, L: Graph, E: Graph, alpha: float,
                         reps: int, seed: int) -> dict:
    """Share of activated catchment regions found by i.i.d. testing of activated nodes.

    Regions come from :func:`netdiff.diffusion.attribute_regions`.  Each
    replication flags every activated node independently with probability
    ``alpha``; the ratio is of Monte Carlo means.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")
    region = attribute_regions(trace, L, E, perc)
    act = trace.activation_time
    true, _ = _region_detection(region, act, trace.T, alpha)
    found = np.zeros(trace.T + 1)
    for i in range(reps):
        flags = parallel.stream(seed, parallel.STREAM_REPLICATION, i).random(trace.n) < alpha
        found += _region_detection(region, act, trace.T, alpha, flags)[1]
    found /= reps
    exact = _region_detection(region, act, trace.T, alpha)[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        return {"K_true": true, "K_detected": found, "ratio": found / true,
                "ratio_exact": exact / true}


def _detect_rep(i, rng, L, spec, i0, p, T, alphas, mode):
    E = generate_error_graph(L.n, spec, rng=rng)
    G = union(L, E)
    perc = sample_percolation(G, p, mode, rng)
    tr = run_diffusion(perc, [i0], T)
    region = attribute_regions(tr, L, difference(E, L), perc)
    rows = []
    true = None
    for a in alphas:
        true, found = _region_detection(region, tr.activation_time, T, a)
        rows.append(found)
    return np.vstack([true, *rows])


def detection_curve(L: Graph, beta: float, i0: int, p: float, T: int, alphas, reps: int, seed: int,
                    threads: int = 1, mode=Mode.UNDIRECTED) -> dict:
    """Detected-to-true region ratio per step, averaged over error graphs and diffusions.

    Test outcomes are integrated out exactly, so the only Monte Carlo noise is
    from the error graph and the percolation.
    """
    alphas = [float(a) for a in alphas]
    spec = ErrorGraphSpec(beta)
    fn = functools.partial(_detect_rep, L=L, spec=spec, i0=int(i0), p=p, T=T, alphas=alphas, mode=Mode(mode))
    stack = np.stack(parallel.replicate(fn, reps, seed, threads=threads))
    true = stack[:, 0].mean(axis=0)
    out = {"K_true": true, "alphas": alphas}
    for k, a in enumerate(alphas):
        found = stack[:, k + 1].mean(axis=0)
        out[a] = {"K_detected": found, "ratio": found / true}
    return out


def _jump_rep(i, rng, L, spec, i0, p, T, mode):
    E = generate_error_graph(L.n, spec, rng=rng)
    G = union(L, E)
    perc = sample_percolation(G, p, mode, rng)
    tr = run_diffusion(perc, [i0], T)
    return count_jumps(tr, L, difference(E, L), perc).astype(float)


def jump_curve(L: Graph, beta: float, i0: int, p: float, T: int, reps: int, seed: int,
               threads: int = 1, mode=Mode.UNDIRECTED) -> CurveResult:
    """Mean number of catchment regions opened through error links at each step."""
    fn = functools.partial(_jump_rep, L=L, spec=ErrorGraphSpec(beta), i0=int(i0), p=p, T=T, mode=Mode(mode))
    rows = np.vstack(parallel.replicate(fn, reps, seed, threads=threads))
    mean, se, _ = _mean_se(rows)
    meta = _base_meta(seed, experiment="count-jumps", i0=int(i0), beta=beta, p=p, T=T, mode=Mode(mode).value)
    return CurveResult(mean, se, reps, meta)


# -- method of simulated moments for p ------------------------------------------------------

def _msm_thresholds(i, rng, villages, T):
    return [activation_thresholds(v.graph, v.seeds, T, rng.random(v.graph.edge_count)) for v in villages]


class MSMObjective:
    """Squared mean moment ``(mean_v (C_v - mean_s C_v^s(p)))**2`` under common random numbers.

    Replication ``s`` fixes one uniform per link in every village; at ``p`` a
    link passes iff its uniform is below ``p``.  Each replication is reduced
    to per-node activation thresholds (see
    :func:`netdiff.diffusion.activation_thresholds`), after which the
    simulated count at any ``p`` is a sorted search.
    """

    def __init__(self, villages: list[VillageData], T: int, reps: int, seed: int, threads: int = 1):
        if not villages:
            raise InputError("need at least one village")
        for v in villages:
            if v.observed_count is None:
                raise InputError(f"village {v.name!r} has no observed count")
            if v.observed_count < len(v.seeds):
                raise InputError("observed count below the number of seeds")
        self.villages = list(villages)
        fn = functools.partial(_msm_thresholds, villages=self.villages, T=T)
        per_rep = parallel.replicate(fn, reps, seed, threads=threads)
        # summing counts over replications is one search in the pooled thresholds
        self.thresholds = [np.sort(np.concatenate([rep[k] for rep in per_rep])) for k in range(len(self.villages))]
        self.observed = np.array([v.observed_count for v in self.villages], dtype=float)
        self.reps = reps

    def simulated(self, p: float) -> np.ndarray:
        counts = [np.searchsorted(thr, p, side="left") for thr in self.thresholds]
        return np.array(counts, dtype=float) / self.reps

    def moment(self, p: float) -> float:
        return float(np.mean(self.observed - self.simulated(p)))

    def __call__(self, p: float) -> float:
        return self.moment(p) ** 2


def msm_fit_p(villages, T: int, reps: int, seed: int, grid=None, threads: int = 1, tol: float = 1e-3) -> dict:
    """Passing probability by the method of simulated moments.

    Grid search over ``grid`` (default ``0, 0.01, ..., 1``) followed by a
    golden-section search over the two grid cells around the best point.
    """
    grid = np.round(np.linspace(0.0, 1.0, 101), 10) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InputError("empty p grid")
    obj = MSMObjective(villages, T, reps, seed, threads)
    values = np.array([obj(p) for p in grid])
    k = int(np.argmin(values))
    best_p, best_v = float(grid[k]), float(values[k])
    if grid.size > 1:
        lo = float(grid[max(k - 1, 0)])
        hi = float(grid[min(k + 1, grid.size - 1)])
        p_ref = golden_section(obj, lo, hi, tol=tol)
        v_ref = obj(p_ref)
        if v_ref < best_v:
            best_p, best_v = p_ref, v_ref
    return {"p_hat": best_p, "objective": best_v, "grid": grid, "grid_objective": values,
            "moment": obj.moment(best_p), "reps": reps, "T": T, "seed": int(seed)}


def multi_seed_perturb(seeds, g: Graph, rng, max_redraws: int = 100) -> tuple[int, ...]:
    """Replace one uniformly chosen seed by a uniformly chosen neighbour that is not a seed."""
    s = sorted({int(x) for x in seeds})
    if not s:
        raise InputError("empty seed set")
    k = int(rng.integers(len(s)))
    old = s[k]
    nbrs = g.neighbors(old)
    if len(nbrs) == 0:
        raise PerturbationError(f"seed {old} has no neighbours")
    taken = set(s)
    for _ in range(max_redraws):
        new = int(nbrs[rng.integers(len(nbrs))])
        if new not in taken:
            s[k] = new
            return tuple(sorted(s))
    raise PerturbationError(f"every draw for seed {old} hit another seed")


def _village_jaccard_rep(i, rng, villages, perturbed, p, T):
    rows = []
    tot_a = np.zeros(T + 1)
    tot_b = np.zeros(T + 1)
    tot_i = np.zeros(T + 1)
    for v, alt in zip(villages, perturbed):
        perc = sample_percolation(v.graph, p, Mode.UNDIRECTED, rng)
        a = run_diffusion(perc, v.seeds, T)
        b = run_diffusion(perc, alt, T)
        ta = np.where(a.activation_time >= 0, a.activation_time, T + 1)
        tb = np.where(b.activation_time >= 0, b.activation_time, T + 1)
        tot_i += np.cumsum(np.bincount(np.maximum(ta, tb), minlength=T + 2)[: T + 1])
        tot_a += np.cumsum(np.bincount(np.minimum(ta, tb), minlength=T + 2)[: T + 1])
    rows.append(tot_i / tot_a)
    return rows[0]


def village_sensitive_dependence(villages, p: float, T: int, reps: int, seed: int, threads: int = 1) -> CurveResult:
    """Aggregate Jaccard overlap across villages after moving one seed per village to a neighbour."""
    rng = parallel.stream(seed, parallel.STREAM_SETUP)
    perturbed = [multi_seed_perturb(v.seeds, v.graph, rng) for v in villages]
    fn = functools.partial(_village_jaccard_rep, villages=list(villages), perturbed=perturbed, p=p, T=T)
    rows = np.vstack(parallel.replicate(fn, reps, seed, threads=threads))
    mean, se, _ = _mean_se(rows)
    return CurveResult(mean, se, reps, _base_meta(seed, experiment="village-sens-dep", p=p, T=T))
