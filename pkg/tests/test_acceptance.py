"""End-to-end acceptance checks at desk scale.

Each test appends one PASS/FAIL line to the "acceptance criteria" section of
the pytest summary, then asserts.  Everything derives from MASTER_SEED, fixed
before the first run.
"""

import json
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, CORPUS, corpus_graph
from netdiff import parallel
from netdiff.cli import main
from netdiff.compartmental import network_sir_fits
from netdiff.diffusion import run_diffusion, sample_percolation
from netdiff.experiments import (
    beta_sampling_experiment,
    detection_curve,
    estimate_p_experiment,
    forecast_ratio_curve,
    lattice_center,
    p_no_links,
    sensitive_dependence_over_draws,
)
from netdiff.fixtures import PEER_CONTROLS, PEER_GAMMA, peer_outcomes, synthetic_peer_villages
from netdiff.generators import generate_lattice_random, generate_random_regular
from netdiff.graph import graph_stats
from netdiff.peer_effects import mc_mismeasurement, ols_fe, standardize, summarize_mc, village_exposure
from oracles import expected_ever_undirected

pytestmark = pytest.mark.slow

MASTER_SEED = 20261018
N = 4000
R0 = 2.5
REPS = 2500

# tolerances
RATIO_Q4 = (0.73, 0.83)
ARGMIN_Q4 = (10, 16)
RATIO_Q2 = (0.12, 0.22)
ARGMIN_Q2 = (22, 34)
RATIO_Q2_SPARSE = (0.59, 0.71)
OVERLAP_Q4_T5_MAX = 0.15
OVERLAP_Q2_T9 = (0.2, 0.45)
MC_SIGMAS = 3.0
P_TOL, R0_TOL = 0.02, 0.1
R0_FIT_Q4 = (1.31, 1.61)
COVERAGE_MIN = 0.90


def record(label, ok, detail):
    line = f"{label:<4}{'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


class Config:
    """Graph and derived parameters as the command line builds them from a master seed."""

    def __init__(self, q, n_side, seed=MASTER_SEED):
        self.q = q
        self.L, self.positions = generate_lattice_random(N, q, n_side, parallel.stream(seed, parallel.STREAM_SETUP, 0))
        self.stats = graph_stats(self.L, rng=parallel.stream(seed, parallel.STREAM_SETUP, 2))
        self.T = 2 * self.stats.diameter
        self.p = R0 / float(self.L.degrees.mean())
        self.i0 = int(parallel.stream(seed, parallel.STREAM_SETUP, 1).integers(N))
        self.center = lattice_center(self.positions)


@pytest.fixture(scope="module")
def q4():
    return Config(4, 7)


@pytest.fixture(scope="module")
def q2():
    return Config(2, 50)


def q4_cli_args(out, threads):
    return ["forecast-ratio", "--q", "4", "--n", str(N), "--n-side", "7", "--seed", str(MASTER_SEED),
            "--reps", str(REPS), "--threads", str(threads), "--out", str(out)]


def read_curve(path):
    rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
    return np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows])


@pytest.fixture(scope="module")
def q4_ratio_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("q4-ratio-1")
    assert main(q4_cli_args(out, 1), environ={}) == 0
    return out


def test_c01_forecast_ratio_q4(q4_ratio_dir):
    mean, se = read_curve(q4_ratio_dir / "forecast-ratio.csv")
    t = int(np.nanargmin(mean))
    ok = RATIO_Q4[0] <= mean[t] <= RATIO_Q4[1] and ARGMIN_Q4[0] <= t <= ARGMIN_Q4[1]
    record("C1", ok, f"q=4 min ratio {mean[t]:.3f} (se {se[t]:.3f}) at t={t}; "
                     f"want [{RATIO_Q4[0]}, {RATIO_Q4[1]}] at t in [{ARGMIN_Q4[0]}, {ARGMIN_Q4[1]}]")
    assert ok


def test_c02_forecast_ratio_q2(q2):
    c = forecast_ratio_curve(q2.L, 1 / (10 * N), q2.i0, q2.p, q2.T, REPS, MASTER_SEED)
    t = c.argmin()
    ok = RATIO_Q2[0] <= c.mean[t] <= RATIO_Q2[1] and ARGMIN_Q2[0] <= t <= ARGMIN_Q2[1]
    record("C2", ok, f"q=2 min ratio {c.mean[t]:.3f} (se {c.stderr[t]:.3f}) at t={t}; "
                     f"want [{RATIO_Q2[0]}, {RATIO_Q2[1]}] at t in [{ARGMIN_Q2[0]}, {ARGMIN_Q2[1]}]")
    assert ok


def test_c03_forecast_ratio_q2_sparse_errors(q2):
    c = forecast_ratio_curve(q2.L, 1 / (100 * N), q2.i0, q2.p, q2.T, REPS, MASTER_SEED)
    t = c.argmin()
    ok = RATIO_Q2_SPARSE[0] <= c.mean[t] <= RATIO_Q2_SPARSE[1]
    record("C3", ok, f"q=2, beta=1/(100n) min ratio {c.mean[t]:.3f} (se {c.stderr[t]:.3f}) at t={t}; "
                     f"want [{RATIO_Q2_SPARSE[0]}, {RATIO_Q2_SPARSE[1]}]")
    assert ok


def test_c04_overlap_after_seed_shift(q4, q2):
    draws, reps = 20, 250
    c4, _ = sensitive_dependence_over_draws(q4.L, 1 / (10 * N), q4.center, q4.p, 10, draws, reps, MASTER_SEED)
    c2, _ = sensitive_dependence_over_draws(q2.L, 1 / (10 * N), q2.center, q2.p, 10, draws, reps, MASTER_SEED)
    j4, j2 = c4.mean[5], c2.mean[9]
    ok = j4 < OVERLAP_Q4_T5_MAX and OVERLAP_Q2_T9[0] <= j2 <= OVERLAP_Q2_T9[1]
    record("C4", ok, f"overlap q=4 t=5 {j4:.3f} (se {c4.stderr[5]:.3f}, want < {OVERLAP_Q4_T5_MAX}); "
                     f"q=2 t=9 {j2:.3f} (se {c2.stderr[9]:.3f}, want [{OVERLAP_Q2_T9[0]}, {OVERLAP_Q2_T9[1]}]); "
                     f"{draws} draws x {reps} reps")
    assert ok


def test_c05_percolation_against_enumeration():
    reps, p = 100_000, 0.5
    worst, bad = 0.0, []
    p3 = expected_ever_undirected(3, CORPUS["P3"][1], [0], 0.5, 2)
    for k, name in enumerate(sorted(CORPUS)):
        n, edges = CORPUS[name]
        g = corpus_graph(name)
        T = n - 1
        rng = parallel.stream(MASTER_SEED, 5, k)
        x = np.array([run_diffusion(sample_percolation(g, p, rng=rng), [0], T).ever_counts()[-1]
                      for _ in range(reps)], dtype=float)
        exact = expected_ever_undirected(n, edges, [0], p, T)
        z = abs(x.mean() - exact) / (x.std(ddof=1) / math.sqrt(reps))
        worst = max(worst, z)
        if z > MC_SIGMAS:
            bad.append(f"{name} z={z:.2f}")
    ok = not bad and p3 == 1.75
    record("C5", ok, f"{len(CORPUS)} graphs x {reps} reps, largest |z| {worst:.2f} (want <= {MC_SIGMAS}); "
                     f"P3 exact {p3}" + (f"; off: {', '.join(bad)}" if bad else ""))
    assert ok


def test_c06_estimators(q4):
    res = estimate_p_experiment(q4.L, 0.25, q4.T, MASTER_SEED, min_qualifying=10_000)
    p_err = abs(res["p_hat"] - 0.25)
    r0_err = abs(res["r0_hat"] - R0)
    ok = res["qualifying"] >= 10_000 and p_err < P_TOL and r0_err < R0_TOL
    record("C6", ok, f"p-hat {res['p_hat']:.4f} from {res['qualifying']} node-steps (|err| {p_err:.4f} < {P_TOL}); "
                     f"R0-hat {res['r0_hat']:.3f} with mean degree {res['mean_degree']:.3f} "
                     f"(|err| {r0_err:.3f} < {R0_TOL})")
    assert ok


def test_c07_no_error_links_in_a_survey():
    big = 10**6
    grid = [(500, 0.002, 15), (2000, 1e-4, 60), (N, 1 / (10 * N), 100), (big, 1 / (big * math.log(big) ** 2), 13_800)]
    reps = 2000
    details, ok = [], True
    for k, (n, beta, m) in enumerate(grid):
        res = beta_sampling_experiment(n, beta, m, reps, MASTER_SEED + k)
        exact = p_no_links(beta, m)
        sigma = math.sqrt(exact * (1 - exact) / reps)
        good = abs(res["p_no_links"] - exact) <= MC_SIGMAS * sigma
        ok &= good
        details.append(f"(n={n}, m={m}) {res['p_no_links']:.3f} vs {exact:.3f}")
    illustration = p_no_links(1 / (big * math.log(big) ** 2), 13_800)
    ok &= abs(illustration - 0.607) < 5e-4
    record("C7", ok, "; ".join(details) + f"; analytic 13,800-of-1e6 value {illustration:.4f}")
    assert ok


def test_c08_detection_bound(q2):
    alphas = (0.01, 0.05)
    res = detection_curve(q2.L, 1 / (10 * N), q2.i0, q2.p, q2.T, alphas, 500, MASTER_SEED)
    tau = np.arange(q2.T + 1) + 1.0
    ok, details = True, []
    for a in alphas:
        ratio = res[a]["ratio"]
        live = np.isfinite(ratio)
        bound = np.minimum(1.0, a * tau ** (q2.q + 1))
        below = np.all(ratio[live] <= bound[live] + 1e-12)
        small = live & (a * tau ** (q2.q + 1) < 1)
        strict = np.all(ratio[small] < 1)
        ok &= bool(below and strict)
        slack = float(np.min(bound[live] - ratio[live]))
        details.append(f"alpha={a}: bound holds at {live.sum()} steps (min slack {slack:.4f}), "
                       f"< 1 at all {small.sum()} steps with alpha*tau^{q2.q + 1} < 1")
    record("C8", ok, "; ".join(details))
    assert ok


def test_c09_compartmental_fits(q4, q2):
    reps = 500
    rows, ok = [], True
    r0_q4_L = None
    for cfg in (q4, q2):
        for label, beta in (("L", 0.0), ("G", 1 / (10 * N))):
            res = network_sir_fits(cfg.L, beta, cfg.i0, cfg.p, cfg.T, reps, MASTER_SEED)
            ok &= res["r0_hat"] < R0 and res["rmse_out"] > res["rmse_in"]
            if cfg.q == 4 and label == "L":
                r0_q4_L = res["r0_hat"]
            rows.append(f"q={cfg.q} {label}: R0-hat {res['r0_hat']:.3f} (se {res['r0_hat_se']:.3f}), "
                        f"RMSE in {res['rmse_in']:.1f} out {res['rmse_out']:.1f}")
    ok &= R0_FIT_Q4[0] <= r0_q4_L <= R0_FIT_Q4[1]
    record("C9", ok, f"want q=4 L R0-hat in [{R0_FIT_Q4[0]}, {R0_FIT_Q4[1]}], all R0-hat < {R0}, "
                     f"out > in everywhere; " + "; ".join(rows))
    assert ok


def test_c10_exponential_growth_case(q4_ratio_dir):
    n, reps = 100_000, 400
    R = generate_random_regular(n, 3, parallel.stream(MASTER_SEED, parallel.STREAM_SETUP, 10))
    p = R0 / 3
    i0 = int(parallel.stream(MASTER_SEED, parallel.STREAM_SETUP, 11).integers(n))
    diam = graph_stats(R, path_length_sample=20, rng=parallel.stream(MASTER_SEED, parallel.STREAM_SETUP, 12)).diameter
    T = 2 * diam
    hi = forecast_ratio_curve(R, 1 / (p * n), i0, p, T, reps, MASTER_SEED)
    lo = forecast_ratio_curve(R, 0.1 / (p * n), i0, p, T, reps, MASTER_SEED)
    q4_min = float(np.nanmin(read_curve(q4_ratio_dir / "forecast-ratio.csv")[0]))
    hi_min = float(np.nanmin(hi.mean))
    ok = hi_min < q4_min and lo.mean[-1] > 0.9
    record("C10", ok, f"3-regular n={n}, T={T}: min ratio {hi_min:.3f} at beta=1/(pn) (want < q=4 min {q4_min:.3f}); "
                      f"terminal ratio {lo.mean[-1]:.3f} at beta=0.1/(pn) (want > 0.9)")
    assert ok


def test_c11_peer_effects():
    villages = synthetic_peer_villages(MASTER_SEED, gamma=PEER_GAMMA)
    # coverage: exposure and covariates fixed, fresh village effects and noise per replication
    raw = [village_exposure(v.graph, v.treated).values for v in villages]
    untreated = np.concatenate([~v.treated for v in villages])
    z = standardize(np.concatenate(raw), untreated)
    cuts = np.cumsum([v.graph.n for v in villages])[:-1]
    z_by_village = np.split(z, cuts)
    x = z[untreated]
    C = np.vstack([np.column_stack([v.columns[c][~v.treated] for c in PEER_CONTROLS]
                                   + [v.graph.degrees[~v.treated].astype(float)]) for v in villages])
    vid = np.concatenate([np.full((~v.treated).sum(), k) for k, v in enumerate(villages)])
    reps, covered = 500, 0
    for i in range(reps):
        ys = peer_outcomes(villages, parallel.stream(MASTER_SEED, 11, i), PEER_GAMMA, exposure=z_by_village)
        y = np.concatenate([yv[~v.treated] for yv, v in zip(ys, villages)])
        lo, hi = ols_fe(y, x, C, fe=vid, clusters=vid).ci(0.95)
        covered += lo <= PEER_GAMMA <= hi
    coverage = covered / reps

    mc = mc_mismeasurement(villages, [5, 15], 500, MASTER_SEED)
    summary = {r["k"]: r for r in summarize_mc(mc)}
    boot = parallel.stream(MASTER_SEED, 11, reps)

    def sd_and_se(b):
        idx = boot.integers(len(b), size=(2000, len(b)))
        return float(b.std(ddof=1)), float(b[idx].std(axis=1, ddof=1).std(ddof=1))

    sd5, se5 = sd_and_se(mc["k"][5]["bias_pct"])
    sd15, se15 = sd_and_se(mc["k"][15]["bias_pct"])
    gap = sd5 - sd15
    ok = coverage >= COVERAGE_MIN and gap > MC_SIGMAS * math.hypot(se5, se15)
    record("C11", ok, f"95% interval covers gamma={PEER_GAMMA} in {coverage:.3f} of {reps} (want >= {COVERAGE_MIN}); "
                      f"bias sd k=5 {sd5:.2f} vs k=15 {sd15:.2f}, gap {gap:.2f} vs 3 x {math.hypot(se5, se15):.2f}; "
                      f"fail-to-reject k=5 {summary[5]['fail_to_reject']:.3f}, k=15 {summary[15]['fail_to_reject']:.3f}")
    assert ok


def test_c12_thread_count_does_not_change_outputs(q4_ratio_dir, tmp_path):
    again = tmp_path / "q4-ratio-2"
    assert main(q4_cli_args(again, 2), environ={}) == 0
    names = sorted(p.name for p in q4_ratio_dir.iterdir())
    same = names == sorted(p.name for p in again.iterdir()) and all(
        (q4_ratio_dir / f).read_bytes() == (again / f).read_bytes() for f in names)
    seeds = []
    for threads in (1, 3):
        out = tmp_path / f"estimate-{threads}"
        assert main(["estimate-p", "--q", "4", "--n", str(N), "--n-side", "7", "--p", "0.25",
                     "--seed", str(MASTER_SEED), "--threads", str(threads), "--out", str(out)], environ={}) == 0
        seeds.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
    same_est = seeds[0] == seeds[1]
    p_hat = json.loads(seeds[0]["estimate-p.json"])["p_hat"]
    ok = same and same_est
    record("C12", ok, f"forecast-ratio files {names} identical at 1 and 2 workers: {same}; "
                      f"estimate-p files identical at 1 and 3 workers: {same_est} (p-hat {p_hat:.4f})")
    assert ok
