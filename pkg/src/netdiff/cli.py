"""Command-line front end.

Every option can come from (highest first) a flag, an environment variable
``NETDIFF_<OPTION>`` (upper case, dashes as underscores), an INI config file
(``[netdiff]`` for shared keys, ``[<command>]`` per command) or the default.
Outputs go to ``--out``: ``<command>.csv`` / ``<command>.json`` plus
``config.json`` echoing the resolved configuration.  Thread count and output
directory are left out of every written file, so a fixed seed gives the
same bytes whatever ``--threads`` is.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from netdiff import __version__, parallel
from netdiff.errors import NetdiffError

log = logging.getLogger("netdiff")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
ENV_PREFIX = "NETDIFF_"
# never echoed into output files
UNRECORDED = {"threads", "out", "config", "dry_run"}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Opt:
    name: str
    type: type | None
    default: object = None
    help: str = ""

    @property
    def key(self) -> str:
        return self.name.replace("-", "_")


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    return [float(x) for x in str(s).split(",") if x.strip()]


COMMON = [
    Opt("seed", int, 0, "master seed"),
    Opt("threads", int, None, "worker processes (default NETDIFF_THREADS or 1)"),
    Opt("out", str, ".", "output directory"),
    Opt("mode", str, "undirected", "percolation mode: undirected or directed"),
]
GRAPH = [
    Opt("graph", str, None, "edge-list file for L (default: generate from n, q, n-side)"),
    Opt("positions", str, None, "latent positions file matching --graph"),
    Opt("n", int, 4000, "nodes"),
    Opt("q", int, 4, "lattice dimension"),
    Opt("n-side", int, 7, "lattice points per side"),
]
DIFFUSION = [
    Opt("p", float, None, "passing probability (default r0 / mean degree)"),
    Opt("r0", float, 2.5, "target R0 used when p is unset"),
    Opt("T", int, None, "horizon (default twice the diameter of L)"),
    Opt("reps", int, 2500, "replications"),
    Opt("beta", float, None, "error-link probability (default 1/(10 n))"),
    Opt("i0", int, None, "seed node"),
]

COMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "gen-graph": ("generate a lattice-plus-random graph", GRAPH[2:]),
    "stats": ("summary statistics of L", GRAPH + [Opt("path-sample", int, None, "source sample for path lengths")]),
    "sens-dep": ("Jaccard overlap of runs from nearby seeds", GRAPH + DIFFUSION + [
        Opt("draws", int, 1, "independent (error graph, alternative seed) draws"),
        Opt("j0", int, None, "alternative seed (default drawn per the perturbation rule)"),
    ]),
    "forecast-ratio": ("ever-activated ratio of L to L plus error links", GRAPH + DIFFUSION + [
        Opt("delta", float, 1.0, "support share for error links"),
        Opt("support-rule", str, "all-pairs", "all-pairs, latent-nearest or hop-nearest"),
        Opt("decay", float, 0.0, "decay exponent lambda; p becomes p / t**lambda"),
        Opt("regular-degree", int, None, "use a random regular graph of this degree on n nodes instead of L"),
    ]),
    "count-jumps": ("mean new catchment regions per step", GRAPH + DIFFUSION),
    "estimate-p": ("single-exposure estimate of p and R0", GRAPH + DIFFUSION[:3] + [
        Opt("min-qualifying", int, 10_000, "qualifying node-steps to collect"),
        Opt("batch", int, 50, "runs per batch"),
    ]),
    "beta-sample": ("chance a survey finds no error links", [
        Opt("n", int, 4000, "population"), Opt("beta", float, None, "error-link probability (default 1/(10 n))"),
        Opt("m", int, 100, "surveyed nodes"), Opt("reps", int, 2500, "replications"),
    ]),
    "detect": ("share of catchment regions found by testing", GRAPH + DIFFUSION + [
        Opt("alphas", _floats, [0.01, 0.05], "comma-separated testing probabilities"),
    ]),
    "fit-sir": ("fit the compartmental model to network runs", GRAPH + DIFFUSION),
    "msm-fit": ("simulated-moments estimate of p from village call counts", [
        Opt("manifest", str, None, "village manifest with observed counts"),
        Opt("T", int, 15, "horizon"), Opt("reps", int, 2500, "replications"),
        Opt("grid-step", float, 0.01, "p grid spacing"), Opt("tol", float, 1e-3, "refinement tolerance"),
    ]),
    "exposure": ("diffusion exposure per household", [
        Opt("manifest", str, None, "village manifest"),
        Opt("p", float, None, "passing probability (default 1 / spectral radius per village)"),
        Opt("T", int, None, "steps (default village diameter)"),
    ]),
    "peer-mc": ("exposure-regression bias under random link loss", [
        Opt("manifest", str, None, "village manifest with takeup and controls"),
        Opt("k", _floats, [5.0, 15.0], "comma-separated k values; links drop with probability 1/(k mean degree)"),
        Opt("reps", int, 2500, "replications per k"),
        Opt("outcome", str, "takeup", "outcome column"),
        Opt("controls", str, "female,age,education,rice_area", "comma-separated control columns"),
        Opt("hold-p", _bool, False, "keep full-graph p and T on degraded graphs"),
    ]),
    "ingest-flows": ("prune a flow table to a graph", [
        Opt("flows", str, None, "flow table"),
        Opt("cutoff", float, None, "link if mean two-way flow exceeds this"),
        Opt("percentile", float, None, "cutoff as a percentile of positive flows"),
    ]),
    "make-fixtures": ("write the synthetic data sets", []),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netdiff", description="Network diffusion experiments.")
    parser.add_argument("--version", action="version", version=f"netdiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (desc, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=desc, description=desc)
        sp.add_argument("--config", default=None, help="INI config file")
        sp.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
        for o in COMMON + opts:
            # defaults are applied later so env and config can sit in between
            sp.add_argument(f"--{o.name}", dest=o.key, default=None, help=o.help)
    return parser


def resolve(command: str, args: argparse.Namespace, environ=None) -> dict:
    """Merge defaults, config file, environment and flags; convert and validate types."""
    environ = os.environ if environ is None else environ
    opts = COMMON + COMMANDS[command][1]
    cfg: dict = {o.key: o.default for o in opts}
    if args.config:
        parser = configparser.ConfigParser()
        if not parser.read(args.config):
            raise UsageError(f"cannot read config file {args.config}")
        known = {o.key for o in opts}
        for section in ("netdiff", command):
            if parser.has_section(section):
                for k, v in parser.items(section):
                    k = k.replace("-", "_")
                    if k not in known:
                        if section == command:
                            raise UsageError(f"unknown key {k!r} in [{section}]")
                        continue
                    cfg[k] = v
    for o in opts:
        env = environ.get(ENV_PREFIX + o.key.upper())
        if env is not None:
            cfg[o.key] = env
        flag = getattr(args, o.key, None)
        if flag is not None:
            cfg[o.key] = flag
    for o in opts:
        v = cfg[o.key]
        if v is not None and o.type is not None and not isinstance(v, o.type if isinstance(o.type, type) else ()):
            try:
                cfg[o.key] = o.type(v)
            except (TypeError, ValueError):
                raise UsageError(f"--{o.name}: invalid value {v!r}") from None
    if cfg["threads"] is None:
        cfg["threads"] = parallel.default_threads()
    _validate(command, cfg)
    return cfg


def _validate(command: str, cfg: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise UsageError(msg)

    need(cfg["threads"] >= 1, "--threads must be at least 1")
    need(cfg["mode"] in ("undirected", "directed"), "--mode must be undirected or directed")
    for k in ("reps", "n", "n_side", "q", "draws", "min_qualifying", "batch", "m"):
        if cfg.get(k) is not None:
            need(cfg[k] >= 1, f"--{k.replace('_', '-')} must be positive")
    for k in ("p", "beta", "delta"):
        if cfg.get(k) is not None:
            need(0.0 <= cfg[k] <= 1.0, f"--{k} must lie in [0, 1]")
    if cfg.get("T") is not None:
        need(cfg["T"] >= 0, "--T must be nonnegative")
    if command in ("msm-fit", "exposure", "peer-mc"):
        need(cfg["manifest"] is not None, "--manifest is required")
    if command == "ingest-flows":
        need(cfg["flows"] is not None, "--flows is required")
        need((cfg["cutoff"] is None) != (cfg["percentile"] is None), "give exactly one of --cutoff and --percentile")
    if command == "detect":
        need(all(0.0 <= a <= 1.0 for a in cfg["alphas"]), "--alphas must lie in [0, 1]")
    if command == "peer-mc":
        need(all(k >= 1 for k in cfg["k"]), "--k values must be at least 1")


def recorded(cfg: dict, command: str) -> dict:
    out = {k: v for k, v in cfg.items() if k not in UNRECORDED}
    out["command"] = command
    out["version"] = __version__
    out["rng"] = parallel.RNG_NAME
    return out


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n")


def _plain(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "as_dict"):
        return o.as_dict()
    if hasattr(o, "__dataclass_fields__"):
        return {k: getattr(o, k) for k in o.__dataclass_fields__}
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _write_table(path: Path, header, rows) -> None:
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(x) if isinstance(x, (int, np.integer, str)) else _fmt(x) for x in row) + "\n")


# -- shared setup --------------------------------------------------------------------------

class Setup:
    """Graph, positions and derived diffusion parameters for a config."""

    def __init__(self, cfg: dict):
        from netdiff.generators import LatentPositions, generate_lattice_random
        from netdiff.graph import read_edge_list

        self.cfg = cfg
        if cfg.get("graph"):
            self.L = read_edge_list(cfg["graph"])
            self.positions = LatentPositions.read(cfg["positions"]) if cfg.get("positions") else None
        else:
            rng = parallel.stream(cfg["seed"], parallel.STREAM_SETUP, 0)
            self.L, self.positions = generate_lattice_random(cfg["n"], cfg["q"], cfg["n_side"], rng)
        self._stats = None

    @property
    def stats(self):
        from netdiff.graph import graph_stats

        if self._stats is None:
            self._stats = graph_stats(self.L, rng=parallel.stream(self.cfg["seed"], parallel.STREAM_SETUP, 2))
        return self._stats

    def p(self) -> float:
        if self.cfg.get("p") is not None:
            return self.cfg["p"]
        return min(1.0, self.cfg["r0"] / float(self.L.degrees.mean()))

    def T(self) -> int:
        if self.cfg.get("T") is not None:
            return self.cfg["T"]
        return 2 * self.stats.diameter

    def beta(self) -> float:
        b = self.cfg.get("beta")
        return 1.0 / (10 * self.L.n) if b is None else b

    def random_i0(self) -> int:
        if self.cfg.get("i0") is not None:
            return self._check(self.cfg["i0"])
        return int(parallel.stream(self.cfg["seed"], parallel.STREAM_SETUP, 1).integers(self.L.n))

    def central_i0(self) -> int:
        from netdiff.experiments import lattice_center

        if self.cfg.get("i0") is not None:
            return self._check(self.cfg["i0"])
        return lattice_center(self.positions) if self.positions is not None else 0

    def _check(self, i):
        if not 0 <= i < self.L.n:
            raise UsageError(f"--i0 {i} out of range for {self.L.n} nodes")
        return i


# -- commands ------------------------------------------------------------------------------

def cmd_gen_graph(cfg, out: Path) -> dict:
    from netdiff.graph import write_edge_list

    s = Setup(cfg)
    write_edge_list(s.L, out / "graph.csv")
    s.positions.write(out / "positions.csv")
    return {"nodes": s.L.n, "edges": s.L.edge_count}


def cmd_stats(cfg, out: Path) -> dict:
    from netdiff.graph import graph_stats

    s = Setup(cfg)
    st = graph_stats(s.L, cfg["path_sample"], rng=parallel.stream(cfg["seed"], parallel.STREAM_SETUP, 2))
    return st.as_dict()


def cmd_sens_dep(cfg, out: Path) -> dict:
    from netdiff.experiments import (
        build_perturbation,
        sensitive_dependence_curve,
        sensitive_dependence_over_draws,
    )
    from netdiff.generators import ErrorGraphSpec, generate_error_graph

    s = Setup(cfg)
    i0, p, T = s.central_i0(), s.p(), s.T()
    if cfg["draws"] > 1:
        curve, perts = sensitive_dependence_over_draws(s.L, s.beta(), i0, p, T, cfg["draws"], cfg["reps"],
                                                       cfg["seed"], cfg["threads"], cfg["mode"])
    else:
        rng = parallel.stream(cfg["seed"], parallel.STREAM_ERROR_GRAPH, 0)
        E = generate_error_graph(s.L.n, ErrorGraphSpec(s.beta()), rng=rng)
        if cfg["j0"] is not None:
            j0 = cfg["j0"]
            pert = None
        else:
            pert = build_perturbation(s.L, E, i0, rng)
            j0 = pert.j0
        curve = sensitive_dependence_curve(s.L, E, i0, j0, p, T, cfg["reps"], cfg["seed"], cfg["threads"], cfg["mode"])
        if pert is not None:
            curve.metadata.update(d_e2=pert.d_e2, neighborhood_share=pert.neighborhood_share, J_share=pert.J_share)
    curve.write(out, "sens-dep")
    return {"written": True}


def cmd_forecast_ratio(cfg, out: Path) -> dict:
    from netdiff.diffusion import DecaySpec
    from netdiff.experiments import forecast_ratio_curve
    from netdiff.generators import generate_random_regular

    if cfg["regular_degree"] is not None:
        L = generate_random_regular(cfg["n"], cfg["regular_degree"],
                                    parallel.stream(cfg["seed"], parallel.STREAM_SETUP, 0))
        s = Setup.__new__(Setup)
        s.cfg, s.L, s.positions, s._stats = cfg, L, None, None
    else:
        s = Setup(cfg)
    p = s.p()
    law = DecaySpec(p, cfg["decay"]) if cfg["decay"] > 0 else p
    curve = forecast_ratio_curve(s.L, s.beta(), s.random_i0(), law, s.T(), cfg["reps"], cfg["seed"], cfg["threads"],
                                 cfg["delta"], cfg["support_rule"], s.positions, cfg["mode"])
    curve.write(out, "forecast-ratio")
    return {"min_ratio": float(np.nanmin(curve.mean)), "argmin_t": curve.argmin()}


def cmd_count_jumps(cfg, out: Path) -> dict:
    from netdiff.experiments import jump_curve

    s = Setup(cfg)
    curve = jump_curve(s.L, s.beta(), s.random_i0(), s.p(), s.T(), cfg["reps"], cfg["seed"], cfg["threads"], cfg["mode"])
    curve.write(out, "count-jumps")
    return {"mean_total_jumps": float(np.sum(curve.mean))}


def cmd_estimate_p(cfg, out: Path) -> dict:
    from netdiff.experiments import estimate_p_experiment

    s = Setup(cfg)
    return estimate_p_experiment(s.L, s.p(), s.T(), cfg["seed"], cfg["min_qualifying"], cfg["batch"],
                                 threads=cfg["threads"], mode=cfg["mode"])


def cmd_beta_sample(cfg, out: Path) -> dict:
    from netdiff.experiments import beta_sampling_experiment

    beta = cfg["beta"] if cfg["beta"] is not None else 1.0 / (10 * cfg["n"])
    res = beta_sampling_experiment(cfg["n"], beta, cfg["m"], cfg["reps"], cfg["seed"], cfg["threads"])
    counts = res.pop("counts")
    _write_table(out / "beta-sample.csv", ["rep", "links_found"], enumerate(counts.tolist()))
    return res


def cmd_detect(cfg, out: Path) -> dict:
    from netdiff.experiments import detection_curve

    s = Setup(cfg)
    T = s.T()
    res = detection_curve(s.L, s.beta(), s.random_i0(), s.p(), T, cfg["alphas"], cfg["reps"], cfg["seed"],
                          cfg["threads"], cfg["mode"])
    header = ["t", "K_true"] + [f"ratio_alpha_{a:g}" for a in cfg["alphas"]]
    rows = [[t, res["K_true"][t]] + [res[a]["ratio"][t] for a in cfg["alphas"]] for t in range(T + 1)]
    _write_table(out / "detect.csv", header, rows)
    return {"alphas": cfg["alphas"], "T": T}


def cmd_fit_sir(cfg, out: Path) -> dict:
    from netdiff.compartmental import network_sir_fits

    s = Setup(cfg)
    beta = cfg["beta"] if cfg["beta"] is not None else 0.0
    res = network_sir_fits(s.L, beta, s.random_i0(), s.p(), s.T(), cfg["reps"], cfg["seed"], cfg["threads"], cfg["mode"])
    fits = res.pop("fits")
    _write_table(out / "fit-sir.csv", ["rep", "s", "r", "r0", "rmse_in", "rmse_out"],
                 ([i, f.params.s, f.params.r, f.r0, f.rmse_in, f.rmse_out] for i, f in enumerate(fits)))
    return res


def cmd_msm_fit(cfg, out: Path) -> dict:
    from netdiff.experiments import msm_fit_p
    from netdiff.ingestion import load_manifest

    villages = load_manifest(cfg["manifest"])
    steps = int(round(1.0 / cfg["grid_step"]))
    grid = np.round(np.linspace(0.0, 1.0, steps + 1), 12)
    res = msm_fit_p(villages, cfg["T"], cfg["reps"], cfg["seed"], grid, cfg["threads"], cfg["tol"])
    _write_table(out / "msm-fit.csv", ["p", "objective"], zip(res.pop("grid"), res.pop("grid_objective")))
    return res


def cmd_exposure(cfg, out: Path) -> dict:
    from netdiff.ingestion import load_manifest
    from netdiff.peer_effects import village_exposure

    villages = load_manifest(cfg["manifest"])
    rows, used = [], []
    for v in villages:
        e = village_exposure(v.graph, v.treated, cfg["p"], cfg["T"])
        used.append({"village": v.name, "p": e.p_used, "T": e.T_used})
        rows.extend((v.name, i, x) for i, x in enumerate(e.values))
    _write_table(out / "exposure.csv", ["village", "node", "exposure"], rows)
    return {"villages": used}


def cmd_peer_mc(cfg, out: Path) -> dict:
    from netdiff.ingestion import load_manifest
    from netdiff.peer_effects import PeerSpec, mc_mismeasurement, summarize_mc

    villages = load_manifest(cfg["manifest"])
    spec = PeerSpec(cfg["outcome"], tuple(c for c in cfg["controls"].split(",") if c), True, cfg["hold_p"])
    res = mc_mismeasurement(villages, cfg["k"], cfg["reps"], cfg["seed"], cfg["threads"], spec)
    for k, r in res["k"].items():
        _write_table(out / f"peer-mc-k{k:g}.csv", ["rep", "bias_pct", "p_value"],
                     zip(r["rep"].tolist(), r["bias_pct"], r["p_value"]))
    full = res["full"]
    return {"full": {"gamma": full.coefficient, "se": full.clustered_se, "p_value": full.p_value,
                     "n_obs": full.n_obs, "clusters": full.cluster_count},
            "summary": summarize_mc(res)}


def cmd_ingest_flows(cfg, out: Path) -> dict:
    from netdiff.graph import write_edge_list
    from netdiff.ingestion import load_flows, symmetrize_and_prune

    table = load_flows(cfg["flows"])
    net = symmetrize_and_prune(table, cutoff=cfg["cutoff"], percentile=cfg["percentile"])
    write_edge_list(net.graph, out / "ingest-flows-graph.csv")
    _write_table(out / "ingest-flows-nodes.csv", ["node", "region"], enumerate(net.ids))
    d = net.graph.degrees
    return {"cutoff": net.cutoff, "regions": len(table.ids), "nodes": net.graph.n, "edges": net.graph.edge_count,
            "mean_degree": float(d.mean()) if d.size else 0.0}


def cmd_make_fixtures(cfg, out: Path) -> dict:
    from netdiff.fixtures import write_all

    paths = write_all(out, cfg["seed"])
    return {k: str(v.relative_to(out)) for k, v in paths.items()}


HANDLERS = {
    "gen-graph": cmd_gen_graph, "stats": cmd_stats, "sens-dep": cmd_sens_dep,
    "forecast-ratio": cmd_forecast_ratio, "count-jumps": cmd_count_jumps, "estimate-p": cmd_estimate_p,
    "beta-sample": cmd_beta_sample, "detect": cmd_detect, "fit-sir": cmd_fit_sir, "msm-fit": cmd_msm_fit,
    "exposure": cmd_exposure, "peer-mc": cmd_peer_mc, "ingest-flows": cmd_ingest_flows,
    "make-fixtures": cmd_make_fixtures,
}


def run(command: str, cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _dump(recorded(cfg, command), out / "config.json")
    report = HANDLERS[command](cfg, out)
    if report and command not in ("sens-dep", "forecast-ratio", "count-jumps"):
        _dump(report, out / f"{command}.json")
    return EXIT_OK


def main(argv=None, environ=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        cfg = resolve(args.command, args, environ)
    except UsageError as e:
        print(f"netdiff {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.dry_run:
        print(json.dumps(recorded(cfg, args.command), indent=2, sort_keys=True, default=_plain))
        return EXIT_OK
    try:
        return run(args.command, cfg)
    except UsageError as e:
        print(f"netdiff {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NetdiffError, OSError, RuntimeError) as e:
        print(f"netdiff {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
