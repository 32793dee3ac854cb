"""Synthetic stand-ins for the flow, marketing-village and insurance-village data.

Each builder returns in-memory objects; the ``write_*`` helpers lay the same
data out in the file formats read by :mod:`netdiff.ingestion`.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from netdiff import parallel
from netdiff.diffusion import run_diffusion, sample_percolation
from netdiff.graph import Graph
from netdiff.ingestion import FlowRecord, FlowTable, VillageData
from netdiff.peer_effects import standardize, village_exposure

PEER_CONTROLS = ("female", "age", "education", "rice_area")
PEER_GAMMA = 0.03
PEER_NOISE_SD = 0.45
PEER_CONTROL_EFFECTS = np.array([0.02, 0.001, 0.005, 0.01])
PEER_DEGREE_EFFECT = 0.004


def geometric_village(n: int, mean_degree: float, rng) -> Graph:
    """Random geometric graph on the unit square with the radius set for a target mean degree."""
    pts = rng.random((n, 2))
    # edge effects shave about 10% off the interior degree at these sizes
    r = math.sqrt(mean_degree / (math.pi * (n - 1))) * 1.1
    pairs = cKDTree(pts).query_pairs(r, output_type="ndarray")
    return Graph(n, pairs)


def synthetic_flows(seed: int, n_regions: int = 300) -> FlowTable:
    """Gravity-model trip counts between regions scattered on a square, zero flows omitted."""
    rng = parallel.stream(seed, parallel.STREAM_SETUP)
    pts = rng.random((n_regions, 2))
    pop = rng.lognormal(7.0, 0.6, n_regions)
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1)) + 0.02
    lam = 2e-6 * np.outer(pop, pop) / d**2
    np.fill_diagonal(lam, 0.0)
    trips = rng.poisson(lam)
    names = [f"R{k:04d}" for k in range(n_regions)]
    o, t = np.nonzero(trips)
    return FlowTable.from_records(FlowRecord(names[a], names[b], float(trips[a, b])) for a, b in zip(o, t))


def write_flows(table: FlowTable, path) -> None:
    with Path(path).open("w") as fh:
        fh.write("origin,destination,flow\n")
        for r in table:
            fh.write(f"{r.origin},{r.destination},{r.flow:g}\n")


def synthetic_msm_villages(seed: int, p_true: float = 0.13, T: int = 15, count: int = 69) -> list[VillageData]:
    """Villages of about 196 households, 1 to 8 seeds each, with call counts from one diffusion at ``p_true``."""
    out = []
    for k in range(count):
        rng = parallel.stream(seed, parallel.STREAM_SETUP, k)
        n = int(rng.integers(120, 273))
        g = geometric_village(n, 6.5, rng)
        m = min(1 + int(rng.poisson(2.26)), 8)
        seeds = tuple(sorted(rng.choice(n, size=m, replace=False).tolist()))
        trace = run_diffusion(sample_percolation(g, p_true, "undirected", rng), seeds, T)
        out.append(VillageData(g, seeds, int(trace.ever_counts()[-1]), {}, f"v{k:02d}"))
    return out


def peer_outcomes(villages, rng, gamma: float = PEER_GAMMA, exposure=None) -> list[np.ndarray]:
    """Takeup from a linear model in standardised exposure, controls, degree and a village effect."""
    if exposure is None:
        exposure = _pooled_exposure(villages)
    ys = []
    for v, de in zip(villages, exposure):
        X = np.column_stack([v.columns[c] for c in PEER_CONTROLS])
        mu = rng.normal(0.45, 0.08)
        y = mu + gamma * de + X @ PEER_CONTROL_EFFECTS + PEER_DEGREE_EFFECT * v.graph.degrees
        ys.append(y + rng.normal(0.0, PEER_NOISE_SD, v.graph.n))
    return ys


def _pooled_exposure(villages) -> list[np.ndarray]:
    """Exposure standardised over the untreated households of all villages together."""
    raw = [village_exposure(v.graph, v.treated).values for v in villages]
    mask = np.concatenate([~v.treated for v in villages])
    z = standardize(np.concatenate(raw), mask)
    cuts = np.cumsum([v.graph.n for v in villages])[:-1]
    return np.split(z, cuts)


def synthetic_peer_villages(seed: int, count: int = 47, gamma: float = PEER_GAMMA) -> list[VillageData]:
    """Villages of about 104 households, ~45% treated, with controls and a takeup outcome."""
    villages = []
    for k in range(count):
        rng = parallel.stream(seed, parallel.STREAM_SETUP, k)
        n = int(rng.integers(80, 129))
        g = geometric_village(n, 6.5, rng)
        treated = np.flatnonzero(rng.random(n) < 0.45)
        cols = {
            "female": (rng.random(n) < 0.1).astype(float),
            "age": np.round(rng.normal(52, 12, n)),
            "education": rng.integers(0, 13, n).astype(float),
            "rice_area": np.round(rng.lognormal(1.5, 0.5, n), 2),
        }
        villages.append(VillageData(g, tuple(treated.tolist()), None, cols, f"p{k:02d}"))
    rng = parallel.stream(seed, parallel.STREAM_SETUP, count)
    for v, y in zip(villages, peer_outcomes(villages, rng, gamma)):
        v.columns["takeup"] = y
    return villages


def write_villages(villages, out_dir, directed_rng=None) -> Path:
    """Write village files and a ``manifest.json``; returns the manifest path.

    Each undirected link is written as one or both directed reports so the
    loader's OR rule is exercised.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = directed_rng if directed_rng is not None else np.random.default_rng(0)
    entries = []
    for v in villages:
        stem = v.name
        with (out_dir / f"{stem}_edges.csv").open("w") as fh:
            for u, w in v.graph.edges:
                kind = rng.integers(3)
                if kind in (0, 2):
                    fh.write(f"{u},{w}\n")
                if kind in (1, 2):
                    fh.write(f"{w},{u}\n")
        (out_dir / f"{stem}_seeds.txt").write_text("".join(f"{s}\n" for s in v.seeds))
        entry = {"name": stem, "graph": f"{stem}_edges.csv", "seeds": f"{stem}_seeds.txt", "nodes": v.graph.n}
        if v.columns:
            names = list(v.columns)
            with (out_dir / f"{stem}_outcomes.csv").open("w") as fh:
                fh.write("node," + ",".join(names) + "\n")
                for i in range(v.graph.n):
                    fh.write(f"{i}," + ",".join(repr(float(v.columns[c][i])) for c in names) + "\n")
            entry["outcomes"] = f"{stem}_outcomes.csv"
        if v.observed_count is not None:
            entry["observed_count"] = v.observed_count
        entries.append(entry)
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps({"villages": entries}, indent=1) + "\n")
    return manifest


def write_all(out_dir, seed: int) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flows = out_dir / "flows.csv"
    write_flows(synthetic_flows(seed), flows)
    msm = write_villages(synthetic_msm_villages(seed), out_dir / "marketing", np.random.default_rng(seed))
    peer = write_villages(synthetic_peer_villages(seed), out_dir / "insurance", np.random.default_rng(seed + 1))
    return {"flows": flows, "marketing": msm, "insurance": peer}
