"""Loaders for origin-destination flow tables and surveyed village networks.

File formats
------------
Flows: CSV with header ``origin,destination,flow``; ids are arbitrary
strings, flow a nonnegative number of trips.  Each ordered pair may appear once.

Village graph: ``u,v`` per line (0-based ints), read as a directed report
"u names v"; ``#`` starts a comment line.  The undirected graph links u and v
if either reported the other.

Seeds: one node id per line, ``#`` comments allowed.

Outcomes: CSV with header ``node,<col>,...`` and exactly one row per node.

Manifest: JSON ``{"villages": [{"name", "graph", "seeds", "outcomes"?,
"nodes"?, "observed_count"?}, ...]}`` with paths relative to the manifest.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from netdiff.errors import InputError
from netdiff.graph import Graph, largest_component

FLOW_HEADER = ("origin", "destination", "flow")


@dataclass(frozen=True)
class FlowRecord:
    origin: str
    destination: str
    flow: float

    def __post_init__(self):
        if not (self.flow >= 0 and math.isfinite(self.flow)):
            raise InputError(f"flow must be finite and nonnegative, got {self.flow}")


@dataclass
class FlowTable:
    """Flow records plus dense integer ids (regions interned in sorted order)."""

    records: list[FlowRecord]
    ids: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    flow: np.ndarray

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @classmethod
    def from_records(cls, records) -> FlowTable:
        records = list(records)
        seen = set()
        for rec in records:
            key = (rec.origin, rec.destination)
            if key in seen:
                raise InputError(f"duplicate flow {rec.origin} -> {rec.destination}")
            seen.add(key)
        ids = tuple(sorted({r.origin for r in records} | {r.destination for r in records}))
        index = {name: k for k, name in enumerate(ids)}
        src = np.array([index[r.origin] for r in records], dtype=np.int64)
        dst = np.array([index[r.destination] for r in records], dtype=np.int64)
        flow = np.array([r.flow for r in records], dtype=float)
        return cls(records, ids, src, dst, flow)


def load_flows(path) -> FlowTable:
    """Read a flow table; malformed rows raise :class:`InputError` with their line number."""
    records = []
    seen: dict[tuple[str, str], int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return FlowTable.from_records([])
        if tuple(h.strip() for h in header) != FLOW_HEADER:
            raise InputError(f"{path}:1: expected header {','.join(FLOW_HEADER)}, got {','.join(header)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            o, d = row[0].strip(), row[1].strip()
            if not o or not d:
                raise InputError(f"{path}:{lineno}: empty region id")
            try:
                f = float(row[2])
            except ValueError:
                raise InputError(f"{path}:{lineno}: flow {row[2]!r} is not a number") from None
            if not (f >= 0 and math.isfinite(f)):
                raise InputError(f"{path}:{lineno}: flow must be finite and nonnegative, got {row[2]!r}")
            if (o, d) in seen:
                raise InputError(f"{path}:{lineno}: duplicate flow {o} -> {d} (first on line {seen[o, d]})")
            seen[o, d] = lineno
            records.append(FlowRecord(o, d, f))
    return FlowTable.from_records(records)


def symmetric_flows(table: FlowTable) -> tuple[np.ndarray, np.ndarray]:
    """Unordered pairs ``(a < b)`` with their mean two-way flow; a missing direction counts as 0."""
    n = len(table.ids)
    keep = table.src != table.dst
    a, b, f = table.src[keep], table.dst[keep], table.flow[keep]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys, inv = np.unique(lo * n + hi, return_inverse=True)
    total = np.bincount(inv, weights=f, minlength=len(keys))
    return np.column_stack((keys // n, keys % n)), total / 2.0


def percentile_cutoff(values, percentile: float) -> float:
    """Nearest-rank percentile of the positive entries of ``values``."""
    if not 0 < percentile < 100:
        raise InputError(f"percentile must lie in (0, 100), got {percentile}")
    pos = np.sort(np.asarray(values, dtype=float)[np.asarray(values) > 0])
    if pos.size == 0:
        raise InputError("no positive flows to take a percentile of")
    rank = math.ceil(percentile / 100.0 * pos.size)
    return float(pos[max(rank, 1) - 1])


@dataclass
class PrunedNetwork:
    graph: Graph
    ids: tuple[str, ...]  # region id of each retained node
    cutoff: float
    full_graph: Graph


def symmetrize_and_prune(table: FlowTable, cutoff: float | None = None,
                         percentile: float | None = None) -> PrunedNetwork:
    """Link regions whose mean two-way flow strictly exceeds the cutoff; keep the largest component.

    Give either an absolute ``cutoff`` or a ``percentile`` of the positive
    symmetrised flows.
    """
    if (cutoff is None) == (percentile is None):
        raise InputError("give exactly one of cutoff or percentile")
    if len(table) == 0:
        raise InputError("no flow records")
    pairs, f = symmetric_flows(table)
    c = float(cutoff) if cutoff is not None else percentile_cutoff(f, percentile)
    full = Graph(len(table.ids), pairs[f > c])
    g, mapping = largest_component(full)
    ids = [""] * g.n
    for old, new in mapping.items():
        ids[new] = table.ids[old]
    return PrunedNetwork(g, tuple(ids), c, full)


@dataclass
class VillageData:
    graph: Graph
    seeds: tuple[int, ...]
    observed_count: int | None = None
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        for s in self.seeds:
            if not 0 <= s < self.graph.n:
                raise InputError(f"seed {s} is not a node of the {self.graph.n}-node graph")
        for k, col in self.columns.items():
            if len(col) != self.graph.n:
                raise InputError(f"column {k!r} has {len(col)} rows for {self.graph.n} nodes")

    @property
    def treated(self) -> np.ndarray:
        s = np.zeros(self.graph.n, dtype=bool)
        s[list(self.seeds)] = True
        return s


def _int_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def read_directed_reports(path) -> list[tuple[int, int]]:
    out = []
    seen = set()
    for lineno, line in _int_lines(path):
        parts = line.split(",")
        if len(parts) != 2:
            raise InputError(f"{path}:{lineno}: expected 'u,v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
        if u < 0 or v < 0:
            raise InputError(f"{path}:{lineno}: negative node id")
        if u == v:
            raise InputError(f"{path}:{lineno}: self-report at node {u}")
        if (u, v) in seen:
            raise InputError(f"{path}:{lineno}: duplicate report {u} -> {v}")
        seen.add((u, v))
        out.append((u, v))
    return out


def read_seeds(path) -> list[int]:
    seeds = []
    for lineno, line in _int_lines(path):
        try:
            seeds.append(int(line))
        except ValueError:
            raise InputError(f"{path}:{lineno}: seed {line!r} is not an integer") from None
    return seeds


def read_outcomes(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "node":
            raise InputError(f"{path}:1: header must start with 'node'")
        names = [h.strip() for h in header[1:]]
        rows: dict[int, list[float]] = {}
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                node = int(row[0])
                vals = [float(x) for x in row[1:]]
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric entry") from None
            if node in rows:
                raise InputError(f"{path}:{lineno}: node {node} listed twice")
            rows[node] = vals
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise InputError(f"{path}: outcome rows must cover nodes 0..{n - 1} exactly once")
    mat = np.array([rows[i] for i in range(n)], dtype=float).reshape(n, len(names))
    return {name: mat[:, k].copy() for k, name in enumerate(names)}


def load_village(graph_path, seeds_path, outcomes_path=None, n: int | None = None,
                 observed_count: int | None = None, name: str = "") -> VillageData:
    """Read one village: OR-symmetrised survey graph, seed set, optional per-node columns.

    The node count comes from ``n``, else the outcome table, else the largest
    id seen in the graph or seed files.
    """
    reports = read_directed_reports(graph_path)
    seeds = read_seeds(seeds_path)
    columns = read_outcomes(outcomes_path) if outcomes_path is not None else {}
    top = max([max(u, v) for u, v in reports] + seeds, default=-1) + 1
    if n is None:
        n = len(next(iter(columns.values()))) if columns else top
    if top > n:
        raise InputError(f"node id {top - 1} out of range for a {n}-node village")
    if len(set(seeds)) != len(seeds):
        raise InputError(f"{seeds_path}: repeated seed")
    g = Graph(n, [(min(u, v), max(u, v)) for u, v in reports])
    return VillageData(g, tuple(sorted(seeds)), observed_count, columns, name)


def load_manifest(path) -> list[VillageData]:
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON ({e})") from None
    base = path.parent
    out = []
    for k, entry in enumerate(spec.get("villages", [])):
        try:
            v = load_village(
                base / entry["graph"], base / entry["seeds"],
                base / entry["outcomes"] if entry.get("outcomes") else None,
                n=entry.get("nodes"), observed_count=entry.get("observed_count"),
                name=entry.get("name", str(k)),
            )
        except KeyError as e:
            raise InputError(f"{path}: village {k} lacks field {e}") from None
        out.append(v)
    return out
