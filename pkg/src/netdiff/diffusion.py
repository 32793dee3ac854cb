"""Percolation sampling and one-period SIR diffusion.

A node activated at step ``t`` transmits only at step ``t + 1`` and is then
removed.  Pre-sampling which links would transmit (a percolation) turns the
diffusion into a deterministic breadth-first reachability computation, so two
runs that share a percolation differ only through their seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from netdiff.errors import InputError
from netdiff.graph import UNREACHABLE, Graph, bfs_levels, union

NEVER = UNREACHABLE


class Mode(str, Enum):
    UNDIRECTED = "undirected"
    DIRECTED = "directed"


@dataclass(frozen=True, eq=False)
class Percolation:
    """Which links would transmit.

    ``bits`` holds one indicator per edge (undirected mode) or one per
    directed CSR entry ``u -> v`` of ``graph`` (directed mode).
    """

    graph: Graph
    mode: Mode
    bits: np.ndarray

    def __post_init__(self):
        mode = Mode(self.mode)
        object.__setattr__(self, "mode", mode)
        want = self.graph.edge_count if mode is Mode.UNDIRECTED else 2 * self.graph.edge_count
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (want,):
            raise InputError(f"{mode.value} percolation needs {want} indicators, got {bits.shape}")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def entry_pass(self) -> np.ndarray:
        """Pass indicator for every directed CSR entry."""
        if self.mode is Mode.UNDIRECTED:
            return self.bits[self.graph.entry_edge]
        return self.bits

    def passes(self, u: int, v: int) -> bool:
        """Whether activation at ``u`` would reach its neighbour ``v``."""
        g = self.graph
        row = g.indices[g.indptr[u] : g.indptr[u + 1]]
        pos = np.searchsorted(row, v)
        if pos >= len(row) or row[pos] != v:
            raise InputError(f"({u}, {v}) is not an edge")
        return bool(self.entry_pass[g.indptr[u] + pos])

    def passing_count(self) -> int:
        return int(self.bits.sum())

    def restrict(self, sub: Graph) -> Percolation:
        """The same percolation seen on a subgraph whose edges all belong to ``graph``."""
        if sub.n != self.graph.n:
            raise InputError("subgraph node count differs")
        if self.mode is Mode.UNDIRECTED:
            ids = self.graph.edge_ids(sub.edges)
            if np.any(ids < 0):
                raise InputError("subgraph has edges outside the percolated graph")
            return Percolation(sub, self.mode, self.bits[ids])
        keys = self.graph.entry_keys()
        pos = np.searchsorted(keys, sub.entry_keys())
        if len(pos) and (pos.max() >= len(keys) or np.any(keys[pos] != sub.entry_keys())):
            raise InputError("subgraph has edges outside the percolated graph")
        return Percolation(sub, self.mode, self.bits[pos])


def sample_percolation(g: Graph, p: float, mode=Mode.UNDIRECTED, rng=None) -> Percolation:
    """Independent Bernoulli(``p``) pass indicators per edge or per directed pair."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"p must lie in [0, 1], got {p}")
    mode = Mode(mode)
    size = g.edge_count if mode is Mode.UNDIRECTED else 2 * g.edge_count
    return Percolation(g, mode, rng.random(size) < p)


@dataclass(frozen=True, eq=False)
class DiffusionTrace:
    """Activation time per node (``NEVER`` if not reached) and new activations per step."""

    activation_time: np.ndarray
    new_by_step: np.ndarray
    seeds: tuple[int, ...]
    T: int
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.activation_time)

    def ever_activated(self, t: int) -> np.ndarray:
        """Boolean mask of nodes activated at or before step ``t``."""
        a = self.activation_time
        return (a >= 0) & (a <= t)

    def ever_counts(self) -> np.ndarray:
        """Cumulative number of ever-activated nodes for ``t = 0..T``."""
        return np.cumsum(self.new_by_step)

    def susceptible_counts(self) -> np.ndarray:
        return self.n - self.ever_counts()

    def table(self) -> list[tuple[int, int]]:
        return list(enumerate(self.activation_time.tolist()))

    def __eq__(self, other):
        if not isinstance(other, DiffusionTrace):
            return NotImplemented
        return (
            self.T == other.T
            and self.seeds == other.seeds
            and np.array_equal(self.activation_time, other.activation_time)
            and np.array_equal(self.new_by_step, other.new_by_step)
        )


def _check_seeds(n: int, seeds) -> tuple[int, ...]:
    if isinstance(seeds, (int, np.integer)):
        seeds = [seeds]
    s = tuple(sorted({int(x) for x in seeds}))
    if not s:
        raise InputError("seed set is empty")
    if s[0] < 0 or s[-1] >= n:
        raise InputError(f"seed out of range [0, {n})")
    return s


def _trace(act: np.ndarray, seeds, T: int, **meta) -> DiffusionTrace:
    new = np.bincount(act[act >= 0], minlength=T + 1)[: T + 1]
    act.flags.writeable = False
    new.flags.writeable = False
    return DiffusionTrace(act, new, seeds, T, meta)


def run_diffusion(perc: Percolation, seeds, T: int) -> DiffusionTrace:
    """Deterministic SIR spread from ``seeds`` through the passing links of ``perc``."""
    if T < 0:
        raise InputError(f"T must be nonnegative, got {T}")
    g = perc.graph
    s = _check_seeds(g.n, seeds)
    act = bfs_levels(g.indptr, g.indices, s, max_depth=T, entry_mask=perc.entry_pass)
    return _trace(act, s, T)


@dataclass(frozen=True)
class DecaySpec:
    """Passing probability ``p0 / t**lam`` at step ``t >= 1``; ``lam = 0`` is constant."""

    p0: float
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise InputError(f"decay exponent must be nonnegative, got {self.lam}")
        if not 0.0 <= self.p0 <= 1.0:
            raise InputError(f"p(1) = {self.p0} is not a probability")

    def p(self, t: int) -> float:
        return self.p0 / float(t) ** self.lam


def spread_with_uniforms(g: Graph, seeds, T: int, decay: DecaySpec, uniforms: np.ndarray,
                         mode=Mode.UNDIRECTED) -> DiffusionTrace:
    """Step-by-step spread where link ``e`` first contacted at step ``t`` passes iff ``U_e < p(t)``.

    A link is only ever contacted once (its source is removed right after), so
    comparing a pre-drawn uniform at first contact is the same as flipping a
    fresh coin then.  Sharing ``uniforms`` across graphs gives common random
    numbers.
    """
    mode = Mode(mode)
    s = _check_seeds(g.n, seeds)
    if T < 0:
        raise InputError(f"T must be nonnegative, got {T}")
    entry_u = uniforms[g.entry_edge] if mode is Mode.UNDIRECTED else uniforms
    act = np.full(g.n, NEVER, dtype=np.int64)
    frontier = np.asarray(s, dtype=np.int64)
    act[frontier] = 0
    indptr, indices = g.indptr, g.indices
    for t in range(1, T + 1):
        starts = indptr[frontier]
        counts = indptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        offs = np.repeat(starts - np.cumsum(counts) + counts, counts) + np.arange(total)
        tgt = indices[offs]
        hit = (act[tgt] == NEVER) & (entry_u[offs] < decay.p(t))
        frontier = np.unique(tgt[hit])
        if frontier.size == 0:
            break
        act[frontier] = t
    return _trace(act, s, T, decay=(decay.p0, decay.lam))


def run_diffusion_decaying(g: Graph, seeds, T: int, decay: DecaySpec, rng, mode=Mode.UNDIRECTED) -> DiffusionTrace:
    """Diffusion whose passing probability decays as ``p0 / t**lam``."""
    mode = Mode(mode)
    size = g.edge_count if mode is Mode.UNDIRECTED else 2 * g.edge_count
    return spread_with_uniforms(g, seeds, T, decay, rng.random(size), mode)


def jaccard_curve(a: DiffusionTrace, b: DiffusionTrace, T: int | None = None) -> np.ndarray:
    """Jaccard overlap of the ever-activated sets for ``t = 0..T`` (NaN where both are empty)."""
    if a.n != b.n:
        raise InputError(f"traces cover {a.n} and {b.n} nodes")
    T = min(a.T, b.T) if T is None else T
    ta = np.where(a.activation_time >= 0, a.activation_time, T + 1)
    tb = np.where(b.activation_time >= 0, b.activation_time, T + 1)
    # a node is in the intersection from max(ta, tb) on, in the union from min(ta, tb) on
    inter = np.cumsum(np.bincount(np.maximum(ta, tb), minlength=T + 2)[: T + 1])
    uni = np.cumsum(np.bincount(np.minimum(ta, tb), minlength=T + 2)[: T + 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(uni > 0, inter / np.maximum(uni, 1), np.nan)


def jaccard_overlap(a: DiffusionTrace, b: DiffusionTrace, t: int) -> float:
    """``|A_t & B_t| / |A_t | B_t|`` for the ever-activated sets at ``t``; NaN when the union is empty."""
    if a.n != b.n:
        raise InputError(f"traces cover {a.n} and {b.n} nodes")
    ea, eb = a.ever_activated(t), b.ever_activated(t)
    u = int((ea | eb).sum())
    if u == 0:
        return float("nan")
    return int((ea & eb).sum()) / u


def _check_run_graph(trace: DiffusionTrace, L: Graph, E: Graph, perc: Percolation) -> None:
    if not (trace.n == L.n == E.n == perc.graph.n):
        raise InputError("trace, L, E and percolation disagree on node count")
    if union(L, E) != perc.graph:
        raise InputError("percolation graph is not L union E")


def attribute_regions(trace: DiffusionTrace, L: Graph, E: Graph, perc: Percolation) -> np.ndarray:
    """Catchment-region label per node (-1 if never activated).

    Seeds form region 0.  A node activated at ``t`` joins the region of its
    lowest-index ``L``-parent (an ``L``-neighbour activated at ``t - 1`` whose
    link passes towards it).  A node with no such parent was reached only
    through an error link and opens a new region.
    """
    _check_run_graph(trace, L, E, perc)
    g = perc.graph
    act = trace.activation_time
    src = np.repeat(np.arange(g.n), g.degrees)
    dst = g.indices
    is_l = L.edge_ids(g.edges)[g.entry_edge] >= 0
    parent = (act[src] >= 0) & (act[dst] == act[src] + 1) & perc.entry_pass & is_l
    best = np.full(g.n, g.n, dtype=np.int64)
    np.minimum.at(best, dst[parent], src[parent])

    region = np.full(g.n, -1, dtype=np.int64)
    region[act == 0] = 0
    next_id = 1
    order = np.argsort(act, kind="stable")
    order = order[act[order] > 0]
    for t in range(1, trace.T + 1):
        nodes = order[act[order] == t]
        if nodes.size == 0:
            continue
        inherit = best[nodes] < g.n
        region[nodes[inherit]] = region[best[nodes[inherit]]]
        fresh = nodes[~inherit]
        region[fresh] = np.arange(next_id, next_id + len(fresh))
        next_id += len(fresh)
    return region


def count_jumps(trace: DiffusionTrace, L: Graph, E: Graph, perc: Percolation) -> np.ndarray:
    """New catchment regions opened through error links at each step ``t = 0..T``."""
    region = attribute_regions(trace, L, E, perc)
    act = trace.activation_time
    labels = region[region > 0]
    start = np.full(labels.max() + 1 if labels.size else 1, trace.T + 1)
    np.minimum.at(start, labels, act[region > 0])
    return np.bincount(start[1:], minlength=trace.T + 2)[: trace.T + 1]


def activation_thresholds(g: Graph, seeds, T: int, uniforms: np.ndarray) -> np.ndarray:
    """Smallest ``p`` at which each node is activated by step ``T`` under shared uniforms.

    With link ``e`` passing iff ``U_e < p``, a node is reached within ``T``
    steps iff some path of at most ``T`` links has all its uniforms below
    ``p``.  The threshold is therefore the hop-limited minimax path value,
    found by ``T`` rounds of relaxation.  Seeds get ``-inf``; nodes out of
    reach get ``+inf``.  The activated count at ``p`` is ``(thr < p).sum()``.
    """
    s = _check_seeds(g.n, seeds)
    b = np.full(g.n, np.inf)
    b[list(s)] = -np.inf
    eu = uniforms[g.entry_edge]
    # row v of the symmetric CSR lists v's neighbours, so a per-row minimum
    # collects the best offer arriving at v
    has = g.degrees > 0
    starts = g.indptr[:-1][has]
    for _ in range(T):
        offers = np.minimum.reduceat(np.maximum(b[g.indices], eu), starts) if starts.size else starts
        nb = b.copy()
        nb[has] = np.minimum(b[has], offers)
        if np.array_equal(nb, b):
            break
        b = nb
    return b
