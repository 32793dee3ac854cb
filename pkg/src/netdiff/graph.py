"""Immutable undirected graphs and the traversal primitives everything else builds on.

Adjacency is stored in compressed (CSR) form with neighbor lists sorted
ascending, so every traversal here is deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from netdiff.errors import InputError

log = logging.getLogger(__name__)

#: Distance / activation-time sentinel for unreachable nodes.
UNREACHABLE = -1

#: Above this node count graph_stats samples BFS sources instead of using all of them.
EXACT_STATS_LIMIT = 20_000


class Graph:
    """Undirected, unweighted simple graph over nodes ``0..n-1``.

    Parameters
    ----------
    n : int
        Node count.
    edges : array_like, shape (m, 2)
        Endpoint pairs in any orientation. Duplicates collapse; self-loops raise.

    Notes
    -----
    ``edges`` is stored canonically (``u < v``, lexicographically sorted), and
    the CSR arrays ``indptr``/``indices`` hold both directions.  ``entry_edge``
    maps every CSR entry back to its row in ``edges``.  All arrays are
    read-only.
    """

    __slots__ = ("n", "edges", "indptr", "indices", "entry_edge", "_keys", "_csr")

    def __init__(self, n, edges=()):
        n = int(n)
        if n < 0:
            raise InputError(f"node count must be nonnegative, got {n}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise InputError(f"edge endpoint out of range for n={n}")
            if np.any(e[:, 0] == e[:, 1]):
                bad = int(e[e[:, 0] == e[:, 1]][0, 0])
                raise InputError(f"self-loop at node {bad}")
            lo = np.minimum(e[:, 0], e[:, 1])
            hi = np.maximum(e[:, 0], e[:, 1])
            keys = np.unique(lo * n + hi)
            e = np.column_stack((keys // n, keys % n))
        else:
            keys = np.empty(0, dtype=np.int64)
            e = np.empty((0, 2), dtype=np.int64)
        m = len(e)
        src = np.concatenate((e[:, 0], e[:, 1]))
        dst = np.concatenate((e[:, 1], e[:, 0]))
        eid = np.concatenate((np.arange(m), np.arange(m)))
        order = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        self.n = n
        self.edges = e
        self.indptr = indptr
        self.indices = dst[order]
        self.entry_edge = eid[order]
        self._keys = keys
        self._csr = None
        for arr in (self.edges, self.indptr, self.indices, self.entry_edge, self._keys):
            arr.flags.writeable = False

    # -- basic queries -------------------------------------------------
    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        _check_node(self, i)
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def adjacency(self) -> list[list[int]]:
        return [self.indices[self.indptr[i] : self.indptr[i + 1]].tolist() for i in range(self.n)]

    def has_edge(self, u: int, v: int) -> bool:
        if u == v:
            return False
        key = min(u, v) * self.n + max(u, v)
        pos = np.searchsorted(self._keys, key)
        return bool(pos < len(self._keys) and self._keys[pos] == key)

    def edge_ids(self, pairs) -> np.ndarray:
        """Row index in ``edges`` for each pair, or -1 when the pair is not an edge."""
        p = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        keys = np.minimum(p[:, 0], p[:, 1]) * self.n + np.maximum(p[:, 0], p[:, 1])
        pos = np.searchsorted(self._keys, keys)
        pos_c = np.minimum(pos, max(len(self._keys) - 1, 0))
        found = (pos < len(self._keys)) & (self._keys[pos_c] == keys) if len(self._keys) else np.zeros(len(keys), bool)
        return np.where(found, pos_c, -1)

    def entry_keys(self) -> np.ndarray:
        """``u*n + v`` for each directed CSR entry ``u -> v`` (ascending)."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        return src * self.n + self.indices

    def to_sparse(self) -> sparse.csr_matrix:
        """Adjacency matrix as a float CSR matrix (cached)."""
        if self._csr is None:
            data = np.ones(len(self.indices))
            self._csr = sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))
        return self._csr

    def subgraph(self, nodes) -> Graph:
        """Induced subgraph on ``nodes`` (relabelled in ascending order)."""
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        keep = (remap[self.edges[:, 0]] >= 0) & (remap[self.edges[:, 1]] >= 0)
        return Graph(len(nodes), remap[self.edges[keep]])

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self._keys, other._keys)

    def __hash__(self):
        return hash((self.n, self._keys.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.edge_count})"

    def __getstate__(self):
        return {"n": self.n, "edges": np.asarray(self.edges)}

    def __setstate__(self, state):
        self.__init__(state["n"], state["edges"])


@dataclass(frozen=True)
class GraphStats:
    n: int
    edge_count: int
    diameter: int
    mean_degree: float
    min_degree: int
    max_degree: int
    mean_clustering: float
    avg_path_length: float
    component_count: int
    path_sample: int | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _check_node(g: Graph, i) -> None:
    if not (0 <= int(i) < g.n):
        raise InputError(f"node {i} out of range [0, {g.n})")


def bfs_levels(indptr, indices, sources, max_depth=None, entry_mask=None) -> np.ndarray:
    """Multi-source breadth-first search over CSR arrays.

    Returns the hop distance to the nearest source (``UNREACHABLE`` if none
    within ``max_depth``).  ``entry_mask`` optionally restricts which directed
    CSR entries may be traversed; this is how a percolation is applied.
    """
    n = len(indptr) - 1
    dist = np.full(n, UNREACHABLE, dtype=np.int64)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    dist[frontier] = 0
    depth = 0
    while frontier.size and (max_depth is None or depth < max_depth):
        starts = indptr[frontier]
        counts = indptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        ends = np.cumsum(counts)
        offs = np.repeat(starts - ends + counts, counts) + np.arange(total)
        if entry_mask is not None:
            offs = offs[entry_mask[offs]]
        nbrs = indices[offs]
        nbrs = nbrs[dist[nbrs] == UNREACHABLE]
        if nbrs.size == 0:
            break
        frontier = np.unique(nbrs)
        depth += 1
        dist[frontier] = depth
    return dist


def distances_from(g: Graph, source: int) -> np.ndarray:
    """Hop distance from ``source`` to every node; ``UNREACHABLE`` (-1) if disconnected."""
    _check_node(g, source)
    return bfs_levels(g.indptr, g.indices, [source])


def ball(g: Graph, center: int, radius: int) -> set[int]:
    """Nodes within ``radius`` hops of ``center``."""
    _check_node(g, center)
    if radius < 0:
        raise InputError(f"radius must be nonnegative, got {radius}")
    dist = bfs_levels(g.indptr, g.indices, [center], max_depth=int(radius))
    return set(np.flatnonzero(dist >= 0).tolist())


def all_distances(g: Graph, sources=None, chunk: int = 256):
    """Yield ``(source_block, distance_block)`` pairs; unreachable entries are ``inf``."""
    csr = g.to_sparse()
    srcs = np.arange(g.n) if sources is None else np.asarray(sources, dtype=np.int64)
    for start in range(0, len(srcs), chunk):
        block = srcs[start : start + chunk]
        d = csgraph.shortest_path(csr, method="D", unweighted=True, directed=False, indices=block)
        yield block, np.atleast_2d(d)


def triangles(g: Graph) -> np.ndarray:
    """Number of triangles through each node."""
    a = g.to_sparse()
    return np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() / 2.0


def clustering(g: Graph) -> np.ndarray:
    """Local clustering per node; nodes with degree below 2 get 0."""
    deg = g.degrees.astype(float)
    tri = triangles(g)
    out = np.zeros(g.n)
    ok = deg >= 2
    out[ok] = 2.0 * tri[ok] / (deg[ok] * (deg[ok] - 1.0))
    return out


def graph_stats(g: Graph, path_length_sample: int | None = None, rng=None) -> GraphStats:
    """Summary statistics (diameter, degrees, clustering, path length, components).

    With ``path_length_sample`` unset and ``n <= EXACT_STATS_LIMIT`` every node
    is a BFS source.  Otherwise distances come from that many uniformly sampled
    sources (1000 when the graph is too large and no size was given), so
    diameter and average path length become estimates.  Average path length
    is taken over reachable ordered pairs only.
    """
    if g.n == 0:
        raise InputError("graph_stats needs a nonempty graph")
    sample = path_length_sample
    if sample is None and g.n > EXACT_STATS_LIMIT:
        sample = 1000
        log.info("graph_stats: n=%d above exact limit, sampling %d BFS sources", g.n, sample)
    if sample is not None:
        sample = min(int(sample), g.n)
        rng = np.random.default_rng() if rng is None else rng
        sources = np.sort(rng.choice(g.n, size=sample, replace=False))
    else:
        sources = None

    diameter = 0
    total = 0.0
    pairs = 0
    for block, d in all_distances(g, sources):
        finite = np.isfinite(d)
        diameter = max(diameter, int(d[finite].max()))
        total += float(d[finite].sum())
        pairs += int(finite.sum()) - len(block)
    deg = g.degrees
    ncomp, _ = csgraph.connected_components(g.to_sparse(), directed=False)
    return GraphStats(
        n=g.n,
        edge_count=g.edge_count,
        diameter=diameter,
        mean_degree=float(deg.mean()),
        min_degree=int(deg.min()),
        max_degree=int(deg.max()),
        mean_clustering=float(clustering(g).mean()),
        avg_path_length=total / pairs if pairs else 0.0,
        component_count=int(ncomp),
        path_sample=sample,
    )


def union(a: Graph, b: Graph) -> Graph:
    """Graph on the same nodes whose edge set is the union of both edge sets."""
    if a.n != b.n:
        raise InputError(f"cannot union graphs of sizes {a.n} and {b.n}")
    if b.edge_count == 0:
        return a
    if a.edge_count == 0:
        return b
    return Graph(a.n, np.vstack((a.edges, b.edges)))


def difference(a: Graph, b: Graph) -> Graph:
    """Edges of ``a`` that are not edges of ``b``."""
    if a.n != b.n:
        raise InputError(f"cannot subtract graphs of sizes {a.n} and {b.n}")
    keep = b.edge_ids(a.edges) < 0
    return Graph(a.n, a.edges[keep])


def components(g: Graph) -> np.ndarray:
    """Component label per node."""
    _, labels = csgraph.connected_components(g.to_sparse(), directed=False)
    return labels


def largest_component(g: Graph) -> tuple[Graph, dict[int, int]]:
    """Induced subgraph on the largest connected component and its old->new node map.

    Ties between equally large components go to the one holding the smallest
    original node index.
    """
    if g.n == 0:
        raise InputError("largest_component needs a nonempty graph")
    labels = components(g)
    sizes = np.bincount(labels)
    first_min = np.full(len(sizes), g.n)
    np.minimum.at(first_min, labels, np.arange(g.n))
    best = max(range(len(sizes)), key=lambda c: (sizes[c], -first_min[c]))
    nodes = np.flatnonzero(labels == best)
    mapping = {int(old): new for new, old in enumerate(nodes)}
    return g.subgraph(nodes), mapping


# -- edge-list persistence ---------------------------------------------------

def read_edge_list(path, n: int | None = None) -> Graph:
    """Load an undirected edge list (``u,v`` per line, 0-based).

    Lines starting with ``#`` are comments; a ``# n=<count>`` comment fixes the
    node count so trailing isolated nodes survive a round trip.  Duplicate
    pairs (in either orientation) and self-loops are rejected.
    """
    seen: set[tuple[int, int]] = set()
    pairs = []
    declared_n = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("n="):
                    declared_n = int(body[2:])
                continue
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
                raise InputError(f"{path}:{lineno}: self-loop at node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InputError(f"{path}:{lineno}: duplicate edge {key}")
            seen.add(key)
            pairs.append(key)
    top = max((v for _, v in pairs), default=-1) + 1
    size = n if n is not None else (declared_n if declared_n is not None else top)
    if size < top:
        raise InputError(f"{path}: edge endpoint {top - 1} exceeds node count {size}")
    return Graph(size, pairs)


def write_edge_list(g: Graph, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# n={g.n}\n")
        for u, v in g.edges.tolist():
            fh.write(f"{u},{v}\n")
