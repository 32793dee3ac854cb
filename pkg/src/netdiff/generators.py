"""Graph generators: lattice-plus-random geometric graphs, error graphs, regular graphs.

``generate_lattice_random`` builds the observed graph used in the Monte Carlo
replications.  ``generate_error_graph`` draws the unobserved links that are
added on top of it, optionally restricted to a local support around each node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from netdiff.errors import InputError
from netdiff.graph import Graph, all_distances, components

# relative slack on the linking radius: lattice neighbours sit at exactly r
RADIUS_RTOL = 1e-9


@dataclass(frozen=True)
class LatentPositions:
    coords: np.ndarray  # (n, q) in [0, 1]

    @property
    def q(self) -> int:
        return self.coords.shape[1]

    def __len__(self):
        return len(self.coords)

    def write(self, path) -> None:
        q = self.q
        with Path(path).open("w") as fh:
            fh.write("node," + ",".join(f"x{k + 1}" for k in range(q)) + "\n")
            for i, row in enumerate(self.coords):
                fh.write(f"{i}," + ",".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def read(cls, path) -> LatentPositions:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        order = np.argsort(data[:, 0], kind="stable")
        return cls(data[order, 1:])


class SupportRule(str, Enum):
    ALL_PAIRS = "all-pairs"
    LATENT_NEAREST = "latent-nearest"
    HOP_NEAREST = "hop-nearest"


@dataclass(frozen=True)
class ErrorGraphSpec:
    """Error-link law: each admissible pair is linked with probability ``beta``.

    ``delta`` is the share of nodes each node may link to; ``delta == 1``
    means every pair is admissible.
    """

    beta: float
    delta: float = 1.0
    support_rule: SupportRule = SupportRule.ALL_PAIRS

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InputError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 < self.delta <= 1.0:
            raise InputError(f"delta must lie in (0, 1], got {self.delta}")
        rule = SupportRule(self.support_rule)
        if self.delta == 1.0:
            rule = SupportRule.ALL_PAIRS
        elif rule is SupportRule.ALL_PAIRS:
            raise InputError("delta < 1 needs a latent-nearest or hop-nearest support rule")
        object.__setattr__(self, "support_rule", rule)


def lattice_radius(q: int, n_side: int) -> float:
    h = 1.0 / (n_side - 1)
    return max(h, math.sqrt(q) / 2.0 * h)


def generate_lattice_random(n: int, q: int, n_side: int, rng) -> tuple[Graph, LatentPositions]:
    """Regular ``n_side**q`` lattice on ``[0,1]^q`` plus uniform extra nodes, linked by radius.

    Lattice nodes come first in row-major order (last coordinate fastest);
    the ``n - n_side**q`` random nodes follow.  Every pair within Euclidean
    distance ``max(1/(n_side-1), sqrt(q)/2/(n_side-1))`` is linked, which
    keeps the graph connected.
    """
    if n_side < 2:
        raise InputError(f"n_side must be at least 2, got {n_side}")
    if q < 1:
        raise InputError(f"q must be positive, got {q}")
    n_lat = n_side**q
    if n < n_lat:
        raise InputError(f"n={n} is smaller than the lattice size {n_side}^{q}={n_lat}")
    grid = np.indices((n_side,) * q).reshape(q, -1).T / (n_side - 1)
    extra = rng.random((n - n_lat, q))
    coords = np.vstack((grid, extra))
    r = lattice_radius(q, n_side)
    pairs = cKDTree(coords).query_pairs(r * (1.0 + RADIUS_RTOL), output_type="ndarray")
    g = Graph(n, pairs)
    if n > 1 and np.any(components(g) != 0):
        raise RuntimeError("lattice-random graph came out disconnected")
    return g, LatentPositions(coords)


def _nearest_sets(rank_rows, k: int) -> np.ndarray:
    """Admissible pairs from per-node neighbourhoods (union over both endpoints)."""
    rows = []
    for i, nbrs in rank_rows:
        nb = nbrs[:k]
        rows.append(np.column_stack((np.full(len(nb), i), nb)))
    pairs = np.vstack(rows) if rows else np.empty((0, 2), dtype=np.int64)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    return np.unique(np.column_stack((lo, hi)), axis=0)


def _ranked_by_latent(coords: np.ndarray, chunk: int = 256):
    n = len(coords)
    for start in range(0, n, chunk):
        block = np.arange(start, min(start + chunk, n))
        d = np.sqrt(((coords[block, None, :] - coords[None, :, :]) ** 2).sum(-1))
        d[np.arange(len(block)), block] = -1.0
        order = np.argsort(d, axis=1, kind="stable")
        for row, i in enumerate(block):
            yield int(i), order[row, 1:]


def _ranked_by_hops(base: Graph):
    for block, d in all_distances(base):
        d = d.copy()
        d[np.arange(len(block)), block] = -1.0
        order = np.argsort(d, axis=1, kind="stable")
        for row, i in enumerate(block):
            reach = np.isfinite(d[row, order[row]])
            yield int(i), order[row, 1:][reach[1:]]


def admissible_pairs(n: int, spec: ErrorGraphSpec, base=None, positions=None) -> np.ndarray | None:
    """Explicit admissible pair list, or ``None`` when every pair is admissible."""
    if spec.support_rule is SupportRule.ALL_PAIRS:
        return None
    k = math.ceil(spec.delta * n)
    if spec.support_rule is SupportRule.LATENT_NEAREST:
        if positions is None:
            raise InputError("latent-nearest support needs latent positions")
        if len(positions) != n:
            raise InputError("positions do not match node count")
        return _nearest_sets(_ranked_by_latent(np.asarray(positions.coords)), k)
    if base is None:
        raise InputError("hop-nearest support needs the base graph")
    if base.n != n:
        raise InputError("base graph does not match node count")
    return _nearest_sets(_ranked_by_hops(base), k)


def sample_uniform_pairs(n: int, count: int, rng) -> np.ndarray:
    """``count`` distinct unordered pairs drawn uniformly from all ``C(n, 2)`` pairs."""
    keys = np.empty(0, dtype=np.int64)
    while len(keys) < count:
        need = count - len(keys)
        u = rng.integers(0, n, size=need)
        v = rng.integers(0, n - 1, size=need)
        v = v + (v >= u)
        new = np.minimum(u, v) * n + np.maximum(u, v)
        merged = np.concatenate((keys, new))
        _, first = np.unique(merged, return_index=True)
        # keep draw order so the kept set does not depend on key values
        keys = merged[np.sort(first)]
    return np.column_stack((keys // n, keys % n))


def generate_error_graph(n: int, spec: ErrorGraphSpec, base: Graph | None = None,
                         positions: LatentPositions | None = None, rng=None,
                         admissible: np.ndarray | None = None) -> Graph:
    """Independent Bernoulli(``beta``) links over the admissible pairs.

    ``admissible`` may be passed precomputed (from :func:`admissible_pairs`)
    to avoid rebuilding the support on every draw.
    """
    if rng is None:
        raise InputError("generate_error_graph needs an rng")
    if spec.beta == 0.0 or n < 2:
        return Graph(n)
    if admissible is None:
        admissible = admissible_pairs(n, spec, base, positions)
    if admissible is None:
        total = n * (n - 1) // 2
        count = int(rng.binomial(total, spec.beta))
        return Graph(n, sample_uniform_pairs(n, count, rng))
    keep = rng.random(len(admissible)) < spec.beta
    return Graph(n, admissible[keep])


def generate_random_regular(n: int, d: int, rng, max_tries: int = 10_000) -> Graph:
    """Simple ``d``-regular graph by configuration-model pairing.

    A pairing with any self-loop or repeated edge is discarded whole and redrawn.
    """
    if d < 0 or d >= n:
        raise InputError(f"need 0 <= d < n, got d={d}, n={n}")
    if (n * d) % 2:
        raise InputError(f"n*d must be even, got n={n}, d={d}")
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    for _ in range(max_tries):
        perm = rng.permutation(stubs).reshape(-1, 2)
        if np.any(perm[:, 0] == perm[:, 1]):
            continue
        lo = np.minimum(perm[:, 0], perm[:, 1])
        hi = np.maximum(perm[:, 0], perm[:, 1])
        if len(np.unique(lo * n + hi)) != len(perm):
            continue
        return Graph(n, perm)
    raise RuntimeError(f"no simple {d}-regular pairing found in {max_tries} tries")


def drop_links(g: Graph, beta_drop: float, rng) -> Graph:
    """Remove each edge independently with probability ``beta_drop``."""
    if not 0.0 <= beta_drop <= 1.0:
        raise InputError(f"beta_drop must lie in [0, 1], got {beta_drop}")
    keep = rng.random(g.edge_count) >= beta_drop
    if keep.all():
        return g
    return Graph(g.n, g.edges[keep])
