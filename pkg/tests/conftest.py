import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from netdiff.graph import Graph

# small connected graphs (at most 8 edges) used by the enumeration oracles
CORPUS = {
    "P2": (2, [(0, 1)]),
    "P3": (3, [(0, 1), (1, 2)]),
    "K3": (3, [(0, 1), (1, 2), (0, 2)]),
    "star3": (4, [(0, 1), (0, 2), (0, 3)]),
    "P4": (4, [(0, 1), (1, 2), (2, 3)]),
    "C4": (4, [(0, 1), (1, 2), (2, 3), (0, 3)]),
    "paw": (4, [(0, 1), (1, 2), (0, 2), (2, 3)]),
    "diamond": (4, [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]),
    "K4": (4, [(a, b) for a, b in itertools.combinations(range(4), 2)]),
    "P5": (5, [(0, 1), (1, 2), (2, 3), (3, 4)]),
    "C5": (5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]),
    "house": (5, [(0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (3, 4)]),
    "bowtie": (5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)]),
    "K23": (5, [(a, b) for a in (0, 1) for b in (2, 3, 4)]),
    "C6": (6, [(k, (k + 1) % 6) for k in range(6)]),
    "theta": (6, [(0, 1), (1, 2), (2, 3), (0, 4), (4, 3), (0, 5), (5, 3)]),
    "C8": (8, [(k, (k + 1) % 8) for k in range(8)]),
    "tree8": (9, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6), (3, 7), (4, 8)]),
}

ACCEPTANCE_LINES: list[str] = []


def corpus_graph(name: str) -> Graph:
    n, edges = CORPUS[name]
    return Graph(n, edges)


@pytest.fixture
def path3():
    return Graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def cycle4():
    return Graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])


@pytest.fixture
def triangle():
    return Graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def star3():
    return Graph(4, [(0, 1), (0, 2), (0, 3)])


@st.composite
def graphs(draw, max_nodes=12, min_nodes=1):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = list(itertools.combinations(range(n), 2))
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph(n, [e for e, keep in zip(pairs, mask) if keep])


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
