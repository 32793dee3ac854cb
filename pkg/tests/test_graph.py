import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import graphs
from netdiff import InputError
from netdiff.graph import (
    UNREACHABLE,
    Graph,
    ball,
    distances_from,
    graph_stats,
    largest_component,
    read_edge_list,
    union,
    write_edge_list,
)
from oracles import bfs_distances


def test_edges_are_canonical_and_deduplicated():
    g = Graph(4, [(2, 1), (1, 2), (3, 0)])
    assert g.edges.tolist() == [[0, 3], [1, 2]]
    assert g.neighbors(1).tolist() == [2]
    assert g.degrees.tolist() == [1, 1, 1, 1]


def test_rejects_self_loops_and_out_of_range():
    with pytest.raises(InputError, match="self-loop"):
        Graph(3, [(1, 1)])
    with pytest.raises(InputError):
        Graph(2, [(0, 2)])
    with pytest.raises(InputError):
        distances_from(Graph(2), 5)


def test_arrays_are_read_only():
    g = Graph(3, [(0, 1)])
    with pytest.raises(ValueError):
        g.indices[0] = 2


def test_distances_path(path3):
    assert distances_from(path3, 0).tolist() == [0, 1, 2]


def test_distances_disconnected():
    g = Graph(4, [(0, 1), (2, 3)])
    assert distances_from(g, 0).tolist() == [0, 1, UNREACHABLE, UNREACHABLE]


def test_distances_cycle(cycle4):
    assert distances_from(cycle4, 0).tolist() == [0, 1, 2, 1]


def test_ball_cases(path3, cycle4):
    assert ball(path3, 1, 0) == {1}
    assert ball(path3, 0, 1) == {0, 1}
    assert ball(cycle4, 0, 1) == {0, 1, 3}


def test_stats_triangle(triangle):
    s = graph_stats(triangle)
    assert (s.diameter, s.mean_degree, s.mean_clustering) == (1, 2.0, 1.0)


def test_stats_path(path3):
    s = graph_stats(path3)
    assert s.diameter == 2
    assert s.mean_degree == pytest.approx(4 / 3)
    assert s.mean_clustering == 0.0
    # ordered reachable pairs: 1,2,1,1,2,1
    assert s.avg_path_length == pytest.approx(8 / 6)


def test_stats_star(star3):
    s = graph_stats(star3)
    assert (s.diameter, s.max_degree, s.mean_clustering) == (2, 3, 0.0)


def test_stats_ignore_unreachable_pairs():
    s = graph_stats(Graph(4, [(0, 1), (2, 3)]))
    assert s.avg_path_length == 1.0
    assert s.component_count == 2


def test_union_cases(path3):
    assert union(path3, Graph(3)) == path3
    assert union(path3, path3) == path3
    assert union(Graph(3, [(0, 1)]), Graph(3, [(1, 2)])) == path3


def test_largest_component_cases(triangle):
    g, mapping = largest_component(triangle)
    assert g == triangle and mapping == {0: 0, 1: 1, 2: 2}
    g, _ = largest_component(Graph(4, [(0, 1), (1, 2), (0, 2)]))
    assert g == triangle
    g, mapping = largest_component(Graph(5, [(0, 1), (2, 3), (3, 4)]))
    assert g == Graph(3, [(0, 1), (1, 2)])
    assert mapping == {2: 0, 3: 1, 4: 2}


def test_edge_list_round_trip(tmp_path):
    g = Graph(6, [(0, 1), (1, 4)])
    write_edge_list(g, tmp_path / "g.csv")
    assert read_edge_list(tmp_path / "g.csv") == g
    assert read_edge_list(tmp_path / "g.csv").n == 6


@pytest.mark.parametrize("body,msg", [
    ("0,1\n1,0\n", "duplicate"),
    ("0,0\n", "self-loop"),
    ("0;1\n", "expected"),
    ("a,1\n", "non-integer"),
])
def test_edge_list_errors_name_the_line(tmp_path, body, msg):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(InputError, match=msg):
        read_edge_list(p)


@given(graphs())
def test_distances_match_reference_bfs(g):
    for s in range(g.n):
        assert distances_from(g, s).tolist() == bfs_distances(g.n, g.edges.tolist(), s)


@given(graphs(min_nodes=2))
def test_distance_differs_by_at_most_one_along_edges(g):
    d = distances_from(g, 0)
    for u, v in g.edges:
        if d[u] >= 0:
            assert d[v] >= 0 and abs(d[u] - d[v]) <= 1


@given(graphs(), st.integers(0, 5))
def test_balls_nest_and_reach_component(g, r):
    assert ball(g, 0, r) <= ball(g, 0, r + 1)
    comp = set(np.flatnonzero(distances_from(g, 0) >= 0).tolist())
    assert ball(g, 0, g.n) == comp


@settings(max_examples=50)
@given(st.data())
def test_union_is_a_set_union(data):
    a = data.draw(graphs(max_nodes=8, min_nodes=8))
    b = data.draw(graphs(max_nodes=8, min_nodes=8))
    c = data.draw(graphs(max_nodes=8, min_nodes=8))
    assert union(a, b) == union(b, a)
    assert union(union(a, b), c) == union(a, union(b, c))
    assert union(a, a) == a
    want = {tuple(e) for e in a.edges.tolist()} | {tuple(e) for e in b.edges.tolist()}
    assert {tuple(e) for e in union(a, b).edges.tolist()} == want


@given(graphs(min_nodes=2))
def test_largest_component_preserves_adjacency(g):
    sub, mapping = largest_component(g)
    inv = {new: old for old, new in mapping.items()}
    for u, v in sub.edges:
        assert g.has_edge(inv[u], inv[v])
    for u, v in g.edges:
        if u in mapping and v in mapping:
            assert sub.has_edge(mapping[u], mapping[v])
