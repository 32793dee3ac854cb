import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiff import InputError
from netdiff.generators import (
    ErrorGraphSpec,
    LatentPositions,
    admissible_pairs,
    drop_links,
    generate_error_graph,
    generate_lattice_random,
    generate_random_regular,
    lattice_radius,
)
from netdiff.graph import Graph, ball, components, distances_from


def test_four_node_square_is_a_cycle():
    g, pos = generate_lattice_random(4, 2, 2, np.random.default_rng(0))
    assert g == Graph(4, [(0, 1), (1, 3), (3, 2), (2, 0)])
    assert pos.coords.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def test_lattice_radius_rule():
    assert lattice_radius(2, 2) == 1.0
    assert lattice_radius(4, 7) == pytest.approx(1 / 6)
    assert lattice_radius(9, 3) == pytest.approx(1.5 * 0.5)


def test_lattice_nodes_precede_random_nodes():
    g, pos = generate_lattice_random(30, 2, 5, np.random.default_rng(1))
    grid = pos.coords[:25] * 4
    assert np.allclose(grid, np.round(grid))
    assert tuple(grid[1]) == (0.0, 1.0)


@pytest.mark.parametrize("n,q,n_side", [(30, 2, 5), (200, 2, 10), (100, 3, 4), (300, 4, 3)])
def test_lattice_random_is_connected(n, q, n_side):
    g, _ = generate_lattice_random(n, q, n_side, np.random.default_rng(n))
    assert np.all(components(g) == 0)


def test_lattice_rejects_bad_sizes():
    with pytest.raises(InputError):
        generate_lattice_random(10, 2, 5, np.random.default_rng(0))
    with pytest.raises(InputError):
        generate_lattice_random(10, 2, 1, np.random.default_rng(0))


def test_positions_round_trip(tmp_path):
    pos = LatentPositions(np.random.default_rng(0).random((5, 3)))
    pos.write(tmp_path / "p.csv")
    assert np.array_equal(LatentPositions.read(tmp_path / "p.csv").coords, pos.coords)


def test_error_graph_trivial_cases():
    rng = np.random.default_rng(0)
    assert generate_error_graph(50, ErrorGraphSpec(0.0), rng=rng).edge_count == 0
    assert generate_error_graph(3, ErrorGraphSpec(1.0), rng=rng) == Graph(3, [(0, 1), (1, 2), (0, 2)])


def test_error_graph_edge_count_is_binomial():
    n, beta, draws = 4000, 1 / 40000, 2000
    rng = np.random.default_rng(11)
    counts = np.array([generate_error_graph(n, ErrorGraphSpec(beta), rng=rng).edge_count for _ in range(draws)])
    pairs = n * (n - 1) // 2
    mean, var = pairs * beta, pairs * beta * (1 - beta)
    assert mean == pytest.approx(199.95)
    assert abs(counts.mean() - mean) < 3 * math.sqrt(var / draws)
    # sample variance of a binomial: sd of s^2 is about var*sqrt(2/(draws-1))
    assert abs(counts.var(ddof=1) - var) < 3 * var * math.sqrt(2 / (draws - 1))


def test_restricted_support_edge_count_is_binomial():
    base = Graph(40, [(k, k + 1) for k in range(39)])
    spec = ErrorGraphSpec(0.3, 0.1, "hop-nearest")
    adm = admissible_pairs(40, spec, base=base)
    rng = np.random.default_rng(3)
    counts = np.array([generate_error_graph(40, spec, rng=rng, admissible=adm).edge_count for _ in range(1000)])
    m = len(adm)
    assert abs(counts.mean() - m * 0.3) < 3 * math.sqrt(m * 0.21 / 1000)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.02, 0.2))
def test_hop_nearest_links_stay_inside_support_radius(seed, delta):
    rng = np.random.default_rng(seed)
    base, _ = generate_lattice_random(60, 2, 6, rng)
    spec = ErrorGraphSpec(0.5, delta, "hop-nearest")
    E = generate_error_graph(60, spec, base=base, rng=rng)
    k = math.ceil(delta * 60)
    radius = [np.sort(np.delete(distances_from(base, i), i))[k - 1] for i in range(60)]
    for u, v in E.edges:
        assert distances_from(base, u)[v] <= max(radius[u], radius[v])


def test_latent_support_needs_positions():
    with pytest.raises(InputError):
        admissible_pairs(10, ErrorGraphSpec(0.1, 0.5, "latent-nearest"))
    with pytest.raises(InputError):
        ErrorGraphSpec(0.1, 0.5)


def test_regular_four_nodes_degree_two_is_a_four_cycle():
    for seed in range(20):
        g = generate_random_regular(4, 2, np.random.default_rng(seed))
        assert g.edge_count == 4 and set(g.degrees.tolist()) == {2}
        assert np.all(components(g) == 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(4, 60), st.integers(1, 3), st.integers(0, 1000))
def test_regular_graph_degrees(n, d, seed):
    if n * d % 2:
        n += 1
    g = generate_random_regular(n, d, np.random.default_rng(seed))
    assert np.all(g.degrees == d)


def test_regular_balls_grow_geometrically():
    g = generate_random_regular(1000, 3, np.random.default_rng(5))
    sizes = [len(ball(g, 0, r)) for r in range(6)]
    assert sizes[:2] == [1, 4]
    for r in range(2, 6):
        assert sizes[r] >= 1.7 * sizes[r - 1]


def test_regular_rejects_odd_stub_count():
    with pytest.raises(InputError):
        generate_random_regular(5, 3, np.random.default_rng(0))


def test_drop_links_extremes(triangle):
    rng = np.random.default_rng(0)
    assert drop_links(triangle, 0.0, rng) is triangle
    assert drop_links(triangle, 1.0, rng).edge_count == 0


def test_drop_links_mean_and_independence(triangle):
    rng = np.random.default_rng(9)
    reps = 20000
    alive = np.zeros((reps, 3))
    for i in range(reps):
        g = drop_links(triangle, 0.5, rng)
        alive[i] = np.isin(np.arange(3), triangle.edge_ids(g.edges))
    assert abs(alive.sum(axis=1).mean() - 1.5) < 3 * math.sqrt(0.75 / reps)
    cov = np.cov(alive.T)
    off = cov[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < 3 * 0.25 / math.sqrt(reps))
