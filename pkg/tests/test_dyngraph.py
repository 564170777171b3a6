import io

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from dyntrace.dyngraph import (
    DynamicGraph,
    adjacency_oracle,
    exact_triangles,
    load_edge_list,
    random_graph,
    sample_nonadjacent_pair,
    triangle_count_oracle,
)


def _complete(nodes):
    g = DynamicGraph(max(nodes) + 1)
    g.add_clique(nodes)
    return g


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def test_load_snap_path_graph():
    g = load_edge_list(io.StringIO("0 1\n1 2\n"), fmt="snap")
    assert g.n == 3
    assert g.num_edges == 2
    assert g.has_edge(0, 1) and g.has_edge(1, 2) and not g.has_edge(0, 2)


def test_load_snap_duplicate_collapses():
    g = load_edge_list(io.StringIO("0 1\n0 1\n1 0\n"), fmt="snap")
    assert g.num_edges == 1
    assert g.edge_multiplicity(0, 1) == 1


def test_load_snap_comments_and_errors():
    g = load_edge_list(io.StringIO("# a comment\n0 1\n"), fmt="snap")
    assert g.num_edges == 1
    with pytest.raises(ValueError, match="line 2"):
        load_edge_list(io.StringIO("0 1\nnot an edge\n"), fmt="snap")
    with pytest.raises(ValueError, match="line 1"):
        load_edge_list(io.StringIO("0 5\n"), fmt="snap", n=3)


def test_load_matrix_market_triangle():
    text = "%%MatrixMarket matrix coordinate pattern symmetric\n% K3\n3 3 3\n1 2\n1 3\n2 3\n"
    g = load_edge_list(io.StringIO(text), fmt="matrix-market")
    assert g.n == 3
    assert g.num_edges == 3
    assert exact_triangles(g) == 1


def test_load_matrix_market_errors():
    with pytest.raises(ValueError, match="square"):
        load_edge_list(io.StringIO("%%Header\n3 4 2\n1 2\n"), fmt="matrix-market")
    with pytest.raises(ValueError, match="line 3"):
        load_edge_list(io.StringIO("%%Header\n3 3 1\n1 9\n"), fmt="matrix-market")
    with pytest.raises(ValueError, match="unknown edge-list format"):
        load_edge_list(io.StringIO(""), fmt="gexf")


def test_load_from_file(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text("0 1\n2 3\n", encoding="utf-8")
    g = load_edge_list(path, fmt="snap")
    assert g.num_edges == 2


# ---------------------------------------------------------------------------
# Clique dynamics
# ---------------------------------------------------------------------------


def test_add_clique_triangle():
    g = DynamicGraph(5)
    g.add_clique([0, 1, 2])
    assert g.num_edges == 3
    assert exact_triangles(g) == 1


def test_add_same_clique_twice_masks_multiplicity():
    g = DynamicGraph(4)
    g.add_clique([0, 1, 2])
    g.add_clique([0, 1, 2])
    assert g.num_edges == 3
    assert g.edge_multiplicity(0, 1) == 2
    assert exact_triangles(g) == 1


def test_k4_triangles_and_cube_trace():
    g = DynamicGraph(4)
    g.add_clique([0, 1, 2, 3])
    assert exact_triangles(g) == 4
    B = g.dense()
    assert np.trace(B @ B @ B) == 24.0


def test_remove_clique_restores_empty_graph():
    g = DynamicGraph(6)
    cid = g.add_clique([0, 1, 2, 3, 4])
    g.remove_clique(cid)
    assert g.num_edges == 0
    assert g.live_cliques == ()


def test_overlapping_cliques_share_edge():
    g = DynamicGraph(5)
    a = g.add_clique([0, 1, 2])
    g.add_clique([1, 2, 3])
    g.remove_clique(a)
    assert g.has_edge(1, 2)
    assert g.edge_multiplicity(1, 2) == 1
    assert not g.has_edge(0, 1)


def test_remove_unknown_clique():
    g = DynamicGraph(3)
    with pytest.raises(KeyError):
        g.remove_clique(99)


def test_clique_validation():
    g = DynamicGraph(4)
    with pytest.raises(ValueError):
        g.add_clique([0])
    with pytest.raises(ValueError):
        g.add_clique([0, 0, 1])
    with pytest.raises(ValueError):
        g.add_clique([0, 9])


@st.composite
def _clique_ops(draw):
    ops = draw(
        st.lists(
            st.tuples(st.booleans(), st.sets(st.integers(0, 11), min_size=2, max_size=6)),
            min_size=1,
            max_size=40,
        )
    )
    return ops


@given(ops=_clique_ops())
@settings(max_examples=40)
def test_add_remove_fuzz_matches_replay(ops):
    # Interleaved adds and removes must leave the multiset of edges equal to
    # replaying only the surviving cliques from scratch.
    g = DynamicGraph(12)
    live: dict[int, frozenset] = {}
    for is_add, nodes in ops:
        if is_add or not live:
            cid = g.add_clique(sorted(nodes))
            live[cid] = frozenset(nodes)
        else:
            cid = sorted(live)[len(live) // 2]
            g.remove_clique(cid)
            del live[cid]
    replay = DynamicGraph(12)
    for nodes in live.values():
        replay.add_clique(sorted(nodes))
    assert g._mult == replay._mult
    assert np.array_equal(g.dense(), replay.dense())


# ---------------------------------------------------------------------------
# Random edges
# ---------------------------------------------------------------------------


def test_add_random_edge_forced_choice():
    g = DynamicGraph(2)
    assert g.add_random_edge(seed=0, step=1) == (0, 1)


def test_add_random_edge_until_complete():
    g = DynamicGraph(5)
    for step in range(1, 11):
        g.add_random_edge(seed=1, step=step)
    assert g.num_edges == 10
    with pytest.raises(ValueError):
        g.add_random_edge(seed=1, step=11)


def test_add_random_edge_deterministic():
    a = DynamicGraph(8)
    b = DynamicGraph(8)
    for step in range(1, 6):
        assert a.add_random_edge(7, step) == b.add_random_edge(7, step)


def test_nonadjacent_sampling_uniform():
    # Fixed sparse graph, chi-squared uniformity over the non-adjacent pairs.
    g = DynamicGraph(6)
    for u, v in [(0, 1), (1, 2), (2, 3), (3, 4)]:
        g.add_edge(u, v)
    candidates = [
        (u, v)
        for u in range(6)
        for v in range(u + 1, 6)
        if not g.has_edge(u, v)
    ]
    counts = {pair: 0 for pair in candidates}
    draws = 100_000
    for step in range(draws):
        counts[sample_nonadjacent_pair(g, seed=42, step=step)] += 1
    observed = np.array(list(counts.values()))
    expected = draws / len(candidates)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    crit = scipy.stats.chi2.ppf(0.99, df=len(candidates) - 1)
    assert chi2 < crit


# ---------------------------------------------------------------------------
# Adjacency oracle and triangle counts
# ---------------------------------------------------------------------------


def test_adjacency_matvec_triangle_degrees():
    g = _complete([0, 1, 2])
    assert np.array_equal(g.adjacency_matvec(np.ones(3)), [2.0, 2.0, 2.0])


def test_adjacency_matvec_empty_graph():
    g = DynamicGraph(4)
    assert np.array_equal(g.adjacency_matvec(np.ones(4)), np.zeros(4))


def test_adjacency_matvec_matches_dense():
    g = random_graph(100, 0.1, seed=3)
    dense = g.dense()
    rng = np.random.default_rng(0)
    # integer vectors: 0/1 weights keep every partial sum exactly
    # representable, so sparse and dense routes agree bit for bit
    for _ in range(5):
        x = rng.integers(-50, 50, size=100).astype(np.float64)
        assert np.array_equal(g.adjacency_matvec(x), dense @ x)
    for _ in range(5):
        x = rng.standard_normal(100)
        y = g.adjacency_matvec(x)
        assert np.allclose(y, dense @ x, rtol=0, atol=1e-12 * np.linalg.norm(x, 1))


def test_adjacency_matvec_symmetric():
    g = random_graph(40, 0.2, seed=4)
    oracle = adjacency_oracle(g)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(40)
        y = rng.standard_normal(40)
        assert abs(x @ oracle.apply(y) - y @ oracle.apply(x)) < 1e-12


def test_adjacency_oracle_is_snapshot():
    g = DynamicGraph(3)
    g.add_edge(0, 1)
    oracle = adjacency_oracle(g)
    before = oracle.apply(np.ones(3)).copy()
    g.add_edge(1, 2)
    assert np.array_equal(oracle.apply(np.ones(3)), before)


def test_triangle_oracle_cost():
    g = _complete([0, 1, 2])
    oracle = triangle_count_oracle(g)
    assert oracle.matvec_cost == 3


def test_exact_triangles_basics():
    assert exact_triangles(_complete([0, 1, 2])) == 1
    assert exact_triangles(_complete([0, 1, 2, 3])) == 4
    path = load_edge_list(io.StringIO("0 1\n1 2\n2 3\n"), fmt="snap")
    assert exact_triangles(path) == 0


def test_exact_triangles_match_dense_cube():
    g = random_graph(200, 0.1, seed=11)
    B = g.dense()
    assert 6 * exact_triangles(g) == int(round(np.trace(B @ B @ B)))


@given(seed=st.integers(0, 30), p=st.floats(0.02, 0.4))
@settings(max_examples=20)
def test_triangle_identity_random_graphs(seed, p):
    g = random_graph(40, p, seed=seed)
    B = g.dense()
    assert 6 * exact_triangles(g) == int(round(np.trace(B @ B @ B)))
