import numpy as np
import pytest

from graph_core import (
    BipartiteGraph,
    FractionalMatching,
    Matching,
    brute_force_max_matching,
    is_removable,
    matching_size,
    max_matching,
    random_graph,
    verify_fractional,
)


def test_graph_rejects_unsorted_or_out_of_range_rows():
    with pytest.raises(ValueError, match="strictly increasing"):
        BipartiteGraph(3, 1, ((1, 0),))
    with pytest.raises(ValueError, match="outside"):
        BipartiteGraph(2, 1, ((0, 2),))
    with pytest.raises(ValueError, match="rows"):
        BipartiteGraph(2, 2, ((0,),))


def test_reverse_adjacency_matches_forward(make_graph):
    g = make_graph(3, [[0, 2], [2], []])
    assert g.reverse_adjacency == ((0,), (), (0, 1))
    assert g.offline_degree(2) == 2
    assert sorted(g.edges) == [(0, 0), (2, 0), (2, 1)]


def test_from_edges_merges_duplicates():
    g = BipartiteGraph.from_edges(2, 2, [(1, 0), (0, 0), (1, 0), (1, 1)])
    assert g.adjacency == ((0, 1), (1,))


def test_graph_json_round_trip(split_graph):
    assert BipartiteGraph.from_dict(split_graph.to_dict()) == split_graph


def test_empty_graph_has_empty_matching():
    assert max_matching(BipartiteGraph.empty(3, 0)).size == 0


def test_complete_3x3_has_perfect_matching(make_graph):
    g = make_graph(3, [[0, 1, 2]] * 3)
    m = max_matching(g)
    assert m.size == 3
    assert m.is_valid(g)


@pytest.mark.parametrize("adjacency, offline, expected", [
    ([[0]], 1, 1),
    ([[0, 1], [0, 1]], 2, 2),
    ([[0, 1]], 2, 1),
])
def test_brute_force_cases(make_graph, adjacency, offline, expected):
    assert brute_force_max_matching(make_graph(offline, adjacency)).size == expected


def test_brute_force_rejects_large_graphs():
    with pytest.raises(ValueError, match="limited"):
        brute_force_max_matching(BipartiteGraph.empty(13, 12))


def test_hopcroft_karp_agrees_with_brute_force(rng):
    for _ in range(1000):
        offline = int(rng.integers(1, 9))
        online = int(rng.integers(1, 9))
        g = random_graph(offline, online, float(rng.uniform(0.1, 0.6)), rng)
        fast = max_matching(g)
        assert fast.is_valid(g)
        assert fast.size == brute_force_max_matching(g).size


def test_deleting_a_node_never_increases_nu(rng):
    for _ in range(200):
        g = random_graph(8, 8, 0.3, rng)
        u = int(rng.integers(8))
        assert matching_size(g.remove_offline([u])) <= matching_size(g)


def test_is_removable_cases(make_graph):
    h = make_graph(2, [[0]])
    assert is_removable(h, 1, 1)
    assert not is_removable(h, 0, 1)
    assert is_removable(BipartiteGraph.empty(3, 0), 2, 0)
    with pytest.raises(ValueError):
        is_removable(h, 5, 1)


def test_matching_validate_reports_every_violation(make_graph):
    g = make_graph(2, [[0], [0, 1]])
    bad = Matching(((0, 0), (0, 1), (1, 0)))
    problems = bad.validate(g)
    assert any("offline 0 matched twice" in p for p in problems)
    assert any("online 0 matched twice" in p for p in problems)
    assert any("(1, 0) is not an edge" in p for p in problems)


def test_perfect_matching_by_offline(make_graph):
    h = make_graph(3, [[1, 2], [0], [0, 2]])
    partner = max_matching(h).by_offline()
    assert partner == {0: 1, 1: 0, 2: 2}


def test_verify_fractional_cases(make_graph):
    g = make_graph(2, [[0, 1], [0]])
    assert verify_fractional(g, FractionalMatching())[0]

    heavy = FractionalMatching.from_weights({(0, 0): 1.5})
    ok, problems = verify_fractional(g, heavy)
    assert not ok and any("outside [0, 1]" in p for p in problems)

    crowded = FractionalMatching.from_weights({(0, 0): 0.6, (0, 1): 0.6})
    ok, problems = verify_fractional(g, crowded)
    assert not ok and any("offline node 0" in p for p in problems)

    stray = FractionalMatching.from_weights({(1, 1): 0.2})
    ok, problems = verify_fractional(g, stray)
    assert not ok and any("non-edge" in p for p in problems)


def test_fractional_restriction_keeps_only_inner_edges():
    f = FractionalMatching.from_weights({(0, 0): 0.5, (1, 0): 0.5, (1, 1): 1.0})
    inner = f.restricted([0], [0, 1])
    assert inner.weights == {(0, 0): 0.5, (1, 0): 0.5}
    assert inner.offline_level(1) == pytest.approx(0.5)
    assert f.total_weight == pytest.approx(2.0)


def test_random_graph_is_reproducible():
    a = random_graph(6, 5, 0.4, np.random.default_rng(1))
    b = random_graph(6, 5, 0.4, np.random.default_rng(1))
    assert a == b
