from fractions import Fraction

import pytest

from graph_core import BipartiteGraph, matching_size, random_graph, verify_fractional
from skeleton import (
    SkeletonDecomposition,
    brute_force_decompose,
    brute_force_max_ratio_set,
    canonical_fractional,
    decompose,
    max_ratio_set,
)


@pytest.mark.parametrize("adjacency, offline, expected_set, expected_ratio", [
    ([[0], [0]], 1, {0, 1}, Fraction(2)),
    ([[0, 1], [0, 1]], 2, {0, 1}, Fraction(1)),
    ([[0, 1]], 2, {0}, Fraction(1, 2)),
])
def test_max_ratio_set_cases(make_graph, adjacency, offline, expected_set, expected_ratio):
    online, ratio = max_ratio_set(make_graph(offline, adjacency))
    assert online == frozenset(expected_set)
    assert ratio == expected_ratio


def test_max_ratio_set_needs_an_edge():
    with pytest.raises(ValueError):
        max_ratio_set(BipartiteGraph.empty(2, 2))


def test_decompose_split_graph(split_graph):
    dec = decompose(split_graph)
    assert [(set(c.online), set(c.offline), c.ratio) for c in dec.components] == [
        ({1}, {2}, Fraction(1)),
        ({0}, {0, 1}, Fraction(1, 2)),
    ]
    assert not dec.validate(split_graph)


def test_decompose_complete_2x2(complete_2x2):
    dec = decompose(complete_2x2)
    assert len(dec.components) == 1
    assert dec.components[0].ratio == 1


def test_isolated_nodes_go_to_infinity_sets(make_graph):
    h = make_graph(4, [[0, 1], [], [2]])
    dec = decompose(h)
    assert dec.t_inf == frozenset({3})
    assert dec.s_minus_inf == frozenset({1})
    assert not dec.validate(h)


def test_edgeless_graph_has_no_components():
    dec = decompose(BipartiteGraph.empty(3, 2))
    assert dec.components == ()
    assert dec.s_minus_inf == frozenset({0, 1})
    assert dec.t_inf == frozenset({0, 1, 2})


def test_decomposition_invariants_on_random_graphs(rng):
    for _ in range(300):
        offline = int(rng.integers(1, 41))
        online = int(rng.integers(1, 41))
        h = random_graph(offline, online, float(rng.uniform(0.02, 0.25)), rng)
        dec = decompose(h)
        assert dec.validate(h) == []
        if matching_size(h) == h.online_count:
            assert all(c.ratio <= 1 for c in dec.components)


def test_no_edge_from_earlier_online_set_to_later_offline_set(rng):
    for _ in range(100):
        h = random_graph(12, 10, 0.2, rng)
        dec = decompose(h)
        owner = dec.offline_component()
        for i, comp in enumerate(dec.components):
            for v in comp.online:
                assert all(owner[u] <= i for u in h.adjacency[v])


def test_matches_subset_oracle_on_small_graphs(rng):
    for _ in range(300):
        h = random_graph(int(rng.integers(1, 12)), int(rng.integers(1, 11)), float(rng.uniform(0.1, 0.5)), rng)
        assert decompose(h).to_dict() == brute_force_decompose(h).to_dict()
        if h.edge_count:
            assert max_ratio_set(h) == brute_force_max_ratio_set(h)


def test_decomposition_json_round_trip(split_graph):
    dec = decompose(split_graph)
    data = dec.to_dict()
    assert data["components"][1] == {"S": [0], "T": [0, 1], "ratio": "1/2"}
    assert SkeletonDecomposition.from_dict(data) == dec


def test_canonical_fractional_half_component(split_graph):
    frac = canonical_fractional(decompose(split_graph), split_graph)
    assert frac.weights[(0, 0)] == pytest.approx(0.5)
    assert frac.weights[(1, 0)] == pytest.approx(0.5)
    assert frac.weights[(2, 1)] == pytest.approx(1.0)


def test_canonical_fractional_hits_prescribed_degrees(rng):
    for _ in range(100):
        h = random_graph(int(rng.integers(1, 16)), int(rng.integers(1, 16)), 0.25, rng)
        dec = decompose(h)
        frac = canonical_fractional(dec, h)
        assert verify_fractional(h, frac)[0]
        for comp in dec.components:
            online_degree = min(1.0, 1.0 / float(comp.ratio))
            offline_degree = min(1.0, float(comp.ratio))
            for v in comp.online:
                assert frac.online_degree.get(v, 0.0) == pytest.approx(online_degree, abs=1e-9)
            for u in comp.offline:
                assert frac.offline_level(u) == pytest.approx(offline_degree, abs=1e-9)


def test_deficiency_is_clipped_at_zero(make_graph):
    dec = decompose(make_graph(1, [[0], [0]]))
    assert dec.components[0].ratio == 2
    assert dec.components[0].deficiency == 0.0
