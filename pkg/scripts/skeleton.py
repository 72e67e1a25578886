"""
Matching Skeleton Decomposition

Splits a predicted graph into component pairs (S_i, T_i) of online and offline
nodes with strictly decreasing exact ratios |S_i|/|T_i| and nested
neighbourhoods, plus the degree-zero leftovers. Each component supports a
canonical fractional matching in which one side is saturated and the other is
spread evenly at the component ratio.

Max-ratio sets are found with min-cut feasibility tests on exact rational
candidates (networkx preflow-push), and the canonical fractional matching with
one integral max-flow per component.
"""

import sys
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict, FrozenSet, List, Tuple

import networkx as nx
from networkx.algorithms.flow import preflow_push

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger
from graph_core import BipartiteGraph, FractionalMatching, offline_key, online_key

logger = ResilientLogger(__name__)

_SOURCE = "source"
_SINK = "sink"
BRUTE_FORCE_MAX_ONLINE = 16

ActiveAdjacency = Dict[int, Tuple[int, ...]]


@dataclass(frozen=True)
class SkeletonComponent:
    """One (S_i, T_i) pair with its exact ratio |S_i| / |T_i|"""
    online: FrozenSet[int]
    offline: FrozenSet[int]
    ratio: Fraction

    @property
    def deficiency(self) -> float:
        """delta_i = 1 - ratio, clipped at 0 for components with more online than offline nodes"""
        return max(0.0, 1.0 - float(self.ratio))

    def to_dict(self) -> Dict:
        return {
            "S": sorted(self.online),
            "T": sorted(self.offline),
            "ratio": f"{self.ratio.numerator}/{self.ratio.denominator}",
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SkeletonComponent':
        return cls(frozenset(data["S"]), frozenset(data["T"]), Fraction(data["ratio"]))


@dataclass(frozen=True)
class SkeletonDecomposition:
    """Ordered components plus degree-zero online (s_minus_inf) and offline (t_inf) nodes"""
    components: Tuple[SkeletonComponent, ...]
    s_minus_inf: FrozenSet[int]
    t_inf: FrozenSet[int]

    def offline_component(self) -> Dict[int, int]:
        """Map offline id -> index of the component whose T contains it"""
        return {u: i for i, comp in enumerate(self.components) for u in comp.offline}

    def online_component(self) -> Dict[int, int]:
        return {v: i for i, comp in enumerate(self.components) for v in comp.online}

    def validate(self, h: BipartiteGraph) -> List[str]:
        """Diagnostics for every violated decomposition invariant; empty when valid"""
        problems = []
        online_seen: List[int] = []
        offline_seen: List[int] = []
        for comp in self.components:
            online_seen.extend(comp.online)
            offline_seen.extend(comp.offline)
        online_seen.extend(self.s_minus_inf)
        offline_seen.extend(self.t_inf)
        if sorted(online_seen) != list(range(h.online_count)):
            problems.append("online sets do not partition the online side")
        if sorted(offline_seen) != list(range(h.offline_count)):
            problems.append("offline sets do not partition the offline side")

        for i, (prev, nxt) in enumerate(zip(self.components, self.components[1:])):
            if not prev.ratio > nxt.ratio:
                problems.append(f"ratio of component {i} ({prev.ratio}) not above component {i + 1} ({nxt.ratio})")

        prefix_online: set = set()
        prefix_offline: set = set()
        for i, comp in enumerate(self.components):
            if not comp.online or not comp.offline:
                problems.append(f"component {i} is empty")
            if comp.ratio != Fraction(len(comp.online), max(1, len(comp.offline))):
                problems.append(f"component {i} ratio {comp.ratio} disagrees with its sizes")
            prefix_online |= comp.online
            prefix_offline |= comp.offline
            neighbourhood = {u for v in prefix_online for u in h.adjacency[v]}
            if neighbourhood != prefix_offline:
                problems.append(f"neighbourhood of the first {i + 1} online sets is not their offline union")

        for v in self.s_minus_inf:
            if h.adjacency[v]:
                problems.append(f"online node {v} in s_minus_inf has degree {len(h.adjacency[v])}")
        for u in self.t_inf:
            if h.offline_degree(u):
                problems.append(f"offline node {u} in t_inf has degree {h.offline_degree(u)}")
        return problems

    def to_dict(self) -> Dict:
        return {
            "components": [comp.to_dict() for comp in self.components],
            "s_minus_inf": sorted(self.s_minus_inf),
            "t_inf": sorted(self.t_inf),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SkeletonDecomposition':
        return cls(
            tuple(SkeletonComponent.from_dict(c) for c in data["components"]),
            frozenset(data["s_minus_inf"]),
            frozenset(data["t_inf"]),
        )


def _neighbourhood(active: ActiveAdjacency, online: FrozenSet[int]) -> FrozenSet[int]:
    return frozenset(u for v in online for u in active[v])


def _ratio_cut(active: ActiveAdjacency, ratio: Fraction) -> Tuple[bool, FrozenSet[int]]:
    """
    Min-cut test for candidate ratio p/q.

    Network: source->v capacity q, v->u uncapacitated, u->sink capacity p.
    A cut below q * |active| exists iff some S has |S| > ratio * |Gamma(S)|.

    Returns:
        (violated, online nodes on the maximal min-cut source side)
    """
    p, q = ratio.numerator, ratio.denominator
    net = nx.DiGraph()
    net.add_node(_SOURCE)
    net.add_node(_SINK)
    for v in sorted(active):
        net.add_edge(_SOURCE, online_key(v), capacity=q)
        for u in active[v]:
            net.add_edge(online_key(v), offline_key(u))
    for u in sorted(_neighbourhood(active, frozenset(active))):
        net.add_edge(offline_key(u), _SINK, capacity=p)

    residual = preflow_push(net, _SOURCE, _SINK)
    violated = residual.graph["flow_value"] < q * len(active)

    # nodes that still reach the sink in the residual graph form the minimal sink side
    reaches_sink = {_SINK}
    queue = deque([_SINK])
    while queue:
        node = queue.popleft()
        for pred in residual.pred[node]:
            attrs = residual[pred][node]
            if pred not in reaches_sink and attrs["capacity"] - attrs["flow"] > 0:
                reaches_sink.add(pred)
                queue.append(pred)

    return violated, frozenset(v for v in active if online_key(v) not in reaches_sink)


def _max_ratio_set(active: ActiveAdjacency) -> Tuple[FrozenSet[int], Fraction]:
    everything = frozenset(active)
    ratio = Fraction(len(everything), len(_neighbourhood(active, everything)))

    while True:
        violated, online = _ratio_cut(active, ratio)
        if not online:
            raise RuntimeError(f"min-cut at ratio {ratio} returned an empty source side")
        better = Fraction(len(online), len(_neighbourhood(active, online)))
        if not violated:
            if better != ratio:
                raise RuntimeError(f"maximal maximiser has ratio {better}, expected {ratio}")
            return online, ratio
        if better <= ratio:
            raise RuntimeError(f"violating cut at {ratio} produced non-improving set of ratio {better}")
        logger.debug(f"max-ratio search: {ratio} -> {better}")
        ratio = better


def _active_adjacency(h: BipartiteGraph) -> ActiveAdjacency:
    return {v: nbrs for v, nbrs in enumerate(h.adjacency) if nbrs}


def max_ratio_set(h: BipartiteGraph) -> Tuple[FrozenSet[int], Fraction]:
    """Inclusion-wise maximal online set maximising |S| / |Gamma(S)|, with the exact ratio"""
    active = _active_adjacency(h)
    if not active:
        raise ValueError("max_ratio_set needs at least one online node with positive degree")
    return _max_ratio_set(active)


def _peel(h: BipartiteGraph, finder: Callable[[ActiveAdjacency], Tuple[FrozenSet[int], Fraction]]) -> SkeletonDecomposition:
    remaining = _active_adjacency(h)
    removed_offline: set = set()
    components: List[SkeletonComponent] = []

    while True:
        active = {}
        for v, nbrs in remaining.items():
            live = tuple(u for u in nbrs if u not in removed_offline)
            if live:
                active[v] = live
        if not active:
            break
        online, ratio = finder(active)
        offline = _neighbourhood(active, online)
        components.append(SkeletonComponent(online, offline, ratio))
        for v in online:
            del remaining[v]
        removed_offline |= offline

    covered_online = {v for comp in components for v in comp.online}
    covered_offline = {u for comp in components for u in comp.offline}
    return SkeletonDecomposition(
        tuple(components),
        frozenset(range(h.online_count)) - covered_online,
        frozenset(range(h.offline_count)) - covered_offline,
    )


def decompose(h: BipartiteGraph) -> SkeletonDecomposition:
    """Matching-skeleton decomposition of h"""
    decomposition = _peel(h, _max_ratio_set)
    logger.debug(
        f"decomposed {h.online_count}x{h.offline_count} graph into "
        f"{len(decomposition.components)} components"
    )
    return decomposition


@lru_cache(maxsize=256)
def cached_decompose(h: BipartiteGraph) -> SkeletonDecomposition:
    return decompose(h)


def _brute_force_finder(active: ActiveAdjacency) -> Tuple[FrozenSet[int], Fraction]:
    nodes = sorted(active)
    if len(nodes) > BRUTE_FORCE_MAX_ONLINE:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_ONLINE} active online nodes, got {len(nodes)}")
    best = Fraction(0)
    union: FrozenSet[int] = frozenset()
    for size in range(1, len(nodes) + 1):
        for subset in combinations(nodes, size):
            chosen = frozenset(subset)
            ratio = Fraction(size, len(_neighbourhood(active, chosen)))
            if ratio > best:
                best, union = ratio, chosen
            elif ratio == best:
                union = union | chosen
    return union, best


def brute_force_max_ratio_set(h: BipartiteGraph) -> Tuple[FrozenSet[int], Fraction]:
    """Subset-enumeration oracle for max_ratio_set"""
    active = _active_adjacency(h)
    if not active:
        raise ValueError("max_ratio_set needs at least one online node with positive degree")
    return _brute_force_finder(active)


def brute_force_decompose(h: BipartiteGraph) -> SkeletonDecomposition:
    """Subset-enumeration oracle for decompose"""
    return _peel(h, _brute_force_finder)


def canonical_fractional(d: SkeletonDecomposition, h: BipartiteGraph) -> FractionalMatching:
    """
    Balanced fractional matching inside the components of d.

    With a = |S_i|, b = |T_i| and m = max(a, b) each component is one integral
    flow: source->v capacity b, v->u capacity m, u->sink capacity a, value a*b.
    Dividing by m gives online degree b/m and offline degree a/m, which is
    (1, ratio) when ratio <= 1 and (1/ratio, 1) otherwise.
    """
    frac = FractionalMatching()
    for index, comp in enumerate(d.components):
        a, b = len(comp.online), len(comp.offline)
        cap = max(a, b)
        net = nx.DiGraph()
        net.add_node(_SOURCE)
        net.add_node(_SINK)
        for v in sorted(comp.online):
            net.add_edge(_SOURCE, online_key(v), capacity=b)
            for u in h.adjacency[v]:
                if u in comp.offline:
                    net.add_edge(online_key(v), offline_key(u), capacity=cap)
        for u in sorted(comp.offline):
            net.add_edge(offline_key(u), _SINK, capacity=a)

        value, flow = nx.maximum_flow(net, _SOURCE, _SINK)
        if value != a * b:
            raise RuntimeError(
                f"component {index} admits flow {value}, expected {a * b}; decomposition is inconsistent"
            )
        for v in sorted(comp.online):
            for node, amount in flow[online_key(v)].items():
                if amount:
                    frac.add(node[1], v, amount / cap)
    return frac


if __name__ == "__main__":
    h = BipartiteGraph(3, 2, ((0, 1), (2,)))
    dec = decompose(h)
    assert [c.ratio for c in dec.components] == [Fraction(1), Fraction(1, 2)]
    assert not dec.validate(h)
    logger.info("skeleton self-check passed")
