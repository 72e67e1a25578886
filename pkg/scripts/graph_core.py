"""
Bipartite Graph Core

Graph representation shared by every algorithm module: offline nodes U and
online nodes V live in separate dense 0-based id ranges, adjacency is kept per
online node. Provides exact maximum matching (Hopcroft-Karp through networkx),
a brute-force oracle for tests, the removability test used by iterative
sampling, and fractional matching validation.
"""

import sys
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger

try:
    from config_loader import get_tolerance
    FRACTIONAL_TOL = get_tolerance("fractional", 1e-9)
    BRUTE_FORCE_MAX_NODES = int(get_tolerance("brute_force_max_nodes", 24))
except ImportError:
    FRACTIONAL_TOL = 1e-9
    BRUTE_FORCE_MAX_NODES = 24

logger = ResilientLogger(__name__)

Edge = Tuple[int, int]  # (offline_id, online_id)


def offline_key(u: int) -> Tuple[str, int]:
    return ("u", u)


def online_key(v: int) -> Tuple[str, int]:
    return ("v", v)


@dataclass(frozen=True)
class BipartiteGraph:
    """Immutable bipartite graph; adjacency[v] lists the offline neighbours of online node v"""
    offline_count: int
    online_count: int
    adjacency: Tuple[Tuple[int, ...], ...] = ()

    def __post_init__(self):
        adjacency = tuple(tuple(int(u) for u in nbrs) for nbrs in self.adjacency)
        object.__setattr__(self, "adjacency", adjacency)

        if self.offline_count < 0 or self.online_count < 0:
            raise ValueError(
                f"Node counts must be non-negative (offline={self.offline_count}, online={self.online_count})"
            )
        if len(adjacency) != self.online_count:
            raise ValueError(
                f"Adjacency has {len(adjacency)} rows but online_count is {self.online_count}"
            )
        for v, nbrs in enumerate(adjacency):
            if any(a >= b for a, b in zip(nbrs, nbrs[1:])):
                raise ValueError(f"Adjacency of online node {v} is not strictly increasing: {list(nbrs)}")
            if nbrs and (nbrs[0] < 0 or nbrs[-1] >= self.offline_count):
                raise ValueError(
                    f"Online node {v} references offline id outside [0, {self.offline_count}): {list(nbrs)}"
                )

    @classmethod
    def from_edges(cls, offline_count: int, online_count: int, edges: Iterable[Edge]) -> 'BipartiteGraph':
        """Build from (offline, online) pairs; duplicates are merged"""
        rows: List[set] = [set() for _ in range(online_count)]
        for u, v in edges:
            if not 0 <= v < online_count:
                raise ValueError(f"Online id {v} outside [0, {online_count})")
            rows[v].add(int(u))
        return cls(offline_count, online_count, tuple(tuple(sorted(r)) for r in rows))

    @classmethod
    def empty(cls, offline_count: int, online_count: int) -> 'BipartiteGraph':
        return cls(offline_count, online_count, tuple(() for _ in range(online_count)))

    @cached_property
    def reverse_adjacency(self) -> Tuple[Tuple[int, ...], ...]:
        """For each offline node, its sorted online neighbours"""
        rows: List[List[int]] = [[] for _ in range(self.offline_count)]
        for v, nbrs in enumerate(self.adjacency):
            for u in nbrs:
                rows[u].append(v)
        return tuple(tuple(r) for r in rows)

    @property
    def edges(self) -> List[Edge]:
        return [(u, v) for v, nbrs in enumerate(self.adjacency) for u in nbrs]

    @property
    def edge_count(self) -> int:
        return sum(len(nbrs) for nbrs in self.adjacency)

    def neighbors(self, v: int) -> Tuple[int, ...]:
        return self.adjacency[v]

    def offline_degree(self, u: int) -> int:
        return len(self.reverse_adjacency[u])

    def has_edge(self, u: int, v: int) -> bool:
        if not 0 <= v < self.online_count:
            return False
        nbrs = self.adjacency[v]
        # adjacency rows are short; a linear membership test is fine
        return u in nbrs

    def remove_offline(self, nodes: Iterable[int]) -> 'BipartiteGraph':
        """Same id space with every edge at the given offline nodes deleted"""
        removed = set(nodes)
        for u in removed:
            if not 0 <= u < self.offline_count:
                raise ValueError(f"Offline id {u} outside [0, {self.offline_count})")
        return BipartiteGraph(
            self.offline_count,
            self.online_count,
            tuple(tuple(u for u in nbrs if u not in removed) for nbrs in self.adjacency)
        )

    def induced(self, online: Iterable[int], offline: Iterable[int]) -> 'BipartiteGraph':
        """Same id space keeping only edges between the given node sets"""
        keep_online = set(online)
        keep_offline = set(offline)
        return BipartiteGraph(
            self.offline_count,
            self.online_count,
            tuple(
                tuple(u for u in nbrs if u in keep_offline) if v in keep_online else ()
                for v, nbrs in enumerate(self.adjacency)
            )
        )

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from((offline_key(u) for u in range(self.offline_count)), bipartite=0)
        graph.add_nodes_from((online_key(v) for v in range(self.online_count)), bipartite=1)
        graph.add_edges_from((online_key(v), offline_key(u)) for u, v in self.edges)
        return graph

    def to_dict(self) -> Dict:
        return {
            "offline_count": self.offline_count,
            "online_count": self.online_count,
            "adjacency": [list(nbrs) for nbrs in self.adjacency],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'BipartiteGraph':
        return cls(
            int(data["offline_count"]),
            int(data["online_count"]),
            tuple(tuple(nbrs) for nbrs in data["adjacency"])
        )


@dataclass(frozen=True)
class Matching:
    """Integral matching as (offline_id, online_id) pairs sorted by online id"""
    pairs: Tuple[Edge, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", tuple(sorted(((int(u), int(v)) for u, v in self.pairs), key=lambda p: (p[1], p[0])))
        )

    @property
    def size(self) -> int:
        return len(self.pairs)

    def by_online(self) -> Dict[int, int]:
        return {v: u for u, v in self.pairs}

    def by_offline(self) -> Dict[int, int]:
        return {u: v for u, v in self.pairs}

    def offline_nodes(self) -> set:
        return {u for u, _ in self.pairs}

    def validate(self, g: BipartiteGraph) -> List[str]:
        """Diagnostics for every violated matching invariant; empty when valid"""
        problems = []
        seen_offline: Dict[int, int] = {}
        seen_online: Dict[int, int] = {}
        for u, v in self.pairs:
            if u in seen_offline:
                problems.append(f"offline {u} matched twice (online {seen_offline[u]} and {v})")
            if v in seen_online:
                problems.append(f"online {v} matched twice (offline {seen_online[v]} and {u})")
            seen_offline[u] = v
            seen_online[v] = u
            if not g.has_edge(u, v):
                problems.append(f"pair ({u}, {v}) is not an edge")
        return problems

    def is_valid(self, g: BipartiteGraph) -> bool:
        return not self.validate(g)

    def to_list(self) -> List[List[int]]:
        return [[u, v] for u, v in self.pairs]


@dataclass
class FractionalMatching:
    """Edge weights keyed by (offline_id, online_id) with cached per-node degree sums"""
    weights: Dict[Edge, float] = field(default_factory=dict)
    offline_degree: Dict[int, float] = field(default_factory=dict)
    online_degree: Dict[int, float] = field(default_factory=dict)

    @classmethod
    def from_weights(cls, weights: Dict[Edge, float]) -> 'FractionalMatching':
        frac = cls()
        for (u, v), w in weights.items():
            frac.add(u, v, w)
        return frac

    def add(self, u: int, v: int, amount: float):
        if amount == 0:
            return
        key = (u, v)
        self.weights[key] = self.weights.get(key, 0.0) + amount
        self.offline_degree[u] = self.offline_degree.get(u, 0.0) + amount
        self.online_degree[v] = self.online_degree.get(v, 0.0) + amount

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights.values()))

    def offline_level(self, u: int) -> float:
        return self.offline_degree.get(u, 0.0)

    def restricted(self, online: Iterable[int], offline: Iterable[int]) -> 'FractionalMatching':
        keep_online = set(online)
        keep_offline = set(offline)
        return FractionalMatching.from_weights({
            (u, v): w for (u, v), w in self.weights.items()
            if u in keep_offline and v in keep_online
        })

    def to_dict(self) -> Dict:
        return {"weights": [[u, v, w] for (u, v), w in sorted(self.weights.items())]}


def _hopcroft_karp(g: BipartiteGraph) -> Matching:
    if g.edge_count == 0:
        return Matching(())
    graph = g.to_networkx()
    top = [online_key(v) for v in range(g.online_count)]
    mate = nx.bipartite.hopcroft_karp_matching(graph, top_nodes=top)
    return Matching(tuple(
        (mate[online_key(v)][1], v) for v in range(g.online_count) if online_key(v) in mate
    ))


def max_matching(g: BipartiteGraph) -> Matching:
    """Maximum cardinality matching; deterministic for a given graph"""
    return _cached_matching(g)


@lru_cache(maxsize=4096)
def _cached_matching(g: BipartiteGraph) -> Matching:
    return _hopcroft_karp(g)


def matching_size(g: BipartiteGraph) -> int:
    """nu(g)"""
    return max_matching(g).size


def brute_force_max_matching(g: BipartiteGraph) -> Matching:
    """Exhaustive maximum matching for graphs with at most BRUTE_FORCE_MAX_NODES nodes"""
    total = g.offline_count + g.online_count
    if total > BRUTE_FORCE_MAX_NODES:
        raise ValueError(
            f"brute force limited to {BRUTE_FORCE_MAX_NODES} nodes, graph has {total}"
        )

    best: List[Edge] = []
    current: List[Edge] = []
    used = set()

    def search(v: int):
        nonlocal best
        if len(current) + (g.online_count - v) <= len(best):
            return
        if v == g.online_count:
            best = list(current)
            return
        for u in g.adjacency[v]:
            if u not in used:
                used.add(u)
                current.append((u, v))
                search(v + 1)
                current.pop()
                used.discard(u)
        search(v + 1)

    search(0)
    return Matching(tuple(best))


def is_removable(h: BipartiteGraph, u: int, target: int) -> bool:
    """True iff deleting offline node u from h leaves a maximum matching of size target"""
    if not 0 <= u < h.offline_count:
        raise ValueError(f"Offline id {u} outside [0, {h.offline_count})")
    return matching_size(h.remove_offline([u])) == target


def verify_fractional(
    g: BipartiteGraph,
    f: FractionalMatching,
    tol: Optional[float] = None
) -> Tuple[bool, List[str]]:
    """
    Check a fractional matching against g.

    Returns:
        (ok, diagnostics) where diagnostics names every violated constraint
    """
    tol = FRACTIONAL_TOL if tol is None else tol
    problems: List[str] = []
    offline_sum: Dict[int, float] = {}
    online_sum: Dict[int, float] = {}

    for (u, v), w in f.weights.items():
        if not g.has_edge(u, v):
            problems.append(f"weight on non-edge ({u}, {v})")
        if w < -tol or w > 1 + tol:
            problems.append(f"weight {w:.12g} on ({u}, {v}) outside [0, 1]")
        offline_sum[u] = offline_sum.get(u, 0.0) + w
        online_sum[v] = online_sum.get(v, 0.0) + w

    for side, sums, cached in (("offline", offline_sum, f.offline_degree),
                               ("online", online_sum, f.online_degree)):
        for node, total in sums.items():
            if total > 1 + tol:
                problems.append(f"{side} node {node} has degree {total:.12g} > 1")
        for node in set(sums) | set(cached):
            if abs(sums.get(node, 0.0) - cached.get(node, 0.0)) > tol:
                problems.append(
                    f"{side} node {node} cached degree {cached.get(node, 0.0):.12g} "
                    f"differs from recomputed {sums.get(node, 0.0):.12g}"
                )

    return not problems, problems


def random_graph(offline_count: int, online_count: int, edge_prob: float, rng) -> BipartiteGraph:
    """Erdos-Renyi bipartite graph driven by a numpy Generator"""
    mask = rng.random((online_count, offline_count)) < edge_prob
    return BipartiteGraph(
        offline_count,
        online_count,
        tuple(tuple(int(u) for u in mask[v].nonzero()[0]) for v in range(online_count))
    )


if __name__ == "__main__":
    import numpy as np

    rng = np.random.default_rng(7)
    for _ in range(50):
        g = random_graph(6, 6, 0.3, rng)
        fast, slow = max_matching(g), brute_force_max_matching(g)
        assert fast.size == slow.size and fast.is_valid(g)
    logger.info("graph_core self-check passed")
