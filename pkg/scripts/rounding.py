"""
Dependent Randomized Rounding

Turns a fractional bipartite matching into an integral one so that every
node is matched with probability exactly equal to its fractional degree.
Each step picks a cycle, or failing that a maximal path, in the support of
strictly fractional edges and moves mass between its two alternating edge
classes until some edge becomes integral.
"""

import sys
from pathlib import Path
from typing import Dict, List, Tuple

import networkx as nx
import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger
from graph_core import (
    FRACTIONAL_TOL,
    BipartiteGraph,
    Edge,
    FractionalMatching,
    Matching,
    offline_key,
    online_key,
    verify_fractional,
)
from skeleton import SkeletonComponent

logger = ResilientLogger(__name__)


def _snap(x: Dict[Edge, float], tol: float):
    for edge, w in x.items():
        if w < tol:
            x[edge] = 0.0
        elif w > 1 - tol:
            x[edge] = 1.0


def _support_graph(x: Dict[Edge, float]) -> nx.Graph:
    graph = nx.Graph()
    fractional = sorted(edge for edge, w in x.items() if 0.0 < w < 1.0)
    nodes = sorted({offline_key(u) for u, _ in fractional} | {online_key(v) for _, v in fractional})
    graph.add_nodes_from(nodes)
    graph.add_edges_from((offline_key(u), online_key(v)) for u, v in fractional)
    return graph


def _as_edge(a, b) -> Edge:
    return (a[1], b[1]) if a[0] == "u" else (b[1], a[1])


def _find_walk(graph: nx.Graph) -> List[Edge]:
    """Edges of a cycle if the support has one, else of a maximal path between two leaves"""
    try:
        cycle = nx.find_cycle(graph)
        return [_as_edge(a, b) for a, b in cycle]
    except nx.NetworkXNoCycle:
        pass

    start = min(node for node in graph.nodes if graph.degree(node) == 1)
    walk = []
    visited = {start}
    node = start
    while True:
        nxt = [nb for nb in sorted(graph.neighbors(node)) if nb not in visited]
        if not nxt:
            return walk
        walk.append(_as_edge(node, nxt[0]))
        visited.add(nxt[0])
        node = nxt[0]


def _round_weights(weights: Dict[Edge, float], rng: np.random.Generator, tol: float = FRACTIONAL_TOL) -> Matching:
    x = {edge: float(w) for edge, w in weights.items()}
    _snap(x, tol)

    max_steps = len(x) + 1
    for _ in range(max_steps):
        graph = _support_graph(x)
        if graph.number_of_edges() == 0:
            return Matching(tuple(edge for edge, w in x.items() if w == 1.0))

        walk = _find_walk(graph)
        up, down = walk[0::2], walk[1::2]

        # largest shifts keeping every weight inside [0, 1]
        alpha = min(min(1.0 - x[e] for e in up), min((x[e] for e in down), default=np.inf))
        beta = min(min(x[e] for e in up), min((1.0 - x[e] for e in down), default=np.inf))

        if rng.random() < beta / (alpha + beta):
            shift = alpha
        else:
            shift = -beta
        for e in up:
            x[e] += shift
        for e in down:
            x[e] -= shift
        _snap(x, tol)

    raise RuntimeError(f"rounding did not terminate within {max_steps} steps")


def dependent_round(f: FractionalMatching, g: BipartiteGraph, rng: np.random.Generator) -> Matching:
    """Integral matching whose per-node match probabilities equal the fractional degrees of f"""
    ok, problems = verify_fractional(g, f)
    if not ok:
        raise ValueError(f"cannot round an invalid fractional matching: {problems[:3]}")
    return _round_weights(f.weights, rng)


def sample_component_matching(
    component: SkeletonComponent,
    f_restricted: FractionalMatching,
    rng: np.random.Generator
) -> Matching:
    """
    Round the canonical fractional matching of one component with ratio <= 1.

    Every online node of the component keeps degree 1 through the rounding, so
    the result always has |S_i| edges and each offline node is matched with
    probability |S_i| / |T_i|.
    """
    if component.ratio > 1:
        raise ValueError(f"component ratio {component.ratio} > 1; use a maximum matching instead")
    for (u, v), w in f_restricted.weights.items():
        if u not in component.offline or v not in component.online:
            raise ValueError(f"edge ({u}, {v}) lies outside the component")
        if w < -FRACTIONAL_TOL or w > 1 + FRACTIONAL_TOL:
            raise ValueError(f"weight {w} on ({u}, {v}) outside [0, 1]")

    matching = _round_weights(f_restricted.weights, rng)
    if matching.size != len(component.online):
        raise RuntimeError(
            f"component rounding produced {matching.size} edges, expected {len(component.online)}"
        )
    return matching


if __name__ == "__main__":
    g = BipartiteGraph(2, 2, ((0, 1), (0, 1)))
    f = FractionalMatching.from_weights({(0, 0): 0.5, (1, 0): 0.5, (0, 1): 0.5, (1, 1): 0.5})
    m = dependent_round(f, g, np.random.default_rng(3))
    assert m.size == 2 and m.is_valid(g)
    logger.info("rounding self-check passed")
