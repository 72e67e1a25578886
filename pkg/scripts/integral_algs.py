"""
Semi-Online Integral Matching Algorithms

Preprocessing phases that choose a maximum matching of the predicted graph H
together with an ordered reserved set R of offline nodes held back for
adversarial arrivals:
- iterative sampling (repeatedly delete a uniformly random removable node)
- structured sampling (skeleton decomposition + dependent rounding), which
  also handles predicted graphs without an online-saturating matching

The shared online phase matches predicted arrivals along the preprocessing
matching and adversarial arrivals by RANKING over R. Also here: the agnostic
algorithm that recognises predicted nodes by neighbourhood, plain RANKING,
and the p-strategy on the agnostic hardness gadgets.
"""

import sys
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger
from graph_core import BipartiteGraph, Matching, is_removable, matching_size, max_matching
from skeleton import SkeletonDecomposition, canonical_fractional, decompose
from rounding import sample_component_matching

logger = ResilientLogger(__name__)

TraceEntry = Tuple[int, Optional[int]]


@dataclass(frozen=True)
class PreprocessResult:
    """Maximum matching of H plus the reserved offline nodes in RANKING order"""
    matching: Matching
    reserved: Tuple[int, ...]

    def to_dict(self) -> Dict:
        return {"matching": self.matching.to_list(), "reserved": list(self.reserved)}


@dataclass(frozen=True)
class ArrivalEvent:
    """One online arrival: realised offline neighbours and, when known, its node id in H"""
    realized_neighbors: Tuple[int, ...]
    predicted_identity: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "realized_neighbors", tuple(sorted({int(u) for u in self.realized_neighbors})))
        if self.predicted_identity is not None:
            object.__setattr__(self, "predicted_identity", int(self.predicted_identity))

    def to_dict(self) -> Dict:
        return {"neighbors": list(self.realized_neighbors), "identity": self.predicted_identity}

    @classmethod
    def from_dict(cls, data: Dict) -> 'ArrivalEvent':
        return cls(tuple(data["neighbors"]), data.get("identity"))


def realized_graph(offline_count: int, arrivals: Sequence[ArrivalEvent]) -> BipartiteGraph:
    """Realised graph G: online node i is the i-th arrival"""
    return BipartiteGraph(offline_count, len(arrivals), tuple(e.realized_neighbors for e in arrivals))


def _shuffled(nodes: Sequence[int], rng: np.random.Generator) -> Tuple[int, ...]:
    nodes = list(nodes)
    return tuple(nodes[i] for i in rng.permutation(len(nodes)))


def iterative_preprocess(h: BipartiteGraph, d: int, rng: np.random.Generator) -> PreprocessResult:
    """Iterative sampling: d rounds of deleting a uniformly random removable offline node"""
    n = h.offline_count
    if not 0 <= d <= n:
        raise ValueError(f"d={d} outside [0, {n}]")
    target = n - d
    nu = matching_size(h)
    if nu != target:
        raise ValueError(f"iterative sampling needs nu(H) = n - d = {target}, got {nu}")

    current = h
    sampled: List[int] = []
    for step in range(d):
        taken = set(sampled)
        removable = [u for u in range(n) if u not in taken and is_removable(current, u, target)]
        if not removable:
            raise RuntimeError(f"no removable offline node at step {step + 1}")
        chosen = removable[int(rng.integers(len(removable)))]
        logger.debug(f"step {step + 1}: {len(removable)} removable, sampled {chosen}")
        sampled.append(chosen)
        current = current.remove_offline([chosen])

    return PreprocessResult(max_matching(current), _shuffled(sampled, rng))


def structured_preprocess(
    h: BipartiteGraph,
    rng: np.random.Generator,
    decomposition: Optional[SkeletonDecomposition] = None
) -> PreprocessResult:
    """Structured sampling: round each skeleton component; reserve what stays unmatched"""
    dec = decomposition or decompose(h)
    frac = canonical_fractional(dec, h)

    pairs: List[Tuple[int, int]] = []
    for comp in dec.components:
        if comp.ratio > 1:
            pairs.extend(max_matching(h.induced(comp.online, comp.offline)).pairs)
        else:
            restricted = frac.restricted(comp.online, comp.offline)
            pairs.extend(sample_component_matching(comp, restricted, rng).pairs)

    matching = Matching(tuple(pairs))
    matched = matching.offline_nodes()
    unmatched = [u for u in range(h.offline_count) if u not in matched]
    return PreprocessResult(matching, _shuffled(unmatched, rng))


def online_run(
    pre: PreprocessResult,
    h: BipartiteGraph,
    arrivals: Sequence[ArrivalEvent],
    trace: Optional[List[TraceEntry]] = None
) -> Matching:
    """
    Online phase. Output pairs are (offline_id, arrival_index).

    Predicted arrivals take their partner under pre.matching when that edge is
    realised and otherwise stay unmatched; adversarial arrivals take the first
    free realised neighbour in reserved order.
    """
    partner = pre.matching.by_online()
    rank = {u: i for i, u in enumerate(pre.reserved)}
    taken: set = set()
    seen: set = set()
    pairs: List[Tuple[int, int]] = []

    for index, event in enumerate(arrivals):
        choice: Optional[int] = None
        identity = event.predicted_identity
        if identity is not None:
            if not 0 <= identity < h.online_count:
                raise ValueError(f"arrival {index} claims unknown predicted node {identity}")
            if identity in seen:
                raise ValueError(f"predicted node {identity} arrives twice (arrival {index})")
            seen.add(identity)
            u = partner.get(identity)
            if u is not None and u not in taken and u in event.realized_neighbors:
                choice = u
        else:
            candidates = [u for u in event.realized_neighbors if u in rank and u not in taken]
            if candidates:
                choice = min(candidates, key=rank.__getitem__)

        if choice is not None:
            taken.add(choice)
            pairs.append((choice, index))
        if trace is not None:
            trace.append((index, choice))

    return Matching(tuple(pairs))


def ranking_run(offline_count: int, arrivals: Sequence[ArrivalEvent], rng: np.random.Generator) -> Matching:
    """Plain RANKING: one uniform permutation of all offline nodes, no preprocessing"""
    pre = PreprocessResult(Matching(()), _shuffled(range(offline_count), rng))
    anonymous = [ArrivalEvent(e.realized_neighbors) for e in arrivals]
    return online_run(pre, BipartiteGraph.empty(offline_count, 0), anonymous)


def agnostic_integral_run(h: BipartiteGraph, arrivals: Sequence[ArrivalEvent]) -> Matching:
    """Match an arrival along a fixed perfect matching of H when its neighbourhood equals an unclaimed predicted one"""
    nu = matching_size(h)
    if nu != h.online_count:
        raise ValueError(f"agnostic matching needs H to saturate its online side, nu(H)={nu} < {h.online_count}")
    partner = max_matching(h).by_online()

    unclaimed: Dict[Tuple[int, ...], List[int]] = defaultdict(list)
    for v, nbrs in enumerate(h.adjacency):
        unclaimed[nbrs].append(v)
    for nodes in unclaimed.values():
        nodes.reverse()

    taken: set = set()
    pairs: List[Tuple[int, int]] = []
    for index, event in enumerate(arrivals):
        pool = unclaimed.get(event.realized_neighbors)
        if not pool:
            continue
        v = pool.pop()
        u = partner[v]
        if u not in taken:
            taken.add(u)
            pairs.append((u, index))
    return Matching(tuple(pairs))


def gadget_strategy_run(arrivals: Sequence[ArrivalEvent], p: float, rng: np.random.Generator) -> Matching:
    """
    p-strategy on three-edge gadgets (arrivals 2i, 2i+1 own offline nodes 2i, 2i+1).

    Arrival 2i goes to offline 2i with probability p and to 2i+1 otherwise,
    falling back to the other in-gadget node when the preferred edge is
    missing; arrival 2i+1 takes any free in-gadget neighbour.
    """
    if len(arrivals) % 2:
        raise ValueError(f"gadget arrivals come in pairs, got {len(arrivals)}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")

    pairs: List[Tuple[int, int]] = []
    for gadget in range(len(arrivals) // 2):
        first, second = 2 * gadget, 2 * gadget + 1
        own = (first, second)
        taken = None

        realized = [u for u in own if u in arrivals[first].realized_neighbors]
        preferred = own if rng.random() < p else own[::-1]
        for u in preferred:
            if u in realized:
                taken = u
                pairs.append((u, first))
                break

        for u in own:
            if u != taken and u in arrivals[second].realized_neighbors:
                pairs.append((u, second))
                break
    return Matching(tuple(pairs))


def marked_overlap(reserved: Iterable[int], marked: Iterable[int]) -> int:
    """|R intersect M*(V_A)|"""
    return len(set(reserved) & set(marked))


def component_overlaps(decomposition: SkeletonDecomposition, marked: Iterable[int]) -> Tuple[int, ...]:
    """Number of marked offline nodes in each T_i, in component order"""
    marked = set(marked)
    return tuple(len(comp.offline & marked) for comp in decomposition.components)


if __name__ == "__main__":
    rng = np.random.default_rng(11)
    h = BipartiteGraph(2, 1, ((0, 1),))
    pre = structured_preprocess(h, rng)
    arrivals = [ArrivalEvent((0, 1), 0), ArrivalEvent((0, 1))]
    assert online_run(pre, h, arrivals).size == 2
    logger.info("integral_algs self-check passed")
