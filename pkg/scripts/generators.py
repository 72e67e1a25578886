"""
Semi-Online Instance Generators

- gen_random_instance: planted-matching instances with a choice of adversary
  (random, targeted, anti-reserve) and arrival interleaving
- gen_hard_agnostic: the three-edge gadget instance that defeats agnostic
  algorithms
- gen_agnostic_instance: square (d, eps) instances for the agnostic
  fractional algorithm
- perturb_d_eps: iid edge deletion / addition on non-adversarial arrivals

Instances serialise to the instance JSON format and are validated against
library/schemas/instance.json on load.
"""

import json
import sys
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger, safe_file_read, safe_file_write, safe_json_load
from graph_core import BipartiteGraph, Matching, matching_size
from integral_algs import ArrivalEvent, iterative_preprocess, realized_graph, structured_preprocess

try:
    from config_loader import get
    AVG_DEGREE = float(get("generators.avg_degree", 3.0))
    PILOT_TRIALS = int(get("generators.pilot_trials", 200))
except ImportError:
    AVG_DEGREE = 3.0
    PILOT_TRIALS = 200

logger = ResilientLogger(__name__)

REPO_ROOT = Path(__file__).parent.parent
INSTANCE_SCHEMA = REPO_ROOT / "library" / "schemas" / "instance.json"

ADVERSARY_MODES = ("random", "targeted", "anti-reserve")
ARRIVAL_MODES = ("predicted-first", "adversarial-first", "random", "alternating")


@dataclass(frozen=True)
class SemiOnlineInstance:
    """Predicted graph H, the realised arrival sequence and its adversarial flags"""
    predicted: BipartiteGraph
    arrivals: Tuple[ArrivalEvent, ...]
    adversarial: Tuple[bool, ...]
    ground_truth: Optional[Matching] = None
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "arrivals", tuple(self.arrivals))
        object.__setattr__(self, "adversarial", tuple(bool(a) for a in self.adversarial))
        if len(self.arrivals) != len(self.adversarial):
            raise ValueError(f"{len(self.arrivals)} arrivals but {len(self.adversarial)} adversarial flags")
        for index, event in enumerate(self.arrivals):
            identity = event.predicted_identity
            if identity is not None and not 0 <= identity < self.predicted.online_count:
                raise ValueError(f"arrival {index} names predicted node {identity} outside H")
            if event.realized_neighbors and event.realized_neighbors[-1] >= self.predicted.offline_count:
                raise ValueError(f"arrival {index} has offline ids outside [0, {self.predicted.offline_count})")

    @property
    def n(self) -> int:
        return self.predicted.offline_count

    @property
    def d(self) -> int:
        return sum(self.adversarial)

    @cached_property
    def realized(self) -> BipartiteGraph:
        return realized_graph(self.predicted.offline_count, self.arrivals)

    def realized_graph(self) -> BipartiteGraph:
        return self.realized

    @property
    def nu_G(self) -> int:
        return matching_size(self.realized)

    @property
    def nu_H(self) -> int:
        return matching_size(self.predicted)

    @property
    def delta(self) -> float:
        """1 - nu(H) / nu(G), clipped to [0, 1]"""
        nu_g = self.nu_G
        if nu_g == 0:
            return 0.0
        return min(1.0, max(0.0, 1.0 - self.nu_H / nu_g))

    def marked_nodes(self) -> frozenset:
        """M*(V_A): offline partners of adversarial arrivals under the ground-truth optimum"""
        if self.ground_truth is None:
            return frozenset()
        return frozenset(u for u, v in self.ground_truth.pairs if self.adversarial[v])

    def to_dict(self) -> Dict:
        return {
            "predicted": self.predicted.to_dict(),
            "arrivals": [e.to_dict() for e in self.arrivals],
            "adversarial": list(self.adversarial),
            "ground_truth": self.ground_truth.to_list() if self.ground_truth is not None else None,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SemiOnlineInstance':
        truth = data.get("ground_truth")
        return cls(
            BipartiteGraph.from_dict(data["predicted"]),
            tuple(ArrivalEvent.from_dict(e) for e in data["arrivals"]),
            tuple(data["adversarial"]),
            Matching(tuple(tuple(p) for p in truth)) if truth is not None else None,
            data.get("seed"),
        )


def _schema(path: Path) -> Dict:
    return safe_json_load(safe_file_read(str(path), default="{}", logger=logger), default={}, logger=logger)


def validate_instance_dict(data: Dict) -> List[str]:
    """Schema violations of an instance JSON object; empty when valid"""
    validator = jsonschema.Draft7Validator(_schema(INSTANCE_SCHEMA))
    return [f"{'/'.join(str(p) for p in err.path) or '<root>'}: {err.message}"
            for err in validator.iter_errors(data)]


def load_instance(path: str) -> SemiOnlineInstance:
    content = safe_file_read(path, default=None, logger=logger)
    if content is None:
        raise ValueError(f"cannot read instance file {path}")
    data = safe_json_load(content, default=None, logger=logger)
    if data is None:
        raise ValueError(f"instance file {path} is not valid JSON")
    problems = validate_instance_dict(data)
    if problems:
        raise ValueError(f"instance file {path} violates schema: {problems[0]}")
    return SemiOnlineInstance.from_dict(data)


def save_instance(instance: SemiOnlineInstance, path: str) -> bool:
    return safe_file_write(path, json.dumps(instance.to_dict(), indent=2) + "\n", logger=logger)


def _interleave(
    predicted: List[ArrivalEvent],
    adversarial: List[ArrivalEvent],
    arrival_mode: str,
    rng: np.random.Generator
) -> Tuple[List[ArrivalEvent], List[bool]]:
    tagged = [(e, False) for e in predicted]
    attack = [(e, True) for e in adversarial]

    if arrival_mode == "predicted-first":
        order = tagged + attack
    elif arrival_mode == "adversarial-first":
        order = attack + tagged
    elif arrival_mode == "random":
        combined = tagged + attack
        order = [combined[i] for i in rng.permutation(len(combined))]
    elif arrival_mode == "alternating":
        if not attack:
            order = tagged
        else:
            gap = max(1, len(tagged) // len(attack))
            order = []
            rest = list(attack)
            for i, item in enumerate(tagged, start=1):
                order.append(item)
                if i % gap == 0 and rest:
                    order.append(rest.pop(0))
            order.extend(rest)
    else:
        raise ValueError(f"unknown arrival mode {arrival_mode!r}; expected one of {ARRIVAL_MODES}")

    return [e for e, _ in order], [flag for _, flag in order]


def _pilot_match_frequency(h: BipartiteGraph, trials: int, rng: np.random.Generator, preprocess: str) -> np.ndarray:
    counts = np.zeros(h.offline_count)
    d = h.offline_count - h.online_count
    for _ in range(trials):
        if preprocess == "iterative":
            result = iterative_preprocess(h, d, rng)
        else:
            result = structured_preprocess(h, rng)
        for u in result.matching.offline_nodes():
            counts[u] += 1
    return counts / max(1, trials)


def gen_random_instance(
    n: int,
    d: int,
    adversary_mode: str,
    arrival_mode: str,
    rng: np.random.Generator,
    avg_degree: Optional[float] = None,
    pilot_trials: Optional[int] = None,
    preprocess: str = "structured",
    seed: Optional[int] = None
) -> SemiOnlineInstance:
    """
    Planted-matching instance with n offline nodes and n - d predicted online nodes.

    Online node j is planted on offline perm[j]; the d adversarial arrivals
    keep their planted partners perm[n - d + k], so the planted matching is
    always a perfect matching of G.
    """
    if n < 0 or not 0 <= d <= n:
        raise ValueError(f"need 0 <= d <= n, got n={n}, d={d}")
    if adversary_mode not in ADVERSARY_MODES:
        raise ValueError(f"unknown adversary mode {adversary_mode!r}; expected one of {ADVERSARY_MODES}")
    if arrival_mode not in ARRIVAL_MODES:
        raise ValueError(f"unknown arrival mode {arrival_mode!r}; expected one of {ARRIVAL_MODES}")

    avg_degree = AVG_DEGREE if avg_degree is None else avg_degree
    edge_prob = min(1.0, avg_degree / n) if n else 0.0
    perm = rng.permutation(n)
    predicted_count = n - d

    rows = []
    for j in range(predicted_count):
        extra = rng.random(n) < edge_prob
        extra[perm[j]] = True
        rows.append(tuple(int(u) for u in extra.nonzero()[0]))
    h = BipartiteGraph(n, predicted_count, tuple(rows))

    marked = [int(perm[predicted_count + k]) for k in range(d)]
    if adversary_mode == "random":
        neighbourhoods = []
        for k in range(d):
            extra = rng.random(n) < edge_prob
            extra[marked[k]] = True
            neighbourhoods.append(tuple(int(u) for u in extra.nonzero()[0]))
    elif adversary_mode == "targeted":
        neighbourhoods = [tuple(sorted(marked))] * d
    else:
        trials = PILOT_TRIALS if pilot_trials is None else pilot_trials
        frequency = _pilot_match_frequency(h, trials, rng, preprocess) if d and predicted_count else np.zeros(n)
        width = max(1, int(round(avg_degree)))
        hot = [int(u) for u in np.argsort(-frequency, kind="stable")[:width]]
        neighbourhoods = [tuple(sorted(set(hot) | {marked[k]})) for k in range(d)]

    predicted_events = [ArrivalEvent(h.adjacency[j], j) for j in range(predicted_count)]
    adversarial_events = [ArrivalEvent(nbrs) for nbrs in neighbourhoods]
    partner_of = {id(e): int(perm[j]) for j, e in enumerate(predicted_events)}
    partner_of.update({id(e): marked[k] for k, e in enumerate(adversarial_events)})

    arrivals, flags = _interleave(predicted_events, adversarial_events, arrival_mode, rng)
    truth = Matching(tuple((partner_of[id(e)], index) for index, e in enumerate(arrivals)))

    logger.debug(f"random instance n={n} d={d} adversary={adversary_mode} arrival={arrival_mode}")
    return SemiOnlineInstance(h, tuple(arrivals), tuple(flags), truth, seed)


def gen_hard_agnostic(n: int, d: int, rng: np.random.Generator, seed: Optional[int] = None) -> SemiOnlineInstance:
    """
    n/2 gadgets: online 2i -> {2i, 2i+1}, online 2i+1 -> {2i+1}. In d uniformly
    chosen gadgets the second online node is rewired to {2i} only.
    """
    if n % 2:
        raise ValueError(f"hard agnostic instance needs even n, got {n}")
    if not 0 <= d <= n // 2:
        raise ValueError(f"need 0 <= d <= n/2, got d={d} for n={n}")
    if 4 * d >= n and d > 0:
        logger.warn(f"d={d} is outside the d < n/4 regime for n={n}")

    gadgets = n // 2
    rows = []
    for i in range(gadgets):
        rows.append((2 * i, 2 * i + 1))
        rows.append((2 * i + 1,))
    h = BipartiteGraph(n, n, tuple(rows))

    flipped = set(int(i) for i in rng.choice(gadgets, size=d, replace=False)) if d else set()
    arrivals = []
    flags = []
    truth = []
    for i in range(gadgets):
        first, second = 2 * i, 2 * i + 1
        arrivals.append(ArrivalEvent(rows[first]))
        flags.append(False)
        if i in flipped:
            arrivals.append(ArrivalEvent((first,)))
            flags.append(True)
            truth.extend([(second, first), (first, second)])
        else:
            arrivals.append(ArrivalEvent(rows[second]))
            flags.append(False)
            truth.extend([(first, first), (second, second)])

    return SemiOnlineInstance(h, tuple(arrivals), tuple(flags), Matching(tuple(truth)), seed)


def perturb_d_eps(inst: SemiOnlineInstance, eps: float, rng: np.random.Generator) -> SemiOnlineInstance:
    """Delete each realised edge of a non-adversarial arrival with prob eps, add each absent pair with prob eps*|M|/n^2"""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps={eps} outside [0, 1]")
    if eps == 0.0:
        return inst

    n = inst.n
    add_prob = eps * inst.nu_H / (n * n) if n else 0.0
    arrivals = []
    for event, adversarial in zip(inst.arrivals, inst.adversarial):
        if adversarial:
            arrivals.append(event)
            continue
        present = np.zeros(n, dtype=bool)
        present[list(event.realized_neighbors)] = True
        keep = present & (rng.random(n) >= eps)
        add = ~present & (rng.random(n) < add_prob)
        arrivals.append(ArrivalEvent(tuple(int(u) for u in (keep | add).nonzero()[0]), event.predicted_identity))

    return SemiOnlineInstance(inst.predicted, tuple(arrivals), inst.adversarial, None, inst.seed)


def gen_agnostic_instance(
    n: int,
    d: int,
    eps: float,
    rng: np.random.Generator,
    avg_degree: Optional[float] = None,
    seed: Optional[int] = None
) -> SemiOnlineInstance:
    """Square predicted graph with a planted perfect matching; d arrivals rewired, the rest perturbed"""
    if not 0 <= d <= n:
        raise ValueError(f"need 0 <= d <= n, got n={n}, d={d}")
    avg_degree = AVG_DEGREE if avg_degree is None else avg_degree
    edge_prob = min(1.0, avg_degree / n) if n else 0.0

    perm = rng.permutation(n)
    rows = []
    for j in range(n):
        extra = rng.random(n) < edge_prob
        extra[perm[j]] = True
        rows.append(tuple(int(u) for u in extra.nonzero()[0]))
    h = BipartiteGraph(n, n, tuple(rows))

    rewired = set(int(j) for j in rng.choice(n, size=d, replace=False)) if d else set()
    events = []
    flags = []
    for j in range(n):
        if j in rewired:
            while True:
                fresh = rng.random(n) < edge_prob
                if not fresh.any():
                    fresh[int(rng.integers(n))] = True
                nbrs = tuple(int(u) for u in fresh.nonzero()[0])
                if nbrs != rows[j]:
                    break
            events.append(ArrivalEvent(nbrs))
            flags.append(True)
        else:
            events.append(ArrivalEvent(rows[j]))
            flags.append(False)

    order = rng.permutation(n)
    base = SemiOnlineInstance(
        h,
        tuple(events[i] for i in order),
        tuple(flags[i] for i in order),
        None,
        seed,
    )
    return perturb_d_eps(base, eps, rng)


if __name__ == "__main__":
    rng = np.random.default_rng(5)
    inst = gen_random_instance(20, 5, "targeted", "random", rng)
    assert inst.nu_G == 20 and abs(inst.delta - 0.25) < 1e-12
    assert inst.ground_truth.is_valid(inst.realized_graph())
    logger.info("generators self-check passed")
