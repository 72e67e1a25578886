"""
Semi-Online Fractional Matching

- frac_preprocess / frac_online_run: skeleton-initialised water filling. The
  predicted side is placed by the canonical fractional matching, adversarial
  arrivals are poured at a uniform rate into their least-filled neighbours.
- dual_certificate: replays a run with closed-form dual increments and checks
  approximate dual feasibility against 1 - delta * e^(-delta).
- qp_balanced / reconstruct_g / agnostic_frac_run: the balanced quadratic
  program over the predicted graph and the neighbourhood-only reconstruction
  used by the agnostic algorithm.
"""

import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.optimize import minimize

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger
from graph_core import BipartiteGraph, FractionalMatching, matching_size, max_matching, offline_key, online_key
from bounds import fractional_bound
from skeleton import SkeletonDecomposition, canonical_fractional, decompose
from integral_algs import ArrivalEvent, realized_graph

try:
    from config_loader import get, get_tolerance
    CERTIFICATE_TOL = get_tolerance("certificate", 1e-6)
    KKT_TOL = get_tolerance("kkt", 1e-6)
    QP_FTOL = float(get("qp.ftol", 1e-14))
    QP_MAXITER = int(get("qp.maxiter", 2000))
    QP_ACTIVE_TOLS = tuple(float(t) for t in get("qp.active_set_thresholds", [1e-9, 1e-8, 1e-7, 1e-6, 1e-5]))
except ImportError:
    CERTIFICATE_TOL = 1e-6
    KKT_TOL = 1e-6
    QP_FTOL = 1e-14
    QP_MAXITER = 2000
    QP_ACTIVE_TOLS = (1e-9, 1e-8, 1e-7, 1e-6, 1e-5)

logger = ResilientLogger(__name__)

_SOURCE = "source"
_SINK = "sink"


@dataclass
class WaterLevels:
    """Fractional degree y_u of every offline node"""
    levels: np.ndarray

    @classmethod
    def zeros(cls, offline_count: int) -> 'WaterLevels':
        return cls(np.zeros(offline_count))

    def copy(self) -> 'WaterLevels':
        return WaterLevels(self.levels.copy())


@dataclass
class DualState:
    alpha: np.ndarray
    beta: Dict[int, float]
    delta: float
    delta_i: np.ndarray


@dataclass(frozen=True)
class AlphaProfile:
    """Offline duals of the balanced QP"""
    alpha: Tuple[float, ...]

    def to_dict(self) -> Dict:
        return {"alpha": list(self.alpha)}


@dataclass(frozen=True)
class FillEvent:
    """One adversarial water-filling step: (offline id, level before, level after) per filled node"""
    online: int
    segments: Tuple[Tuple[int, float, float], ...]


@dataclass
class CertificateReport:
    primal: float
    dual: float
    delta: float
    bound: float
    cond1: bool
    cond2_min_slack: float
    nonnegative: bool
    reduced: bool = False
    diagnostics: List[str] = field(default_factory=list)
    tolerance: float = CERTIFICATE_TOL

    @property
    def passed(self) -> bool:
        return self.cond1 and self.cond2_min_slack >= -self.tolerance and self.nonnegative

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def frac_preprocess(
    h: BipartiteGraph,
    decomposition: Optional[SkeletonDecomposition] = None
) -> Tuple[FractionalMatching, WaterLevels]:
    """Canonical fractional matching of H and the offline water levels it induces"""
    frac = canonical_fractional(decomposition or decompose(h), h)
    levels = np.array([frac.offline_level(u) for u in range(h.offline_count)], dtype=float)
    return frac, WaterLevels(levels)


def water_fill_step(levels: WaterLevels, neighbors: Sequence[int]) -> Tuple[Dict[int, float], WaterLevels]:
    """
    Pour one unit into the lowest neighbours until they share a common level z.

    Sorting the neighbour levels y_1 <= ... <= y_k, z is (1 + y_1 + ... + y_j) / j
    for the first j with z <= y_{j+1}; if the free capacity is at most 1 every
    neighbour is filled to 1.
    """
    nbrs = sorted(set(int(u) for u in neighbors))
    if not nbrs:
        return {}, levels.copy()

    y = levels.levels[nbrs]
    free = np.clip(1.0 - y, 0.0, None)
    if free.sum() <= 1.0:
        z = 1.0
    else:
        ys = np.sort(y)
        prefix = np.cumsum(ys)
        z = 1.0
        for j in range(1, len(ys) + 1):
            z = (1.0 + prefix[j - 1]) / j
            if j == len(ys) or z <= ys[j]:
                break

    new_levels = levels.copy()
    allocation: Dict[int, float] = {}
    for u, level in zip(nbrs, y):
        amount = min(max(0.0, z - level), max(0.0, 1.0 - level))
        if amount > 0.0:
            allocation[u] = amount
            new_levels.levels[u] = level + amount
    return allocation, new_levels


def _predicted_allocation(frac: FractionalMatching) -> Dict[int, List[Tuple[int, float]]]:
    rows: Dict[int, List[Tuple[int, float]]] = {}
    for (u, v), w in sorted(frac.weights.items()):
        rows.setdefault(v, []).append((u, w))
    return rows


def frac_online_run(
    h: BipartiteGraph,
    arrivals: Sequence[ArrivalEvent],
    trace: Optional[List[FillEvent]] = None,
    decomposition: Optional[SkeletonDecomposition] = None
) -> FractionalMatching:
    """
    Deterministic semi-online fractional matching. Output keys are (offline_id, arrival_index).

    Predicted arrivals are placed first with their canonical allocation (only on
    realised edges), then adversarial arrivals are water-filled in arrival order.
    """
    canonical, _ = frac_preprocess(h, decomposition)
    rows = _predicted_allocation(canonical)
    result = FractionalMatching()
    levels = WaterLevels.zeros(h.offline_count)
    seen: set = set()

    for index, event in enumerate(arrivals):
        identity = event.predicted_identity
        if identity is None:
            continue
        if identity in seen:
            raise ValueError(f"predicted node {identity} arrives twice (arrival {index})")
        seen.add(identity)
        realised = set(event.realized_neighbors)
        for u, w in rows.get(identity, []):
            if u in realised:
                result.add(u, index, w)
                levels.levels[u] += w

    for index, event in enumerate(arrivals):
        if event.predicted_identity is not None:
            continue
        allocation, new_levels = water_fill_step(levels, event.realized_neighbors)
        segments = tuple((u, float(levels.levels[u]), float(new_levels.levels[u])) for u in sorted(allocation))
        for u, amount in allocation.items():
            result.add(u, index, amount)
        levels = new_levels
        if trace is not None:
            trace.append(FillEvent(index, segments))

    return result


def _h_edge_preferring_optimum(h: BipartiteGraph, arrivals: Sequence[ArrivalEvent]) -> set:
    """Offline nodes covered by a maximum matching of G that uses as many predicted edges as possible"""
    net = nx.DiGraph()
    net.add_node(_SOURCE)
    net.add_node(_SINK)
    for index, event in enumerate(arrivals):
        net.add_edge(_SOURCE, online_key(index), capacity=1, weight=0)
        predicted = set(h.adjacency[event.predicted_identity]) if event.predicted_identity is not None else set()
        for u in event.realized_neighbors:
            net.add_edge(online_key(index), offline_key(u), capacity=1, weight=-1 if u in predicted else 0)
    for u in range(h.offline_count):
        net.add_edge(offline_key(u), _SINK, capacity=1, weight=0)

    flow = nx.max_flow_min_cost(net, _SOURCE, _SINK)
    return {u for u in range(h.offline_count) if flow[offline_key(u)][_SINK] > 0}


def reduce_to_optimum_support(
    h: BipartiteGraph,
    arrivals: Sequence[ArrivalEvent]
) -> Tuple[BipartiteGraph, List[ArrivalEvent]]:
    """Delete offline nodes left uncovered by the chosen optimum of G and re-index the rest"""
    kept = sorted(_h_edge_preferring_optimum(h, arrivals))
    index = {u: i for i, u in enumerate(kept)}
    h_reduced = BipartiteGraph(
        len(kept),
        h.online_count,
        tuple(tuple(index[u] for u in nbrs if u in index) for nbrs in h.adjacency)
    )
    reduced_arrivals = [
        ArrivalEvent(tuple(index[u] for u in e.realized_neighbors if u in index), e.predicted_identity)
        for e in arrivals
    ]
    return h_reduced, reduced_arrivals


def _check_trace(arrivals: Sequence[ArrivalEvent], trace: Sequence[FillEvent]) -> List[str]:
    expected = [i for i, e in enumerate(arrivals) if e.predicted_identity is None]
    got = [event.online for event in trace]
    if expected != got:
        return [f"trace covers arrivals {got[:5]}..., expected adversarial arrivals {expected[:5]}..."]
    return []


def dual_certificate(
    h: BipartiteGraph,
    arrivals: Sequence[ArrivalEvent],
    trace: Sequence[FillEvent],
    tol: float = CERTIFICATE_TOL
) -> CertificateReport:
    """
    Replay a fractional run with the dual schedule and report both certificate conditions.

    Offline node u in a component with deficiency delta_i starts at
    alpha_u = e^(-delta_i) - delta e^(-delta), predicted online nodes at
    beta_v = 1 - e^(-delta_i). Filling u from y0 to y1 adds e^(y1-1) - e^(y0-1)
    to alpha_u and the rest of (y1 - y0) to the arriving node's beta. When an
    optimum of G leaves offline nodes uncovered, the run is replayed on the
    reduced instance instead (reported as reduced=True).
    """
    for index, event in enumerate(arrivals):
        identity = event.predicted_identity
        if identity is not None and event.realized_neighbors != h.adjacency[identity]:
            raise ValueError(f"arrival {index} does not realise predicted node {identity} exactly")
    mismatch = _check_trace(arrivals, trace)
    if mismatch:
        raise ValueError(f"trace/instance mismatch: {mismatch[0]}")

    reduced = False
    covered = _h_edge_preferring_optimum(h, arrivals)
    if len(covered) < h.offline_count:
        reduced = True
        h, arrivals = reduce_to_optimum_support(h, arrivals)
        replay: List[FillEvent] = []
        frac_online_run(h, arrivals, replay)
        trace = replay

    g = realized_graph(h.offline_count, arrivals)
    nu_g = matching_size(g)
    nu_h = matching_size(h)
    delta = min(1.0, max(0.0, 1.0 - nu_h / nu_g)) if nu_g else 0.0
    bound = fractional_bound(delta)
    shift = delta * math.exp(-delta)

    dec = decompose(h)
    delta_i = np.ones(h.offline_count)
    for u, i in dec.offline_component().items():
        delta_i[u] = dec.components[i].deficiency
    online_comp = dec.online_component()

    state = DualState(np.exp(-delta_i) - shift, {}, delta, delta_i)
    canonical, levels = frac_preprocess(h, dec)
    primal = canonical.total_weight
    for index, event in enumerate(arrivals):
        identity = event.predicted_identity
        if identity is not None and identity in online_comp:
            state.beta[index] = 1.0 - math.exp(-dec.components[online_comp[identity]].deficiency)

    diagnostics: List[str] = []
    y = levels.levels.copy()
    for event in trace:
        for u, y0, y1 in event.segments:
            if abs(y[u] - y0) > tol:
                raise ValueError(f"trace/instance mismatch: offline {u} at level {y[u]:.9f}, trace says {y0:.9f}")
            gain = math.exp(y1 - 1.0) - math.exp(y0 - 1.0)
            state.alpha[u] += gain
            state.beta[event.online] = state.beta.get(event.online, 0.0) + (y1 - y0) - gain
            primal += y1 - y0
            y[u] = y1

    dual = float(state.alpha.sum() + sum(state.beta.values()))
    cond1 = dual <= primal + tol
    if not cond1:
        diagnostics.append(f"dual {dual:.9f} exceeds primal {primal:.9f}")

    min_slack = math.inf
    for u, v in g.edges:
        slack = state.alpha[u] + state.beta.get(v, 0.0) - bound
        if slack < min_slack:
            min_slack = slack
        if slack < -tol:
            diagnostics.append(f"edge ({u}, {v}) has alpha + beta below bound by {-slack:.3g}")
    if min_slack == math.inf:
        min_slack = 0.0

    lowest = min([float(state.alpha.min()) if state.alpha.size else 0.0] + list(state.beta.values()))
    nonnegative = lowest >= -tol
    if not nonnegative:
        diagnostics.append(f"negative dual variable {lowest:.3g}")

    report = CertificateReport(primal, dual, delta, bound, cond1, float(min_slack), nonnegative, reduced, diagnostics, tol)
    logger.debug(f"certificate: primal={primal:.6f} dual={dual:.6f} slack={min_slack:.3g} reduced={reduced}")
    return report


def _solve_clamped_sum(offsets: np.ndarray, target: float) -> float:
    """Smallest t with sum_k min(max(0, t - offsets_k), 1) = target"""
    offsets = np.asarray(offsets, dtype=float)
    if target > len(offsets):
        raise ValueError(f"target {target} exceeds the {len(offsets)} available terms")
    breakpoints = np.unique(np.concatenate([offsets, offsets + 1.0]))
    values = np.clip(breakpoints[:, None] - offsets[None, :], 0.0, 1.0).sum(axis=1)
    k = int(np.argmax(values >= target))
    if k == 0:
        return float(breakpoints[0])
    t0, t1 = breakpoints[k - 1], breakpoints[k]
    f0, f1 = values[k - 1], values[k]
    return float(t0 + (target - f0) * (t1 - t0) / (f1 - f0))


def reconstruct_g(alphas: Sequence[float]) -> Tuple[np.ndarray, float]:
    """
    Assignments of one arrival from the offline duals of its neighbours.

    z is the largest solution of sum_j min(max(0, alpha_j - z), 1) = 1 and
    x_j = min(max(0, alpha_j - max(0, z)), 1).
    """
    a = np.asarray(alphas, dtype=float)
    if a.size == 0:
        raise ValueError("reconstruct_g needs at least one alpha")
    if (a < -1e-12).any():
        raise ValueError(f"alphas must be non-negative, got min {a.min()}")
    z = -_solve_clamped_sum(-a, 1.0)
    return np.clip(a - max(0.0, z), 0.0, 1.0), z


def _incidence(h: BipartiteGraph, edges: Sequence[Tuple[int, int]]) -> Tuple[np.ndarray, np.ndarray]:
    offline_rows = np.zeros((h.offline_count, len(edges)))
    online_rows = np.zeros((h.online_count, len(edges)))
    for k, (u, v) in enumerate(edges):
        offline_rows[u, k] = 1.0
        online_rows[v, k] = 1.0
    return offline_rows, online_rows


def _slsqp_iterate(offline_rows: np.ndarray, online_rows: np.ndarray, start: np.ndarray) -> np.ndarray:
    """
    SLSQP from a feasible vertex. The objective Hessian is the identity, which is
    also SLSQP's initial quasi-Newton matrix, so its first LSQ subproblem is the QP itself.
    """
    result = minimize(
        lambda x: 0.5 * float(x @ x),
        start,
        jac=lambda x: x,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * len(start),
        constraints=[
            {"type": "eq", "fun": lambda x: offline_rows @ x - 1.0, "jac": lambda x: offline_rows},
            {"type": "ineq", "fun": lambda x: 1.0 - online_rows @ x, "jac": lambda x: -online_rows},
        ],
        options={"ftol": QP_FTOL, "maxiter": QP_MAXITER},
    )
    if not result.success:
        logger.debug(f"SLSQP stopped early ({result.message}); polishing its last iterate")
    return np.clip(result.x, 0.0, 1.0)


def _polish(
    offline_rows: np.ndarray,
    online_rows: np.ndarray,
    x: np.ndarray,
    tol: float
) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """
    Exact optimum on the active set read off x at threshold tol.

    Edges within tol of 0 or 1 are fixed there, online nodes within tol of 1 are
    saturated, and the free edges take the minimum-norm solution of the remaining
    equalities. Returns (x, free, upper, saturated), or None if that guess is infeasible.
    """
    upper = x >= 1.0 - tol
    free = (x > tol) & ~upper
    saturated = online_rows @ x >= 1.0 - tol

    rows = np.vstack([offline_rows, online_rows[saturated]])
    polished = upper.astype(float)
    if free.any():
        rhs = 1.0 - rows[:, ~free] @ polished[~free]
        polished[free] = np.linalg.lstsq(rows[:, free], rhs, rcond=None)[0]

    if np.abs(rows @ polished - 1.0).max(initial=0.0) > 1e-9:
        return None
    if polished.min(initial=0.0) < -1e-9 or polished.max(initial=0.0) > 1.0 + 1e-9:
        return None
    if (online_rows @ polished).max(initial=0.0) > 1.0 + 1e-9:
        return None
    return np.clip(polished, 0.0, 1.0), free, upper, saturated


def _recover_alpha(
    h: BipartiteGraph,
    edges: Sequence[Tuple[int, int]],
    x: np.ndarray,
    free: np.ndarray,
    upper: np.ndarray,
    saturated: np.ndarray,
    slack: float = 1e-12
) -> Optional[np.ndarray]:
    """
    Offline duals for a polished optimum, or None if none exist.

    The KKT form x_uv = min(max(0, alpha_u - beta_v), 1) with beta >= 0, and
    beta_v = 0 off the saturated online nodes, is a system of difference
    constraints. It is solved by shortest paths from a virtual source; "zero"
    pins the common offset.
    """
    net = nx.DiGraph()

    def at_most(i, j, c: float):
        # y_i - y_j <= c
        if net.has_edge(j, i) and net[j][i]["weight"] <= c:
            return
        net.add_edge(j, i, weight=c)

    for k, (u, v) in enumerate(edges):
        a, b = offline_key(u), online_key(v)
        if free[k]:
            at_most(a, b, x[k] + slack)
            at_most(b, a, -x[k] + slack)
        elif upper[k]:
            at_most(b, a, -1.0 + slack)
        else:
            at_most(a, b, slack)
    for v in range(h.online_count):
        at_most("zero", online_key(v), 0.0)
        if not saturated[v]:
            at_most(online_key(v), "zero", 0.0)

    nodes = list(net.nodes)
    for node in nodes:
        net.add_edge(_SOURCE, node, weight=0.0)
    try:
        dist = nx.single_source_bellman_ford_path_length(net, _SOURCE)
    except nx.NetworkXUnbounded:
        return None
    base = dist["zero"]
    return np.array([max(0.0, dist[offline_key(u)] - base) for u in range(h.offline_count)])


def _reconstruct_on(h: BipartiteGraph, alpha: np.ndarray) -> FractionalMatching:
    frac = FractionalMatching()
    for v, nbrs in enumerate(h.adjacency):
        if not nbrs:
            continue
        x, _ = reconstruct_g(alpha[list(nbrs)])
        for u, w in zip(nbrs, x):
            if w > 0.0:
                frac.add(u, v, float(w))
    return frac


def qp_balanced(h: BipartiteGraph, residual: float = KKT_TOL) -> Tuple[FractionalMatching, AlphaProfile]:
    """
    Minimum squared-weight fractional matching saturating every offline node.

    SLSQP locates the active set, _polish solves the QP exactly on it and
    _recover_alpha finds offline duals by difference constraints. The returned
    matching is the reconstruction from those duals. It must agree with the
    polished optimum within `residual` and weigh n, otherwise RuntimeError.
    """
    n = h.offline_count
    if h.online_count != n:
        raise ValueError(f"balanced QP needs a square graph, got {n} offline and {h.online_count} online")
    matched = max_matching(h).by_offline()
    if len(matched) != n:
        raise ValueError("balanced QP needs a perfect matching in H")

    if n == 0:
        return FractionalMatching(), AlphaProfile(())

    edges = h.edges
    offline_rows, online_rows = _incidence(h, edges)
    start = np.array([1.0 if matched[u] == v else 0.0 for u, v in edges])
    iterate = _slsqp_iterate(offline_rows, online_rows, start)

    best = math.inf
    for tol in QP_ACTIVE_TOLS:
        polished = _polish(offline_rows, online_rows, iterate, tol)
        if polished is None:
            continue
        x, free, upper, saturated = polished
        alpha = _recover_alpha(h, edges, x, free, upper, saturated)
        if alpha is None:
            continue
        frac = _reconstruct_on(h, alpha)
        gap = max((abs(frac.weights.get(edge, 0.0) - w) for edge, w in zip(edges, x)), default=0.0)
        best = min(best, gap)
        if gap <= residual and abs(frac.total_weight - n) <= residual:
            logger.debug(f"balanced QP certified at active-set threshold {tol:g} (residual {gap:.2e})")
            return frac, AlphaProfile(tuple(float(a) for a in alpha))

    raise RuntimeError(
        f"balanced QP on {n} x {n} graph could not be certified: best reconstruction residual {best:.3g} > {residual:g}"
    )


def agnostic_frac_run(alpha: AlphaProfile, arrivals: Sequence[ArrivalEvent]) -> FractionalMatching:
    """Assign each arrival by reconstruct_g over its realised neighbours, clipped to residual capacity"""
    a = np.asarray(alpha.alpha, dtype=float)
    load = np.zeros(len(a))
    result = FractionalMatching()
    for index, event in enumerate(arrivals):
        nbrs = list(event.realized_neighbors)
        if not nbrs:
            continue
        x, _ = reconstruct_g(a[nbrs])
        for u, w in zip(nbrs, x):
            amount = min(float(w), 1.0 - load[u])
            if amount > 0.0:
                result.add(u, index, amount)
                load[u] += amount
    return result


if __name__ == "__main__":
    allocation, _ = water_fill_step(WaterLevels(np.array([0.2, 0.5])), [0, 1])
    assert abs(allocation[0] - 0.65) < 1e-12 and abs(allocation[1] - 0.35) < 1e-12
    x, z = reconstruct_g([1.0, 1.0])
    assert abs(z - 0.5) < 1e-12
    logger.info("fractional_algs self-check passed")
