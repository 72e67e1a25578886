"""
Set-System Max-Min Distributions

For a family of distinct d-subsets of an n-element universe, find a
distribution over the family whose expected intersection with every member
is at least d^2/n.

Small families solve the covering LP exactly: the packing dual
(max sum q_T s.t. sum_T q_T |S n T| <= d^2/n) starts from a feasible slack
basis, runs Bland's rule on a Fraction tableau, and the covering solution is
read off the final reduced costs. Large families fall back to
multiplicative weights on the zero-sum game.
"""

import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger

try:
    from config_loader import get
    EXACT_MAX_SETS = int(get("set_systems.exact_max_sets", 200))
    MW_EPSILON = float(get("set_systems.mw_epsilon", 0.01))
except ImportError:
    EXACT_MAX_SETS = 200
    MW_EPSILON = 0.01

logger = ResilientLogger(__name__)

Number = Union[Fraction, float]


@dataclass(frozen=True)
class SetSystem:
    """Distinct equal-size subsets of {0, ..., universe_size - 1}"""
    universe_size: int
    sets: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        sets = tuple(tuple(sorted(int(x) for x in s)) for s in self.sets)
        object.__setattr__(self, "sets", sets)
        if not sets:
            raise ValueError("set system needs at least one set")
        sizes = {len(s) for s in sets}
        if len(sizes) != 1 or 0 in sizes:
            raise ValueError(f"all sets must share one positive size, got sizes {sorted(sizes)}")
        if len(set(sets)) != len(sets):
            raise ValueError("set system contains duplicate sets")
        for s in sets:
            if len(set(s)) != len(s):
                raise ValueError(f"set {list(s)} repeats an element")
            if s[0] < 0 or s[-1] >= self.universe_size:
                raise ValueError(f"set {list(s)} has elements outside [0, {self.universe_size})")

    @property
    def d(self) -> int:
        return len(self.sets[0])

    @property
    def bound(self) -> Fraction:
        return Fraction(self.d * self.d, self.universe_size)

    def intersections(self) -> List[List[int]]:
        members = [set(s) for s in self.sets]
        return [[len(a & b) for b in members] for a in members]

    def to_dict(self) -> Dict:
        return {"n": self.universe_size, "sets": [list(s) for s in self.sets]}

    @classmethod
    def from_dict(cls, data: Dict) -> 'SetSystem':
        return cls(int(data["n"]), tuple(tuple(s) for s in data["sets"]))


@dataclass
class SetDistribution:
    """Probabilities over the family and the worst-case expected intersection they guarantee"""
    probabilities: List[Number]
    value: Number
    bound: Fraction
    method: str = "exact-simplex"
    slack: float = 0.0
    lp_primal: Optional[List[Fraction]] = None
    lp_dual: Optional[List[Fraction]] = None

    def to_dict(self) -> Dict:
        return {
            "p": [float(x) for x in self.probabilities],
            "value": float(self.value),
            "bound": float(self.bound),
            "method": self.method,
            "slack": self.slack,
        }


@dataclass
class PrimalDualReport:
    primal_feasible: bool
    dual_feasible: bool
    primal_objective: float
    dual_objective: float
    dual_at_most_one: bool
    weak_duality: bool
    diagnostics: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.primal_feasible and self.dual_feasible and self.dual_at_most_one and self.weak_duality


def expected_intersection(sys_: SetSystem, p: Sequence[Number], t_index: int) -> Number:
    """sum_S p_S |S n T| for T = sets[t_index]"""
    if not 0 <= t_index < len(sys_.sets):
        raise ValueError(f"set index {t_index} outside [0, {len(sys_.sets)})")
    if len(p) != len(sys_.sets):
        raise ValueError(f"{len(p)} probabilities for {len(sys_.sets)} sets")
    target = set(sys_.sets[t_index])
    return sum((p_s * len(target.intersection(s)) for p_s, s in zip(p, sys_.sets)), Fraction(0))


def _min_intersection(sys_: SetSystem, p: Sequence[Number]) -> Number:
    return min(expected_intersection(sys_, p, t) for t in range(len(sys_.sets)))


class _RationalTableau:
    """Dictionary-form tableau for max c.x s.t. Ax <= b, x >= 0, b >= 0"""

    def __init__(self, A: List[List[Fraction]], b: List[Fraction], c: List[Fraction]):
        self.m = len(A)
        self.n = len(c)
        self.A = [row[:] for row in A]
        self.b = b[:]
        self.c = c[:]
        self.nb_vars = list(range(self.n))
        self.b_vars = list(range(self.n, self.n + self.m))

    def pivot(self, i: int, j: int):
        piv = self.A[i][j]
        delta = self.c[j] / piv
        for col in range(self.n):
            self.c[col] -= delta * self.A[i][col]
        self.c[j] = -delta

        row = self.A[i]
        for col in range(self.n):
            row[col] = 1 / piv if col == j else row[col] / piv
        self.b[i] /= piv

        for k in range(self.m):
            if k == i:
                continue
            f = self.A[k][j]
            if f == 0:
                continue
            for col in range(self.n):
                self.A[k][col] = -f / piv if col == j else self.A[k][col] - f * row[col]
            self.b[k] -= f * self.b[i]

        self.nb_vars[j], self.b_vars[i] = self.b_vars[i], self.nb_vars[j]

    def bland_step(self) -> str:
        entering = [(self.nb_vars[j], j) for j in range(self.n) if self.c[j] > 0]
        if not entering:
            return "optimal"
        _, j = min(entering)
        leaving = [(self.b[i] / self.A[i][j], self.b_vars[i], i) for i in range(self.m) if self.A[i][j] > 0]
        if not leaving:
            return "unbounded"
        _, _, i = min(leaving)
        self.pivot(i, j)
        return "go_on"

    def solve(self) -> str:
        while True:
            status = self.bland_step()
            if status != "go_on":
                return status

    def primal_values(self) -> List[Fraction]:
        x = [Fraction(0)] * self.n
        for i, var in enumerate(self.b_vars):
            if var < self.n:
                x[var] = self.b[i]
        return x

    def dual_values(self) -> List[Fraction]:
        """Shadow prices of the m rows, read from the reduced costs of their slacks"""
        y = [Fraction(0)] * self.m
        for j, var in enumerate(self.nb_vars):
            if var >= self.n:
                y[var - self.n] = -self.c[j]
        return y


def solve_dual(sys_: SetSystem) -> Tuple[List[Fraction], Fraction, List[Fraction]]:
    """
    Exact packing LP over the family.

    Returns:
        (q, optimum, p) with q optimal for the packing LP and p optimal for the
        covering LP min sum p_S s.t. sum_S p_S |S n T| >= d^2/n
    """
    overlaps = sys_.intersections()
    bound = sys_.bound
    m = len(sys_.sets)
    tableau = _RationalTableau(
        [[Fraction(x) for x in row] for row in overlaps],
        [bound] * m,
        [Fraction(1)] * m,
    )
    status = tableau.solve()
    if status != "optimal":
        raise RuntimeError(f"packing LP reported {status}; it is bounded by construction")

    q = tableau.primal_values()
    p = [bound * y for y in tableau.dual_values()]
    return q, sum(q, Fraction(0)), p


def _solve_multiplicative_weights(sys_: SetSystem, epsilon: float) -> SetDistribution:
    """Hedge for the minimising player, best responses for the maximiser; the averaged best responses are epsilon*d optimal"""
    overlaps = np.array(sys_.intersections(), dtype=float) / sys_.d
    m = len(sys_.sets)
    rounds = max(1, math.ceil(math.log(m) / (2 * epsilon * epsilon)))
    eta = math.sqrt(8 * math.log(m) / rounds) if m > 1 else 0.0

    log_weights = np.zeros(m)
    counts = np.zeros(m)
    for _ in range(rounds):
        q = np.exp(log_weights - log_weights.max())
        q /= q.sum()
        best = int(np.argmax(overlaps @ q))
        counts[best] += 1
        log_weights -= eta * overlaps[best]

    p = counts / rounds
    value = float((p @ np.array(sys_.intersections(), dtype=float)).min())
    logger.debug(f"multiplicative weights: {rounds} rounds over {m} sets, value {value:.6f}")
    return SetDistribution(list(p), value, sys_.bound, "multiplicative-weights", epsilon * sys_.d)


def solve_distribution(sys_: SetSystem, tol: float = 1e-9) -> SetDistribution:
    """Distribution over the family with min_T E|S n T| >= d^2/n - tol"""
    m = len(sys_.sets)
    if sys_.d == sys_.universe_size:
        return SetDistribution([Fraction(1, m)] * m, Fraction(sys_.d), sys_.bound, "trivial")

    if m > EXACT_MAX_SETS:
        dist = _solve_multiplicative_weights(sys_, MW_EPSILON)
    else:
        q, optimum, p_raw = solve_dual(sys_)
        total = sum(p_raw, Fraction(0))
        probabilities = [x / total for x in p_raw]
        dist = SetDistribution(
            probabilities, _min_intersection(sys_, probabilities), sys_.bound,
            lp_primal=p_raw, lp_dual=q,
        )
        if optimum > 1:
            logger.error(f"packing optimum {optimum} exceeds 1")

    if dist.value < float(sys_.bound) - tol - dist.slack:
        logger.warn(f"distribution value {float(dist.value):.9f} below bound {float(sys_.bound):.9f}")
    return dist


def verify_primal_dual(sys_: SetSystem, p: Sequence[Number], q: Sequence[Number], tol: float = 1e-9) -> PrimalDualReport:
    """Feasibility of a covering solution p and packing solution q, plus the two objective inequalities"""
    overlaps = sys_.intersections()
    bound = sys_.bound
    diagnostics: List[str] = []

    primal_feasible = True
    for s, value in enumerate(p):
        if value < -tol:
            primal_feasible = False
            diagnostics.append(f"p[{s}] = {float(value):.3g} is negative")
    for t, row in enumerate(overlaps):
        covered = sum(p_s * overlaps[s][t] for s, p_s in enumerate(p))
        if covered < bound - tol:
            primal_feasible = False
            diagnostics.append(f"set {t} covered {float(covered):.6f} < {float(bound):.6f}")

    dual_feasible = True
    for t, value in enumerate(q):
        if value < -tol:
            dual_feasible = False
            diagnostics.append(f"q[{t}] = {float(value):.3g} is negative")
    for s, row in enumerate(overlaps):
        load = sum(q_t * row[t] for t, q_t in enumerate(q))
        if load > bound + tol:
            dual_feasible = False
            diagnostics.append(f"set {s} packs {float(load):.6f} > {float(bound):.6f}")

    primal_objective = float(sum(p))
    dual_objective = float(sum(q))
    dual_at_most_one = dual_objective <= 1 + tol
    weak = dual_objective <= primal_objective + tol
    if not dual_at_most_one:
        diagnostics.append(f"dual objective {dual_objective:.9f} exceeds 1")
    if not weak:
        diagnostics.append(f"dual objective {dual_objective:.9f} exceeds primal {primal_objective:.9f}")

    return PrimalDualReport(primal_feasible, dual_feasible, primal_objective, dual_objective,
                            dual_at_most_one, weak, diagnostics)


def exact_game_value(sys_: SetSystem) -> Tuple[Fraction, Fraction]:
    """
    Exact lower and upper bounds on max_p min_T E|S n T|, read off one LP solve.

    The normalised covering solution guarantees the lower bound against every T.
    The normalised packing solution holds every S at or below the upper bound, so
    no distribution beats it. The two agree whenever both LPs are optimal.
    """
    q, optimum, p = solve_dual(sys_)
    overlaps = sys_.intersections()
    m = len(sys_.sets)
    p_total = sum(p, Fraction(0))
    lower = min(sum((p[s] * overlaps[s][t] for s in range(m)), Fraction(0)) for t in range(m)) / p_total
    upper = max(sum((q[t] * overlaps[s][t] for t in range(m)), Fraction(0)) for s in range(m)) / optimum
    return lower, upper


def brute_force_game_value(sys_: SetSystem, grid: int = 60) -> float:
    """Best min-intersection over all distributions with probabilities in multiples of 1/grid"""
    m = len(sys_.sets)
    if m > 6:
        raise ValueError(f"grid oracle limited to 6 sets, got {m}")
    overlaps = np.array(sys_.intersections(), dtype=float)
    if m == 1:
        return float(overlaps[0, 0])

    # stars and bars: each choice of m-1 bar positions is one grid distribution
    bars = np.array(list(combinations(range(grid + m - 1), m - 1)), dtype=int).reshape(-1, m - 1)
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), grid + m - 1)])
    points = (np.diff(edges, axis=1) - 1) / grid
    return float((points @ overlaps).min(axis=1).max())


def all_subsets_system(n: int, d: int) -> SetSystem:
    return SetSystem(n, tuple(combinations(range(n), d)))


if __name__ == "__main__":
    example = SetSystem(5, ((0, 1), (1, 2), (2, 3), (3, 4)))
    dist = solve_distribution(example)
    assert dist.value >= Fraction(4, 5)
    logger.info(f"set_systems self-check passed: value {dist.value}")
