#!/usr/bin/env python3
"""
Acceptance Self-Test for the semionline toolkit

Runs every acceptance criterion at full scale (or scaled down with --quick),
logs a pass/fail summary and writes a JSON report to results/self_test.json.
"""

import argparse
import json
import math
import sys
from datetime import datetime
from fractions import Fraction
from itertools import combinations, product
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger, check_dependencies, safe_file_read, safe_file_write
from bounds import (
    agnostic_integral_allowance,
    agnostic_integral_reference,
    fractional_bound,
    structured_bound,
)
from graph_core import BipartiteGraph, FractionalMatching, random_graph
from skeleton import brute_force_decompose, canonical_fractional, decompose
from rounding import sample_component_matching
from integral_algs import agnostic_integral_run, gadget_strategy_run
from fractional_algs import frac_online_run, qp_balanced, reconstruct_g, reduce_to_optimum_support
from set_systems import SetSystem, exact_game_value, solve_distribution, solve_dual, verify_primal_dual
from ski_rental import competitive_ratio, expected_cost, monte_carlo_cost
from generators import ADVERSARY_MODES, ARRIVAL_MODES, gen_hard_agnostic, gen_random_instance, perturb_d_eps
from harness_cli import ExperimentConfig, assert_bounds, run_experiment, run_trial

REPO_ROOT = Path(__file__).parent.parent
TEST_RESULTS_FILE = REPO_ROOT / "results" / "self_test.json"

REQUIRED_PACKAGES = ["numpy", "networkx", "scipy", "yaml", "jsonschema", "dotenv"]


class TestResult:
    """Represents the result of a single acceptance check"""
    def __init__(self, name: str, passed: bool, message: str = "", category: str = ""):
        self.name = name
        self.passed = passed
        self.message = message
        self.category = category
        self.severity = "high" if not passed else "info"


def slsqp_balanced_qp(h: BipartiteGraph) -> Dict[Tuple[int, int], float]:
    """Independent solve of min 1/2 sum x^2 with offline degrees = 1, online degrees <= 1"""
    from scipy.optimize import minimize

    edges = h.edges
    n_edges = len(edges)
    offline_rows = np.zeros((h.offline_count, n_edges))
    online_rows = np.zeros((h.online_count, n_edges))
    for k, (u, v) in enumerate(edges):
        offline_rows[u, k] = 1.0
        online_rows[v, k] = 1.0

    start = np.zeros(n_edges)
    for k, (u, _) in enumerate(edges):
        start[k] = 1.0 / max(1, h.offline_degree(u))

    result = minimize(
        lambda x: 0.5 * float(x @ x),
        start,
        jac=lambda x: x,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * n_edges,
        constraints=[
            {"type": "eq", "fun": lambda x: offline_rows @ x - 1.0, "jac": lambda x: offline_rows},
            {"type": "ineq", "fun": lambda x: 1.0 - online_rows @ x, "jac": lambda x: -online_rows},
        ],
        options={"ftol": 1e-14, "maxiter": 2000},
    )
    return {edge: float(w) for edge, w in zip(edges, result.x)}


def perfect_matching_graph(n: int, edge_prob: float, rng: np.random.Generator) -> BipartiteGraph:
    """Random n x n graph with a planted perfect matching"""
    perm = rng.permutation(n)
    base = random_graph(n, n, edge_prob, rng)
    rows = [tuple(sorted(set(base.adjacency[v]) | {int(perm[v])})) for v in range(n)]
    return BipartiteGraph(n, n, tuple(rows))


class SelfTest:
    """Acceptance runner"""

    def __init__(self, quick: bool = False, verbose: bool = False, seed: int = 20240917):
        self.quick = quick
        self.verbose = verbose
        self.seed = seed
        self.results: List[TestResult] = []
        self.category = ""

        import logging
        log_level = logging.DEBUG if verbose else logging.INFO
        self.logger = ResilientLogger("self_test", level=log_level)

    def log(self, message: str, level: str = "INFO"):
        """Log message with structured logging"""
        if level == "ERROR":
            self.logger.error(message)
        elif level == "WARNING":
            self.logger.warn(message)
        elif level == "DEBUG":
            self.logger.debug(message)
        else:
            self.logger.info(message)

    def scaled(self, full: int, quick: int) -> int:
        return quick if self.quick else full

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    def record(self, name: str, passed: bool, message: str):
        self.results.append(TestResult(name, passed, message, self.category))
        self.log(f"  [{'PASS' if passed else 'FAIL'}] {name}: {message}", "INFO" if passed else "ERROR")

    def categories(self) -> Dict[str, Callable[[], None]]:
        return {
            "dependencies": self.test_dependencies,
            "fractional": self.test_fractional_ratio_and_certificate,
            "structured": self.test_structured_sampling,
            "iterative": self.test_iterative_sampling,
            "rounding": self.test_rounding_marginals,
            "skeleton": self.test_skeleton,
            "set-systems": self.test_set_systems,
            "agnostic-integral": self.test_agnostic_integral,
            "agnostic-fractional": self.test_agnostic_fractional,
            "qp": self.test_qp_reconstruction,
            "monotonicity": self.test_monotonicity,
            "ski-rental": self.test_ski_rental,
            "extremes": self.test_extremes,
        }

    def run_all_tests(self, only: Optional[str] = None) -> bool:
        """Run all test categories"""
        self.log("=" * 60)
        self.log(f"Starting acceptance self-test ({'quick' if self.quick else 'full'} scale)")
        self.log("=" * 60)

        start_time = datetime.now()
        categories = self.categories()
        if only is not None:
            if only not in categories:
                self.log(f"Unknown category {only!r}; choose from {', '.join(categories)}", "ERROR")
                return False
            categories = {only: categories[only]}

        for name, test in categories.items():
            self.category = name
            self.log(f"\n--- {name} ---")
            try:
                test()
            except Exception as e:
                self.logger.error(f"category {name} crashed: {e}", exc_info=True)
                self.record(f"{name}_crashed", False, str(e))

        duration = (datetime.now() - start_time).total_seconds()
        passed = sum(1 for r in self.results if r.passed)
        failed = sum(1 for r in self.results if not r.passed)
        self.generate_report(duration, passed, failed)
        return failed == 0

    def test_dependencies(self):
        installed, missing = check_dependencies(REQUIRED_PACKAGES, logger=self.logger)
        self.record("dependencies", not missing,
                    f"missing: {', '.join(missing)}" if missing else f"{len(installed)} packages importable")

    def test_fractional_ratio_and_certificate(self):
        """Deterministic ratio bound and both certificate conditions on every generated instance"""
        sizes = (20,) if self.quick else (20, 60, 120)
        deltas = (0.1, 0.3, 0.5, 0.8, 1.0)
        target = self.scaled(500, 60)
        combos = [(n, dl, adv, arr) for n in sizes for dl in deltas for adv in ADVERSARY_MODES for arr in ARRIVAL_MODES]
        rng = self.rng(1)

        worst_gap = math.inf
        ratio_failures = 0
        cert_failures = 0
        min_slack = math.inf
        for i in range(target):
            n, delta, adversary, arrival = combos[i % len(combos)]
            inst = gen_random_instance(n, int(round(delta * n)), adversary, arrival, rng, pilot_trials=self.scaled(200, 20))
            record = run_trial(inst, "fractional", int(rng.integers(2**31)), trial=i)
            gap = record.size_or_weight - fractional_bound(record.delta) * record.nu_G
            worst_gap = min(worst_gap, gap)
            if gap < -1e-6:
                ratio_failures += 1
            if record.certificate is None or not record.certificate["passed"]:
                cert_failures += 1
            else:
                min_slack = min(min_slack, record.certificate["cond2_min_slack"])

        self.record("fractional_ratio", ratio_failures == 0,
                    f"{target} instances, worst weight - bound*nu(G) = {worst_gap:.3g}")
        self.record("dual_certificate", cert_failures == 0,
                    f"{cert_failures} failures, min condition-2 slack {min_slack:.3g}")

    def _suite(self, algorithm: str, deltas, trials: int, seed_base: int) -> List:
        checks = []
        for i, delta in enumerate(deltas):
            config = ExperimentConfig(
                name=f"{algorithm}-{delta}", generator="random", n=60, delta=delta,
                adversary_mode="targeted", arrival_mode="random", algorithms=[algorithm],
                trials=trials, master_seed=seed_base + i,
            )
            checks.extend((delta, c) for c in assert_bounds(run_experiment(config)))
        return checks

    def test_structured_sampling(self):
        """Expected ratio and marked overlap of structured sampling on targeted instances"""
        trials = self.scaled(20000, 500)
        for delta, check in self._suite("structured", (0.2, 0.5, 0.8), trials, 3000):
            self.record(f"{check.name}[delta={delta}]", check.passed,
                        f"observed {check.observed:.5f} vs threshold {check.threshold:.5f}")

    def test_iterative_sampling(self):
        trials = self.scaled(500, 40)
        for delta, check in self._suite("iterative", (0.2, 0.5), trials, 5000):
            self.record(f"{check.name}[delta={delta}]", check.passed,
                        f"observed {check.observed:.5f} vs threshold {check.threshold:.5f}")

    def test_rounding_marginals(self):
        """Matched frequency of every offline node stays within 3 sigma of its fractional degree"""
        rng = self.rng(6)
        trials = self.scaled(100000, 5000)
        components = []
        while len(components) < 3:
            h = random_graph(12, 8, 0.3, rng)
            dec = decompose(h)
            for comp in dec.components:
                if comp.ratio < 1 and 4 <= len(comp.online) + len(comp.offline) <= 20:
                    components.append((comp, canonical_fractional(dec, h).restricted(comp.online, comp.offline)))
                    break

        worst = 0.0
        for comp, frac in components:
            counts: Dict[int, int] = {u: 0 for u in comp.offline}
            for _ in range(trials):
                for u in sample_component_matching(comp, frac, rng).offline_nodes():
                    counts[u] += 1
            for u, c in counts.items():
                p = frac.offline_level(u)
                sigma = math.sqrt(max(p * (1 - p), 1e-12) / trials)
                worst = max(worst, abs(c / trials - p) / sigma)
        self.record("rounding_marginals", worst <= 3.0,
                    f"{len(components)} components, {trials} trials, worst deviation {worst:.2f} sigma")

    def test_skeleton(self):
        rng = self.rng(7)
        graphs = self.scaled(1000, 100)
        invariant_failures = 0
        oracle_checked = 0
        oracle_failures = 0
        for _ in range(graphs):
            offline = int(rng.integers(1, 41))
            online = int(rng.integers(1, 41))
            h = random_graph(offline, online, float(rng.uniform(0.02, 0.3)), rng)
            dec = decompose(h)
            if dec.validate(h):
                invariant_failures += 1
            if online <= 10:
                oracle_checked += 1
                if brute_force_decompose(h).to_dict() != dec.to_dict():
                    oracle_failures += 1
        self.record("skeleton_invariants", invariant_failures == 0, f"{invariant_failures} of {graphs} graphs invalid")
        self.record("skeleton_oracle", oracle_failures == 0,
                    f"{oracle_failures} of {oracle_checked} small graphs differ from the subset oracle")

    def test_set_systems(self):
        example = SetSystem(5, ((0, 1), (1, 2), (2, 3), (3, 4)))
        value = solve_distribution(example).value
        self.record("set_system_example", value >= Fraction(4, 5) - Fraction(1, 10**6), f"value {value}")

        rng = self.rng(8)
        systems = self.scaled(200, 30)
        failures = 0
        for _ in range(systems):
            n = int(rng.integers(3, 10))
            d = int(rng.integers(1, n))
            m = int(rng.integers(1, 9))
            sets = {tuple(sorted(int(x) for x in rng.choice(n, size=d, replace=False))) for _ in range(m)}
            system = SetSystem(n, tuple(sorted(sets)))
            dist = solve_distribution(system)
            _, optimum, _ = solve_dual(system)
            if dist.value < float(system.bound) - 1e-6 or optimum > 1 + Fraction(1, 10**6):
                failures += 1
        self.record("set_system_random", failures == 0, f"{failures} of {systems} systems below d^2/n or dual above 1")

        checked = 0
        uncertified = 0
        for n in range(2, 6):
            pairs = list(combinations(range(n), 2))
            for m in range(1, len(pairs) + 1):
                for family in combinations(pairs, m):
                    system = SetSystem(n, family)
                    q, _, p = solve_dual(system)
                    lower, upper = exact_game_value(system)
                    checked += 1
                    if not verify_primal_dual(system, p, q).passed or lower != upper or lower < system.bound:
                        uncertified += 1
        self.record("set_system_pairs_exhaustive", uncertified == 0,
                    f"{uncertified} of {checked} pair families on n <= 5 lack an exact certificate at d^2/n")

    def test_agnostic_integral(self):
        rng = self.rng(9)
        n = 40
        exact_failures = 0
        for d in (1, 5, 9):
            for _ in range(self.scaled(50, 5)):
                inst = gen_hard_agnostic(n, d, rng)
                if agnostic_integral_run(inst.predicted, list(inst.arrivals)).size != n - d:
                    exact_failures += 1
        self.record("agnostic_integral_exact", exact_failures == 0, f"{exact_failures} runs differ from n - d")

        trials = self.scaled(10000, 1000)
        for d, eps in product((1, 5, 9), (0.05, 0.1)):
            sizes = np.empty(trials)
            for t in range(trials):
                inst = perturb_d_eps(gen_hard_agnostic(n, d, rng), eps, rng)
                sizes[t] = gadget_strategy_run(list(inst.arrivals), 1.0, rng).size
            reference = agnostic_integral_reference(n, d, eps)
            stderr = sizes.std(ddof=1) / math.sqrt(trials)
            allowance = 3 * stderr + agnostic_integral_allowance(n, eps)
            gap = abs(sizes.mean() - reference)
            self.record(f"gadget_strategy[d={d},eps={eps}]", gap <= allowance,
                        f"mean {sizes.mean():.4f} vs reference {reference:.4f} (allowance {allowance:.4f})")

    def test_agnostic_fractional(self):
        trials = self.scaled(5000, 100)
        seed = 9000
        for delta in (0.1, 0.25):
            for eps in (0.0, 0.05, 0.1):
                seed += 1
                config = ExperimentConfig(
                    name=f"agnostic-{delta}-{eps}", generator="agnostic", n=40, delta=delta, eps=eps,
                    algorithms=["agnostic-fractional"], trials=trials, master_seed=seed,
                )
                for check in assert_bounds(run_experiment(config)):
                    self.record(f"{check.name}[delta={delta},eps={eps}]", check.passed,
                                f"observed {check.observed:.4f} vs threshold {check.threshold:.4f}")

    def test_qp_reconstruction(self):
        rng = self.rng(11)
        graphs = self.scaled(100, 15)
        weight_failures = 0
        worst_diff = 0.0
        for _ in range(graphs):
            n = int(rng.integers(1, 13))
            h = perfect_matching_graph(n, 0.3, rng)
            frac, alpha = qp_balanced(h)
            rebuilt = FractionalMatching()
            for v, nbrs in enumerate(h.adjacency):
                x, _ = reconstruct_g([alpha.alpha[u] for u in nbrs])
                for u, w in zip(nbrs, x):
                    rebuilt.add(u, v, float(w))
            if abs(rebuilt.total_weight - n) > 1e-6:
                weight_failures += 1
            reference = slsqp_balanced_qp(h)
            for edge, w in reference.items():
                worst_diff = max(worst_diff, abs(frac.weights.get(edge, 0.0) - w))
        self.record("qp_weight", weight_failures == 0, f"{weight_failures} of {graphs} reconstructions miss weight n")
        self.record("qp_oracle", worst_diff <= 1e-5, f"max |x - x_oracle| = {worst_diff:.2e}")

    def test_monotonicity(self):
        rng = self.rng(12)
        pairs = self.scaled(200, 30)
        failures = 0
        for i in range(pairs):
            n = int(rng.integers(6, 30))
            d = int(rng.integers(0, n // 2 + 1))
            inst = gen_random_instance(n, d, "random", ARRIVAL_MODES[i % len(ARRIVAL_MODES)], rng, avg_degree=1.5)
            full = frac_online_run(inst.predicted, list(inst.arrivals)).total_weight
            h_reduced, arrivals_reduced = reduce_to_optimum_support(inst.predicted, list(inst.arrivals))
            reduced = frac_online_run(h_reduced, arrivals_reduced).total_weight
            if full < reduced - 1e-9:
                failures += 1
        self.record("monotonicity", failures == 0, f"{failures} of {pairs} pairs with ALG(G) < ALG(G')")

    def test_ski_rental(self):
        worst = 0.0
        for x in np.arange(0.0, 0.95, 0.1):
            for u in np.linspace(max(x, 1e-3), 1.0, 25):
                worst = max(worst, abs(expected_cost(x, u) / u - competitive_ratio(x)))
        self.record("ski_flatness", worst <= 1e-9, f"max deviation {worst:.2e}")
        self.record("ski_x0", abs(competitive_ratio(0.0) - math.e / (math.e - 1)) <= 1e-12,
                    f"ratio at x=0 is {competitive_ratio(0.0):.12f}")

        rng = self.rng(13)
        trials = self.scaled(100000, 20000)
        worst_sigma = 0.0
        for x, u in ((0.0, 0.5), (0.3, 0.6), (0.6, 1.0)):
            mean, stderr = monte_carlo_cost(x, u, trials, rng)
            worst_sigma = max(worst_sigma, abs(mean - expected_cost(x, u)) / stderr)
        self.record("ski_monte_carlo", worst_sigma <= 3.0, f"worst deviation {worst_sigma:.2f} sigma at {trials} trials")

    def test_extremes(self):
        rng = self.rng(14)
        inst = gen_random_instance(30, 0, "random", "random", rng)
        structured = run_trial(inst, "structured", 1)
        fractional = run_trial(inst, "fractional", 1)
        self.record("delta0_integral", structured.ratio == 1.0, f"ratio {structured.ratio}")
        self.record("delta0_fractional", abs(fractional.ratio - 1.0) <= 1e-9, f"ratio {fractional.ratio}")
        self.record("delta1_bound", abs(fractional_bound(1.0) - (1 - 1 / math.e)) <= 1e-15,
                    f"bound at delta=1 is {fractional_bound(1.0):.12f}")
        self.record("delta0_bound", structured_bound(0.0) == 1.0 and fractional_bound(0.0) == 1.0, "all curves at 1")

    def generate_report(self, duration: float, passed: int, failed: int):
        """Generate test report"""
        self.log("\n" + "=" * 60)
        self.log("TEST RESULTS SUMMARY")
        self.log("=" * 60)
        self.log(f"Duration: {duration:.1f}s")
        self.log(f"Total Checks: {len(self.results)}")
        self.log(f"Passed: {passed}")
        self.log(f"Failed: {failed}")
        self.log("=" * 60)

        for r in self.results:
            if not r.passed:
                self.log(f"  [{r.severity.upper()}] {r.category}/{r.name}: {r.message}", "ERROR")

        report = {
            "test_run": {
                "timestamp": datetime.now().isoformat(),
                "scale": "quick" if self.quick else "full",
                "duration_seconds": duration,
                "total_tests": len(self.results),
                "passed": passed,
                "failed": failed,
            },
            "results": {
                f"{r.category}/{r.name}": {"status": "PASS" if r.passed else "FAIL", "message": r.message}
                for r in self.results
            },
        }
        if safe_file_write(str(TEST_RESULTS_FILE), json.dumps(report, indent=2), create_dirs=True, logger=self.logger):
            self.log(f"\nReport saved to: {TEST_RESULTS_FILE}")
        else:
            self.log(f"ERROR: Failed to save report to {TEST_RESULTS_FILE}", "ERROR")


def main():
    parser = argparse.ArgumentParser(description="Run the acceptance self-test")
    parser.add_argument("--verbose", "-v", action="store_true", help="Verbose output")
    parser.add_argument("--category", help="Run one category only")
    parser.add_argument("--quick", action="store_true", help="Scaled-down trial counts")
    parser.add_argument("--seed", type=int, default=20240917)
    parser.add_argument("--report-only", action="store_true", help="Print the report from the last run")

    args = parser.parse_args()

    if args.report_only:
        logger = ResilientLogger("self_test")
        content = safe_file_read(str(TEST_RESULTS_FILE), default=None, logger=logger)
        if content is None:
            logger.error("No test results found. Run tests first.")
            return 1
        try:
            print(json.dumps(json.loads(content), indent=2))
            return 0
        except json.JSONDecodeError as e:
            logger.error(f"Failed to parse test results: {e}", exc_info=True)
            return 1

    tester = SelfTest(quick=args.quick, verbose=args.verbose, seed=args.seed)
    success = tester.run_all_tests(args.category)

    return 0 if success else 1


if __name__ == "__main__":
    sys.exit(main())
