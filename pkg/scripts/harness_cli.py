#!/usr/bin/env python3
"""
Semi-Online Matching Harness

Runs the matching algorithms on generated or stored instances, orchestrates
seeded Monte Carlo experiments across worker processes, compares the
outcomes with the closed-form guarantees and writes versioned CSV / JSON
reports.

Usage:
    python scripts/harness_cli.py gen --hard-agnostic --n 8 --d 1 --seed 7
    python scripts/harness_cli.py run-integral --instance inst.json --algorithm structured --seed 3
    python scripts/harness_cli.py run-fractional --instance inst.json
    python scripts/harness_cli.py decompose --input graph.json
    python scripts/harness_cli.py set-system --input sets.json
    python scripts/harness_cli.py ski-rental --x 0.5 --u 0.8 --trials 100000
    python scripts/harness_cli.py experiment --config configs/fractional_suite.json --assert-bounds
"""

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
from utils.resilience import ResilientLogger, safe_file_read, safe_file_write, safe_json_load
from bounds import (
    agnostic_fractional_bound,
    agnostic_integral_allowance,
    agnostic_integral_reference,
    bound_lines,
    fractional_bound,
    iterative_bound,
    marked_overlap_bound,
    ranking_bound,
    structured_bound,
)
from graph_core import BipartiteGraph, Matching, verify_fractional
from skeleton import cached_decompose
from integral_algs import (
    agnostic_integral_run,
    component_overlaps,
    gadget_strategy_run,
    iterative_preprocess,
    marked_overlap,
    online_run,
    ranking_run,
    structured_preprocess,
)
from fractional_algs import FillEvent, agnostic_frac_run, dual_certificate, frac_online_run, qp_balanced
from set_systems import SetSystem, solve_distribution, verify_primal_dual
from ski_rental import SkiStrategy, monte_carlo_cost
from generators import (
    ADVERSARY_MODES,
    ARRIVAL_MODES,
    SemiOnlineInstance,
    gen_agnostic_instance,
    gen_hard_agnostic,
    gen_random_instance,
    load_instance,
    perturb_d_eps,
)

try:
    from config_loader import get, get_tolerance, get_workers
    CERTIFICATE_TOL = get_tolerance("certificate", 1e-6)
    DEFAULT_TRIALS = int(get("experiment.trials", 1000))
    DEFAULT_MASTER_SEED = int(get("experiment.master_seed", 20240917))
    DEFAULT_OUTPUT_DIR = str(get("experiment.output_dir", "results"))
    REGENERATE_INSTANCES = bool(get("experiment.regenerate_instances", True))
except ImportError:
    import os
    CERTIFICATE_TOL = 1e-6
    DEFAULT_TRIALS = 1000
    DEFAULT_MASTER_SEED = 20240917
    DEFAULT_OUTPUT_DIR = "results"
    REGENERATE_INSTANCES = True

    def get_workers() -> int:
        return os.cpu_count() or 1

logger = ResilientLogger(__name__)

REPO_ROOT = Path(__file__).parent.parent
SCHEMA_DIR = REPO_ROOT / "library" / "schemas"

CSV_VERSION_LINE = "# semionline-trials v1"
CSV_COLUMNS = ["trial", "seed", "algorithm", "n", "d", "delta", "nu_G", "nu_H", "size_or_weight", "ratio", "marked_overlap"]

INTEGRAL_ALGORITHMS = ("iterative", "structured", "agnostic-integral", "ranking", "gadget-strategy")
FRACTIONAL_ALGORITHMS = ("fractional", "agnostic-fractional")
ALGORITHMS = INTEGRAL_ALGORITHMS + FRACTIONAL_ALGORITHMS
GENERATORS = ("random", "hard-agnostic", "agnostic")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_BOUNDS = 2

# instance generation and algorithm randomness use separate streams of a trial seed
INSTANCE_STREAM = 0


@dataclass
class TrialRecord:
    """Outcome of one algorithm on one instance"""
    trial: int
    seed: int
    algorithm: str
    n: int
    d: int
    delta: float
    nu_G: int
    nu_H: int
    size_or_weight: float
    ratio: float
    marked_overlap: Optional[int] = None
    component_overlaps: List[int] = field(default_factory=list)
    eps: float = 0.0
    generator: str = ""
    valid: bool = True
    diagnostics: List[str] = field(default_factory=list)
    certificate: Optional[Dict[str, Any]] = None

    @property
    def bounds(self) -> Dict[str, float]:
        return bound_lines(self.delta)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.update(self.bounds)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrialRecord':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class ExperimentConfig:
    name: str
    generator: str = "random"
    n: int = 20
    d: Optional[int] = None
    delta: Optional[float] = None
    adversary_mode: str = "random"
    arrival_mode: str = "random"
    eps: float = 0.0
    avg_degree: Optional[float] = None
    algorithms: List[str] = field(default_factory=lambda: ["structured"])
    trials: int = DEFAULT_TRIALS
    master_seed: int = DEFAULT_MASTER_SEED
    workers: Optional[int] = None
    regenerate_instances: bool = REGENERATE_INSTANCES
    preprocess: str = "structured"

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; expected one of {GENERATORS}")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithm(s) {unknown}; expected ids from {ALGORITHMS}")
        if not self.algorithms:
            raise ValueError(f"experiment {self.name!r} lists no algorithms")
        if self.trials <= 0:
            raise ValueError(f"experiment {self.name!r} needs a positive trial count, got {self.trials}")
        if self.d is None:
            if self.delta is None:
                raise ValueError(f"experiment {self.name!r} needs either d or delta")
            self.d = int(round(self.delta * self.n))
        if self.adversary_mode not in ADVERSARY_MODES:
            raise ValueError(f"unknown adversary mode {self.adversary_mode!r}")
        if self.arrival_mode not in ARRIVAL_MODES:
            raise ValueError(f"unknown arrival mode {self.arrival_mode!r}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class BoundCheck:
    name: str
    algorithm: str
    passed: bool
    observed: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: List[TrialRecord]
    aggregates: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def records_for(self, algorithm: str) -> List[TrialRecord]:
        return [r for r in self.records if r.algorithm == algorithm]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "aggregates": self.aggregates,
            "records": [r.to_dict() for r in self.records],
        }


# ---------------------------------------------------------------------------
# Single trials
# ---------------------------------------------------------------------------

def _load_schema(name: str) -> Dict:
    content = safe_file_read(str(SCHEMA_DIR / name), default="{}", logger=logger)
    return safe_json_load(content, default={}, logger=logger)


def _trace_problems(trace: Sequence[Tuple[int, Optional[int]]], matching: Matching, arrival_count: int) -> List[str]:
    """An irrevocable run decides every arrival once, in order, and keeps exactly those decisions"""
    problems = []
    if [index for index, _ in trace] != list(range(arrival_count)):
        problems.append("trace does not decide every arrival exactly once in arrival order")
    decided = {(u, index) for index, u in trace if u is not None}
    if decided != set(matching.pairs):
        problems.append("final matching differs from the decisions taken at arrival time")
    return problems


def _predictions_exact(inst: SemiOnlineInstance) -> bool:
    return all(
        e.predicted_identity is None or e.realized_neighbors == inst.predicted.adjacency[e.predicted_identity]
        for e in inst.arrivals
    )


@lru_cache(maxsize=64)
def _cached_qp(h: BipartiteGraph):
    return qp_balanced(h)


def run_trial(inst: SemiOnlineInstance, algorithm_id: str, seed: int, trial: int = 0,
              eps: float = 0.0, generator: str = "") -> TrialRecord:
    """Run one algorithm on one instance; deterministic given (inst, seed)"""
    if algorithm_id not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm_id!r}; expected one of {ALGORITHMS}")

    rng = np.random.default_rng(seed)
    h = inst.predicted
    g = inst.realized_graph()
    arrivals = list(inst.arrivals)
    nu_g = inst.nu_G

    record = TrialRecord(
        trial=trial, seed=int(seed), algorithm=algorithm_id, n=inst.n, d=inst.d,
        delta=inst.delta, nu_G=nu_g, nu_H=inst.nu_H, size_or_weight=0.0, ratio=1.0,
        eps=eps, generator=generator,
    )

    if algorithm_id in ("iterative", "structured"):
        if algorithm_id == "iterative":
            pre = iterative_preprocess(h, h.offline_count - h.online_count, rng)
        else:
            pre = structured_preprocess(h, rng, cached_decompose(h))
        trace: List[Tuple[int, Optional[int]]] = []
        matching = online_run(pre, h, arrivals, trace)
        record.diagnostics.extend(_trace_problems(trace, matching, len(arrivals)))
        if inst.ground_truth is not None:
            marked = inst.marked_nodes()
            record.marked_overlap = marked_overlap(pre.reserved, marked)
            record.component_overlaps = list(component_overlaps(cached_decompose(h), marked))
        size = float(matching.size)
    elif algorithm_id in ("agnostic-integral", "ranking", "gadget-strategy"):
        if algorithm_id == "agnostic-integral":
            matching = agnostic_integral_run(h, arrivals)
        elif algorithm_id == "ranking":
            matching = ranking_run(h.offline_count, arrivals, rng)
        else:
            matching = gadget_strategy_run(arrivals, 1.0, rng)
        size = float(matching.size)
    elif algorithm_id == "fractional":
        fill_trace: List[FillEvent] = []
        frac = frac_online_run(h, arrivals, fill_trace, cached_decompose(h))
        ok, problems = verify_fractional(g, frac)
        record.diagnostics.extend(problems)
        if _predictions_exact(inst):
            report = dual_certificate(h, arrivals, fill_trace, CERTIFICATE_TOL)
            record.certificate = {
                "cond1": report.cond1,
                "cond2_min_slack": report.cond2_min_slack,
                "nonnegative": report.nonnegative,
                "reduced": report.reduced,
                "passed": report.passed,
            }
            if not report.passed:
                record.diagnostics.extend(report.diagnostics)
        size = frac.total_weight
    else:
        _, alpha = _cached_qp(h)
        frac = agnostic_frac_run(alpha, arrivals)
        ok, problems = verify_fractional(g, frac)
        record.diagnostics.extend(problems)
        size = frac.total_weight

    if algorithm_id in INTEGRAL_ALGORITHMS:
        record.diagnostics.extend(matching.validate(g))

    record.size_or_weight = size
    record.ratio = size / nu_g if nu_g else 1.0
    record.valid = not record.diagnostics
    if not record.valid:
        logger.warn(f"trial {trial} {algorithm_id}: {record.diagnostics[0]}")
    return record


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def generate_instance(config: ExperimentConfig, seed: int) -> SemiOnlineInstance:
    rng = np.random.default_rng([seed, INSTANCE_STREAM])
    if config.generator == "random":
        inst = gen_random_instance(
            config.n, config.d, config.adversary_mode, config.arrival_mode, rng,
            avg_degree=config.avg_degree, preprocess=config.preprocess, seed=seed,
        )
        return perturb_d_eps(inst, config.eps, rng)
    if config.generator == "hard-agnostic":
        return perturb_d_eps(gen_hard_agnostic(config.n, config.d, rng, seed=seed), config.eps, rng)
    return gen_agnostic_instance(config.n, config.d, config.eps, rng, config.avg_degree, seed=seed)


def trial_seeds(master_seed: int, trials: int) -> List[int]:
    """Per-trial seeds spawned from the master seed; trial i's seed depends only on (master_seed, i)"""
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [int(child.generate_state(1)[0]) for child in children]


def _shared_instance_seed(master_seed: int) -> int:
    return int(np.random.SeedSequence([master_seed, 1]).generate_state(1)[0])


def _run_trial_task(task: Tuple[Dict[str, Any], int, int, Optional[Dict[str, Any]]]) -> List[Dict[str, Any]]:
    config_data, trial, seed, shared = task
    config = ExperimentConfig.from_dict(config_data)
    if shared is not None:
        inst = SemiOnlineInstance.from_dict(shared)
    else:
        inst = generate_instance(config, seed)
    return [
        run_trial(inst, algorithm, seed, trial, config.eps, config.generator).to_dict()
        for algorithm in config.algorithms
    ]


def _mean_stderr(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), stderr


def aggregate(records: Sequence[TrialRecord], algorithms: Sequence[str]) -> Dict[str, Dict[str, float]]:
    """Mean, standard error and extremes per algorithm, folded in trial order"""
    result: Dict[str, Dict[str, float]] = {}
    for algorithm in algorithms:
        chosen = [r for r in records if r.algorithm == algorithm]
        if not chosen:
            continue
        mean_ratio, stderr_ratio = _mean_stderr([r.ratio for r in chosen])
        mean_size, stderr_size = _mean_stderr([r.size_or_weight for r in chosen])
        summary = {
            "trials": len(chosen),
            "mean": mean_ratio,
            "stderr": stderr_ratio,
            "min_ratio": float(min(r.ratio for r in chosen)),
            "mean_size_or_weight": mean_size,
            "stderr_size_or_weight": stderr_size,
            "mean_delta": float(np.mean([r.delta for r in chosen])),
            "invalid_records": sum(not r.valid for r in chosen),
        }
        overlaps = [r.marked_overlap for r in chosen if r.marked_overlap is not None]
        if overlaps:
            summary["mean_marked_overlap"], summary["stderr_marked_overlap"] = _mean_stderr(overlaps)
        for name in bound_lines(0.0):
            summary[f"mean_{name}"] = float(np.mean([r.bounds[name] for r in chosen]))
        result[algorithm] = summary
    return result


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> ExperimentReport:
    """Run every configured algorithm on `trials` instances; records come back in trial order"""
    seeds = trial_seeds(config.master_seed, config.trials)
    shared = None
    if not config.regenerate_instances:
        shared = generate_instance(config, _shared_instance_seed(config.master_seed)).to_dict()

    config_data = config.to_dict()
    tasks = [(config_data, trial, seed, shared) for trial, seed in enumerate(seeds)]
    workers = workers or config.workers or get_workers()
    workers = max(1, min(workers, len(tasks)))

    logger.info(f"experiment {config.name}: {config.trials} trials x {len(config.algorithms)} algorithm(s) on {workers} worker(s)")
    if workers == 1:
        batches = [_run_trial_task(task) for task in tasks]
    else:
        chunksize = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as executor:
            batches = list(executor.map(_run_trial_task, tasks, chunksize=chunksize))

    records = [TrialRecord.from_dict(data) for batch in batches for data in batch]
    report = ExperimentReport(config, records, aggregate(records, config.algorithms))
    for algorithm, summary in report.aggregates.items():
        logger.info(
            f"  {algorithm}: mean ratio {summary['mean']:.6f} +/- {summary['stderr']:.6f}, "
            f"min {summary['min_ratio']:.6f}"
        )
    return report


# ---------------------------------------------------------------------------
# Bound checks and reports
# ---------------------------------------------------------------------------

def _monte_carlo_check(name: str, algorithm: str, observed: Sequence[float], bounds: Sequence[float]) -> BoundCheck:
    """Mean of observed - bound must stay above -3 standard errors"""
    gap_mean, gap_stderr = _mean_stderr(np.asarray(observed, dtype=float) - np.asarray(bounds, dtype=float))
    mean_obs = float(np.mean(observed))
    threshold = float(np.mean(bounds)) - 3.0 * gap_stderr
    return BoundCheck(name, algorithm, gap_mean >= -3.0 * gap_stderr, mean_obs, threshold,
                      f"{len(observed)} trials, mean gap {gap_mean:.6g}, stderr {gap_stderr:.3g}")


def assert_bounds(report: ExperimentReport) -> List[BoundCheck]:
    checks: List[BoundCheck] = []

    for algorithm in report.config.algorithms:
        records = report.records_for(algorithm)
        if not records:
            continue

        invalid = [r for r in records if not r.valid]
        checks.append(BoundCheck(
            "valid-records", algorithm, not invalid, float(len(records) - len(invalid)), float(len(records)),
            invalid[0].diagnostics[0] if invalid else "",
        ))

        if algorithm == "fractional":
            worst = min(records, key=lambda r: r.ratio - fractional_bound(r.delta))
            checks.append(BoundCheck(
                "fractional-ratio", algorithm,
                all(r.size_or_weight >= fractional_bound(r.delta) * r.nu_G - CERTIFICATE_TOL for r in records),
                worst.ratio, fractional_bound(worst.delta), f"worst trial {worst.trial}",
            ))
            certified = [r for r in records if r.certificate is not None]
            if certified:
                failing = [r for r in certified if not r.certificate["passed"]]
                checks.append(BoundCheck(
                    "dual-certificate", algorithm, not failing,
                    float(min(r.certificate["cond2_min_slack"] for r in certified)), -CERTIFICATE_TOL,
                    f"{len(failing)} of {len(certified)} certificates failed",
                ))
        elif algorithm in ("structured", "iterative", "ranking"):
            curve = {"structured": structured_bound, "iterative": iterative_bound, "ranking": ranking_bound}[algorithm]
            checks.append(_monte_carlo_check(
                f"{algorithm}-expected-ratio", algorithm,
                [r.ratio for r in records], [curve(r.delta) for r in records],
            ))
            overlaps = [r for r in records if r.marked_overlap is not None]
            if algorithm == "structured" and overlaps:
                checks.append(_monte_carlo_check(
                    "marked-overlap", algorithm,
                    [r.marked_overlap for r in overlaps], [marked_overlap_bound(r.delta, r.nu_G) for r in overlaps],
                ))
        elif algorithm == "agnostic-fractional":
            checks.append(_monte_carlo_check(
                "agnostic-fractional-weight", algorithm,
                [r.size_or_weight for r in records],
                [agnostic_fractional_bound(r.n, r.d / r.n if r.n else 0.0, r.eps) for r in records],
            ))
        elif algorithm == "agnostic-integral":
            exact = [r for r in records if r.eps == 0.0 and r.generator == "hard-agnostic"]
            if exact:
                wrong = [r for r in exact if r.size_or_weight != r.n - r.d]
                checks.append(BoundCheck(
                    "agnostic-integral-exact", algorithm, not wrong,
                    float(min(r.size_or_weight - (r.n - r.d) for r in exact)), 0.0,
                    f"{len(wrong)} trials differ from n - d",
                ))
        elif algorithm == "gadget-strategy":
            sizes = [r.size_or_weight for r in records]
            refs = [agnostic_integral_reference(r.n, r.d, r.eps) for r in records]
            gap_mean, gap_stderr = _mean_stderr(np.asarray(sizes) - np.asarray(refs))
            allowance = 3.0 * gap_stderr + float(np.mean([agnostic_integral_allowance(r.n, r.eps) for r in records]))
            checks.append(BoundCheck(
                "gadget-strategy-reference", algorithm, abs(gap_mean) <= allowance,
                float(np.mean(sizes)), float(np.mean(refs)), f"|gap| {abs(gap_mean):.6g} vs allowance {allowance:.6g}",
            ))

    for check in checks:
        status = "pass" if check.passed else "FAIL"
        logger.info(f"  [{status}] {check.algorithm} {check.name}: observed {check.observed:.6g}, threshold {check.threshold:.6g}")
    return checks


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buffer = io.StringIO()
    buffer.write(CSV_VERSION_LINE + "\n")
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow(asdict(record))
    return buffer.getvalue()


def write_report(report: ExperimentReport, output_dir: str,
                 checks: Optional[List[BoundCheck]] = None) -> Tuple[Path, Path]:
    out = Path(output_dir)
    csv_path = out / f"{report.config.name}.csv"
    json_path = out / f"{report.config.name}.json"

    payload = report.to_dict()
    if checks is not None:
        payload["bound_checks"] = [c.to_dict() for c in checks]

    if not safe_file_write(str(csv_path), records_to_csv(report.records), logger=logger):
        raise ValueError(f"could not write {csv_path}")
    if not safe_file_write(str(json_path), json.dumps(payload, indent=2) + "\n", logger=logger):
        raise ValueError(f"could not write {json_path}")
    logger.info(f"wrote {csv_path} and {json_path}")
    return csv_path, json_path


def load_experiment_configs(path: str) -> List[ExperimentConfig]:
    """One config object or {"experiments": [...]}, validated against the experiment-config schema"""
    content = safe_file_read(path, default=None, logger=logger)
    if content is None:
        raise ValueError(f"cannot read experiment config {path}")
    data = safe_json_load(content, default=None, logger=logger)
    if data is None:
        raise ValueError(f"experiment config {path} is not valid JSON")
    try:
        jsonschema.validate(data, _load_schema("experiment_config.json"))
    except jsonschema.ValidationError as e:
        raise ValueError(f"experiment config {path} violates schema: {e.message}") from e
    entries = data["experiments"] if "experiments" in data else [data]
    return [ExperimentConfig.from_dict(entry) for entry in entries]


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def _emit(payload: Dict[str, Any], output: Optional[str] = None):
    text = json.dumps(payload, indent=2) + "\n"
    if output:
        if not safe_file_write(output, text, logger=logger):
            raise ValueError(f"could not write {output}")
        logger.info(f"wrote {output}")
    else:
        sys.stdout.write(text)


def _read_json(path: str) -> Any:
    content = safe_file_read(path, default=None, logger=logger)
    if content is None:
        raise ValueError(f"cannot read {path}")
    data = safe_json_load(content, default=None, logger=logger)
    if data is None:
        raise ValueError(f"{path} is not valid JSON")
    return data


def _cmd_decompose(args) -> int:
    data = _read_json(args.input)
    graph = BipartiteGraph.from_dict(data["predicted"] if "predicted" in data else data)
    _emit(cached_decompose(graph).to_dict(), args.output)
    return EXIT_OK


def _cmd_run_integral(args) -> int:
    inst = load_instance(args.instance)
    record = run_trial(inst, args.algorithm, args.seed)
    _emit(record.to_dict(), args.output)
    return EXIT_OK if record.valid else EXIT_INVALID


def _cmd_run_fractional(args) -> int:
    inst = load_instance(args.instance)
    record = run_trial(inst, args.algorithm, args.seed)
    payload = {
        "weight": record.size_or_weight,
        "nu_G": record.nu_G,
        "nu_H": record.nu_H,
        "delta": record.delta,
        "bound": fractional_bound(record.delta),
        "certificate": record.certificate,
        "valid": record.valid,
        "diagnostics": record.diagnostics,
    }
    _emit(payload, args.output)
    return EXIT_OK if record.valid else EXIT_INVALID


def _cmd_set_system(args) -> int:
    data = _read_json(args.input)
    try:
        jsonschema.validate(data, _load_schema("set_system.json"))
    except jsonschema.ValidationError as e:
        raise ValueError(f"set system {args.input} violates schema: {e.message}") from e
    system = SetSystem.from_dict(data)
    dist = solve_distribution(system, args.tol)
    payload = dist.to_dict()
    if dist.lp_primal is not None and dist.lp_dual is not None:
        check = verify_primal_dual(system, dist.lp_primal, dist.lp_dual, args.tol)
        payload["primal_dual"] = {
            "passed": check.passed,
            "primal_objective": check.primal_objective,
            "dual_objective": check.dual_objective,
            "diagnostics": check.diagnostics,
        }
    _emit(payload, args.output)
    return EXIT_OK


def _cmd_ski_rental(args) -> int:
    strategy = SkiStrategy.for_prediction(args.x)
    payload = {"q": strategy.q, "ratio": strategy.ratio, "expected_cost": strategy.cost(args.u)}
    if args.trials:
        mean, stderr = monte_carlo_cost(args.x, args.u, args.trials, np.random.default_rng(args.seed))
        payload["mc_mean"] = mean
        payload["mc_stderr"] = stderr
    _emit(payload, args.output)
    return EXIT_OK


def _cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.hard_agnostic:
        inst = perturb_d_eps(gen_hard_agnostic(args.n, args.d, rng, seed=args.seed), args.eps, rng)
    elif args.agnostic:
        inst = gen_agnostic_instance(args.n, args.d, args.eps, rng, args.avg_degree, seed=args.seed)
    else:
        inst = gen_random_instance(args.n, args.d, args.adversary, args.arrival, rng,
                                   avg_degree=args.avg_degree, seed=args.seed)
        inst = perturb_d_eps(inst, args.eps, rng)
    _emit(inst.to_dict(), args.output)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    configs = load_experiment_configs(args.config)
    failed: List[BoundCheck] = []
    for config in configs:
        if args.trials:
            config.trials = args.trials
        report = run_experiment(config, args.workers)
        checks = assert_bounds(report) if args.assert_bounds else None
        write_report(report, args.output_dir, checks)
        if checks:
            failed.extend(c for c in checks if not c.passed)

    if failed:
        for check in failed:
            logger.error(f"bound check failed: {check.algorithm} {check.name} ({check.detail})")
        return EXIT_BOUNDS
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harness_cli",
        description="Semi-online bipartite matching: instances, algorithms and experiments",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, help="Command to run")

    dec = subparsers.add_parser("decompose", help="Matching-skeleton decomposition of a graph or instance")
    dec.add_argument("--input", required=True, help="Graph JSON or instance JSON (its predicted graph is used)")
    dec.add_argument("--output", help="Write JSON here instead of stdout")
    dec.set_defaults(handler=_cmd_decompose)

    integral = subparsers.add_parser("run-integral", help="Run an integral algorithm on an instance")
    integral.add_argument("--instance", required=True, help="Instance JSON file")
    integral.add_argument("--algorithm", default="structured", choices=INTEGRAL_ALGORITHMS)
    integral.add_argument("--seed", type=int, default=0)
    integral.add_argument("--output", help="Write JSON here instead of stdout")
    integral.set_defaults(handler=_cmd_run_integral)

    fractional = subparsers.add_parser("run-fractional", help="Run a fractional algorithm on an instance")
    fractional.add_argument("--instance", required=True, help="Instance JSON file")
    fractional.add_argument("--algorithm", default="fractional", choices=FRACTIONAL_ALGORITHMS)
    fractional.add_argument("--seed", type=int, default=0)
    fractional.add_argument("--output", help="Write JSON here instead of stdout")
    fractional.set_defaults(handler=_cmd_run_fractional)

    sets = subparsers.add_parser("set-system", help="Distribution guaranteeing d^2/n expected intersection")
    sets.add_argument("--input", required=True, help='Set system JSON {"n": int, "sets": [[int, ...]]}')
    sets.add_argument("--tol", type=float, default=1e-9)
    sets.add_argument("--output", help="Write JSON here instead of stdout")
    sets.set_defaults(handler=_cmd_set_system)

    ski = subparsers.add_parser("ski-rental", help="Semi-online ski rental strategy and its cost")
    ski.add_argument("--x", type=float, required=True, help="Predicted skiing days (fraction of the horizon)")
    ski.add_argument("--u", type=float, required=True, help="Actual season length, x <= u <= 1")
    ski.add_argument("--trials", type=int, default=0, help="Monte Carlo trials (0 = closed form only)")
    ski.add_argument("--seed", type=int, default=0)
    ski.add_argument("--output", help="Write JSON here instead of stdout")
    ski.set_defaults(handler=_cmd_ski_rental)

    exp = subparsers.add_parser("experiment", help="Run an experiment suite and write CSV/JSON reports")
    exp.add_argument("--config", required=True, help="Experiment config JSON")
    exp.add_argument("--assert-bounds", action="store_true", help="Exit 2 when any guarantee check fails")
    exp.add_argument("--workers", type=int, help="Worker processes (default: EXPERIMENT.workers)")
    exp.add_argument("--trials", type=int, help="Override the configured trial count")
    exp.add_argument("--output-dir", default=DEFAULT_OUTPUT_DIR)
    exp.set_defaults(handler=_cmd_experiment)

    gen = subparsers.add_parser("gen", help="Generate an instance JSON")
    kind = gen.add_mutually_exclusive_group()
    kind.add_argument("--hard-agnostic", action="store_true", help="Three-edge gadget instance")
    kind.add_argument("--agnostic", action="store_true", help="(d, eps) instance with a perfect predicted matching")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--adversary", default="random", choices=ADVERSARY_MODES)
    gen.add_argument("--arrival", default="random", choices=ARRIVAL_MODES)
    gen.add_argument("--eps", type=float, default=0.0)
    gen.add_argument("--avg-degree", type=float)
    gen.add_argument("--output", help="Write JSON here instead of stdout")
    gen.set_defaults(handler=_cmd_gen)

    return parser


def cli_main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID

    try:
        return args.handler(args)
    except (ValueError, KeyError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_INVALID


def main():
    return cli_main()


if __name__ == "__main__":
    sys.exit(main())
