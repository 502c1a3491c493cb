"""Scaling-behavior evaluation (Scale/SCov), Err/Diff diagnostics for Q-value
models, and the V-vs-Q policy efficiency benchmark.

Wall-clock times are reported for context only; work units (encoder calls and
node-layer updates) are the portable efficiency metric.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field

from . import pddl
from .models import ForwardStats, build_model
from .policy import PolicyConfig, run_policy, select_action_q, select_action_v
from .search import State, applicable_actions, apply_action, initial_state
from .teacher import (
    GeneratorSpec,
    InfeasibleSizeError,
    builtin_domain,
    feasible_sizes,
    generate_instance,
)
from .training import encode_tuple
from .util import derive_seed

WALD = "wald"
WILSON = "wilson"


def wald_half_width(p, n, z=1.645):
    return z * math.sqrt(p * (1.0 - p) / n)


def wilson_half_width(p, n, z=1.645):
    denom = 1.0 + z * z / n
    return (z / denom) * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))


_HALF_WIDTH = {WALD: wald_half_width, WILSON: wilson_half_width}


@dataclass
class CoverageConfig:
    z: float = 1.645  # 90% two-sided normal quantile
    target_half_width: float = 0.10
    min_runs: int = 10
    max_runs: int = 200
    interval: str = WALD
    step_limit_base: int = 100
    forbid_revisit: bool = True
    seed: int = 0


@dataclass
class CoverageEstimate:
    size: int
    runs: int
    successes: int
    c_hat: float
    half_width: float


@dataclass
class ScalingReport:
    estimates: list = field(default_factory=list)
    termination: str = "max-size"  # below-threshold | max-size

    @property
    def scale(self):
        return self.estimates[-1].size if self.estimates else 0

    @property
    def scov(self):
        return sum(e.c_hat for e in self.estimates)


def estimate_coverage(model, domain_tag, n, cfg: CoverageConfig | None = None, run_fn=None):
    """Sequential seeded sampling until the interval half-width reaches the
    target (or the run cap).  `run_fn(instance) -> bool` overrides the policy
    runner, which tests use for stub policies."""
    cfg = cfg or CoverageConfig()
    half_width = _HALF_WIDTH[cfg.interval]
    if run_fn is None:
        domain = builtin_domain(domain_tag)

        def run_fn(inst):
            task = pddl.ground(domain, inst)
            pc = PolicyConfig(model.head, cfg.step_limit_base + n, cfg.forbid_revisit)
            return run_policy(model, task, pc).solved

    successes = 0
    runs = 0
    while runs < cfg.max_runs:
        inst = generate_instance(GeneratorSpec(domain_tag, n, derive_seed(cfg.seed, "cov", n, runs)))
        runs += 1
        if run_fn(inst):
            successes += 1
        p = successes / runs
        hw = half_width(p, runs, cfg.z)
        if runs >= cfg.min_runs and hw <= cfg.target_half_width:
            break
    p = successes / runs
    return CoverageEstimate(n, runs, successes, p, half_width(p, runs, cfg.z))


@dataclass
class ScalingConfig:
    coverage: CoverageConfig = field(default_factory=CoverageConfig)
    stop_coverage: float = 0.3
    max_size: int | None = None  # default 100, 1000 for visitall
    min_size: int | None = None


def scaling_evaluation(model, domain_tag, cfg: ScalingConfig | None = None, run_fn=None, sizes=None):
    """Increasing-size coverage estimation until coverage drops below the
    threshold or the maximum size is reached.  The terminating sub-threshold
    size is included in the report (Scale counts it)."""
    cfg = cfg or ScalingConfig()
    if sizes is None:
        cap = cfg.max_size or (1000 if domain_tag == "visitall" else 100)
        sizes = [n for n in feasible_sizes(domain_tag, lo=2, hi=cap) if n >= (cfg.min_size or 0)]
    report = ScalingReport()
    for n in sizes:
        est = estimate_coverage(model, domain_tag, n, cfg.coverage, run_fn=run_fn)
        report.estimates.append(est)
        if est.c_hat < cfg.stop_coverage:
            report.termination = "below-threshold"
            return report
    report.termination = "max-size"
    return report


# ---------------------------------------------------------------------------
# Err / Diff diagnostics


def err_diff(model, dataset):
    """Mean |h* - Q(s,a*)| and mean |Q(s,a*) - Q(s,a_i)| over the dataset.

    Tuples without non-teacher actions contribute to err only.
    """
    if model.head != "q":
        raise ValueError("err_diff needs a Q-head model")
    from .models import embeddings, readout_q

    err_sum, n_tuples = 0.0, 0
    diff_sum, n_pairs = 0.0, 0
    for tup in dataset.tuples:
        enc = encode_tuple(model, dataset, tup)
        q = readout_q(model, embeddings(model, enc), enc).data.ravel()
        err_sum += abs(tup.hstar - q[0])
        n_tuples += 1
        for qi in q[1:]:
            diff_sum += abs(q[0] - qi)
            n_pairs += 1
    return err_sum / n_tuples, (diff_sum / n_pairs if n_pairs else 0.0)


# ---------------------------------------------------------------------------
# Efficiency benchmark


@dataclass
class BenchConfig:
    instances_per_size: int = 25
    walk_length: int = 25
    hidden_size: int = 16
    layers: int = 8
    seed: int = 0
    aggregator: str = "logsumexp"


@dataclass
class BenchRow:
    arch: str
    size: int
    states: int
    branching_sum: int
    v_stats: ForwardStats = field(default_factory=ForwardStats)
    q_stats: ForwardStats = field(default_factory=ForwardStats)


def random_walk_state(task, length, rng) -> State:
    s = initial_state(task)
    for _ in range(length):
        acts = applicable_actions(task, s)
        if not acts:
            break
        s = apply_action(task, s, rng.choice(acts))
    return s


def efficiency_bench(architectures, domain_tag, sizes, cfg: BenchConfig | None = None):
    """Per random-walk state, one V-style selection (every successor encoded)
    and one Q-style selection (a single encoding), with randomly initialized
    models.  Infeasible sizes are skipped."""
    cfg = cfg or BenchConfig()
    domain = builtin_domain(domain_tag)
    from .teacher import DomainMeta

    meta = DomainMeta.from_domain(domain)
    rows = []
    for arch in architectures:
        v_model = build_model(
            meta, arch, "v", k=cfg.hidden_size, L=cfg.layers,
            seed=derive_seed(cfg.seed, "bench", arch, "v"), aggregator=cfg.aggregator,
        )
        q_model = build_model(
            meta, arch, "q", k=cfg.hidden_size, L=cfg.layers,
            seed=derive_seed(cfg.seed, "bench", arch, "q"), aggregator=cfg.aggregator,
        )
        for n in sizes:
            try:
                insts = [
                    generate_instance(GeneratorSpec(domain_tag, n, derive_seed(cfg.seed, "bench", n, j)))
                    for j in range(cfg.instances_per_size)
                ]
            except InfeasibleSizeError:
                continue
            row = BenchRow(arch=arch, size=n, states=0, branching_sum=0)
            for j, inst in enumerate(insts):
                task = pddl.ground(domain, inst)
                rng = random.Random(derive_seed(cfg.seed, "walk", arch, n, j))
                s = random_walk_state(task, cfg.walk_length, rng)
                if not applicable_actions(task, s):
                    continue
                row.states += 1
                row.branching_sum += len(applicable_actions(task, s))
                select_action_v(v_model, task, s, stats=row.v_stats)
                select_action_q(q_model, task, s, stats=row.q_stats)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Report writers


def write_scaling_csv(report: ScalingReport, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["size", "runs", "successes", "c_hat", "half_width"])
        for e in report.estimates:
            w.writerow([e.size, e.runs, e.successes, f"{e.c_hat:.6f}", f"{e.half_width:.6f}"])


def write_scaling_json(report: ScalingReport, path):
    with open(path, "w") as f:
        json.dump(
            {
                "scale": report.scale,
                "scov": round(report.scov, 6),
                "termination": report.termination,
                "sizes": [
                    {
                        "size": e.size,
                        "runs": e.runs,
                        "successes": e.successes,
                        "c_hat": round(e.c_hat, 6),
                        "half_width": round(e.half_width, 6),
                    }
                    for e in report.estimates
                ],
            },
            f,
            indent=2,
        )
        f.write("\n")


def write_coverage_dat(report: ScalingReport, path):
    """gnuplot-friendly coverage-vs-size data file."""
    with open(path, "w") as f:
        f.write("# size c_hat half_width\n")
        for e in report.estimates:
            f.write(f"{e.size} {e.c_hat:.6f} {e.half_width:.6f}\n")


def write_bench_csv(rows, path):
    """Deterministic work-unit report; wall times go to the .dat file only."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            [
                "arch", "size", "states", "branching_sum",
                "v_encoder_calls", "q_encoder_calls",
                "v_work_units", "q_work_units",
            ]
        )
        for r in rows:
            w.writerow(
                [
                    r.arch, r.size, r.states, r.branching_sum,
                    r.v_stats.encoder_calls, r.q_stats.encoder_calls,
                    r.v_stats.node_updates, r.q_stats.node_updates,
                ]
            )


def write_bench_dat(rows, path):
    """gnuplot-friendly time-vs-size data file (one block per architecture)."""
    with open(path, "w") as f:
        f.write("# arch size v_wall_time q_wall_time v_work q_work\n")
        last_arch = None
        for r in rows:
            if last_arch is not None and r.arch != last_arch:
                f.write("\n\n")
            last_arch = r.arch
            f.write(
                f"{r.arch} {r.size} {r.v_stats.wall_time:.6f} {r.q_stats.wall_time:.6f} "
                f"{r.v_stats.node_updates} {r.q_stats.node_updates}\n"
            )
