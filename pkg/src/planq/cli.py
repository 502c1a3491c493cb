"""Command-line surface tying the pipeline together.

Exit codes: 0 success (including failed policy runs, which are data), 1
runtime/IO errors, 2 usage errors.  Every command logs its fully resolved
configuration to stderr, and all randomness flows from one root seed.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ProcessPoolExecutor

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import evaluation, pddl, teacher, training
from .models import load_model, save_model
from .policy import PolicyConfig, run_policy, write_plan_file
from .training import LossConfig, TrainConfig, train, write_training_log
from .util import derive_seed

ARCHES = ("rgnn", "oe", "oae")


def parse_sizes(spec):
    """`A..B` ranges or comma lists."""
    sizes = []
    for part in spec.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..", 1)
            sizes.extend(range(int(a), int(b) + 1))
        elif part:
            sizes.append(int(part))
    return sizes


def apply_config(ctx):
    """Merge values from --config: flags always override file values."""
    path = ctx.params.pop("config", None)
    if not path:
        return
    with open(path, "rb") as f:
        values = tomllib.load(f)
    section = values.get(ctx.command.name, values)
    for key, value in section.items():
        key = key.replace("-", "_")
        if key not in ctx.params:
            raise click.UsageError(f"unknown config key '{key}' for {ctx.command.name}")
        source = ctx.get_parameter_source(key)
        if source is not None and source.name == "DEFAULT":
            ctx.params[key] = value


def log_resolved(ctx):
    cfg = {k: v for k, v in ctx.params.items() if v is not None}
    click.echo(f"[{ctx.command.name}] resolved config: {json.dumps(cfg, sort_keys=True, default=str)}", err=True)


def config_option(f):
    return click.option("--config", type=click.Path(exists=True), default=None,
                        help="TOML config file; flags override file values.")(f)


@click.group()
def main():
    """Learn and evaluate generalizing value policies for planning domains."""


def _load_domain(builtin, domain_path):
    if builtin:
        return teacher.builtin_domain(builtin)
    if domain_path:
        with open(domain_path) as f:
            return pddl.parse_domain(f.read(), filename=domain_path)
    raise click.UsageError("one of --builtin or --domain is required")


def _solve_chunk(args):
    domain, insts, teacher_h, sibling_h, budget = args
    return teacher.build_dataset(
        domain, insts, teacher_h, sibling_h, budget, log=lambda m: print(m, file=sys.stderr)
    )


@main.command("gen-data")
@click.option("--builtin", type=click.Choice(sorted(teacher.BUILTIN_DOMAINS)), default=None)
@click.option("--domain", "domain_path", type=click.Path(exists=True), default=None,
              help="PDDL domain file (with --problem instance files).")
@click.option("--problem", "problems", type=click.Path(exists=True), multiple=True)
@click.option("--sizes", default=None, help="builtin instance sizes, e.g. 5..12 or 5,7,9")
@click.option("--per-size", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--teacher-heuristic", default="lmcut", type=click.Choice(["lmcut", "hmax", "blind"]))
@click.option("--sibling-heuristic", default="lmcut", type=click.Choice(["lmcut", "hmax"]))
@click.option("--max-expansions", default=1_000_000, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
@config_option
@click.pass_context
def cmd_gen_data(ctx, **kwargs):
    """Generate instances, solve them optimally, and write a JSONL dataset."""
    apply_config(ctx)
    log_resolved(ctx)
    p = ctx.params
    try:
        domain = _load_domain(p["builtin"], p["domain_path"])
        instances = []
        if p["builtin"]:
            if not p["sizes"]:
                raise click.UsageError("--sizes is required with --builtin")
            for n in parse_sizes(p["sizes"]):
                try:
                    instances.extend(
                        teacher.generate_unique_instances(
                            p["builtin"], n, p["per_size"], derive_seed(p["seed"], "gen", n)
                        )
                    )
                except teacher.InfeasibleSizeError as exc:
                    click.echo(f"size {n}: {exc} (skipped)", err=True)
        for path in p["problems"]:
            with open(path) as f:
                instances.append(pddl.parse_instance(f.read(), domain, filename=path))
        provenance = {
            "generator": p["builtin"] or p["domain_path"],
            "sizes": p["sizes"],
            "per_size": p["per_size"],
            "seed": p["seed"],
            "teacher_heuristic": p["teacher_heuristic"],
            "sibling_heuristic": p["sibling_heuristic"],
        }
        if p["workers"] > 1 and len(instances) > 1:
            chunks = [instances[i :: p["workers"]] for i in range(p["workers"])]
            with ProcessPoolExecutor(p["workers"]) as pool:
                parts = list(
                    pool.map(
                        _solve_chunk,
                        [
                            (domain, c, p["teacher_heuristic"], p["sibling_heuristic"], p["max_expansions"])
                            for c in chunks
                            if c
                        ],
                    )
                )
            ds = teacher.Dataset(meta=parts[0].meta, provenance=provenance)
            by_id = {}
            for part in parts:
                by_id.update(part.instances)
            for inst in instances:  # deterministic instance order regardless of worker timing
                if inst.name in by_id:
                    ds.instances[inst.name] = by_id[inst.name]
            tuples_by_instance = {}
            for part in parts:
                for tup in part.tuples:
                    tuples_by_instance.setdefault(tup.instance_id, []).append(tup)
            for inst in instances:
                ds.tuples.extend(tuples_by_instance.get(inst.name, []))
        else:
            ds = teacher.build_dataset(
                domain,
                instances,
                p["teacher_heuristic"],
                p["sibling_heuristic"],
                p["max_expansions"],
                provenance=provenance,
                log=lambda m: click.echo(m, err=True),
            )
        teacher.save_dataset(ds, p["out"])
        click.echo(f"wrote {len(ds.tuples)} tuples from {len(ds.instances)} instances to {p['out']}")
    except (OSError, pddl.PddlError, ValueError) as exc:
        raise click.ClickException(str(exc))


@main.command("train")
@click.argument("dataset_path", type=click.Path(exists=True))
@click.option("--arch", type=click.Choice(ARCHES), default="rgnn", show_default=True)
@click.option("--head", type=click.Choice(["v", "q"]), default="q", show_default=True)
@click.option("--reg", type=click.Choice(["none", "explicit", "heuristic"]), default="none", show_default=True)
@click.option("--lambda", "lam", default=1.0, show_default=True)
@click.option("--dead-end-value", default=training.DEFAULT_DEAD_END_VALUE, show_default=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch", default=256, show_default=True)
@click.option("--lr", default=None, type=float, help="default: 0.0002, 0.002 when regularized")
@click.option("--clip", default=0.1, show_default=True)
@click.option("--seeds", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--hidden", default=32, show_default=True)
@click.option("--layers", default=30, show_default=True)
@click.option("--validate", "validate_domain", default=None,
              type=click.Choice(sorted(teacher.BUILTIN_DOMAINS)),
              help="dynamic coverage validation on this builtin domain")
@click.option("--out", required=True, type=click.Path(), help="checkpoint path")
@click.option("--log", "log_path", default=None, type=click.Path(), help="training log CSV")
@config_option
@click.pass_context
def cmd_train(ctx, **kwargs):
    """Train a value network on a JSONL dataset and write the best checkpoint."""
    apply_config(ctx)
    log_resolved(ctx)
    p = ctx.params
    try:
        ds = teacher.load_dataset(p["dataset_path"])
        loss_cfg = LossConfig(p["head"], p["reg"], p["lam"], p["dead_end_value"])
        train_cfg = TrainConfig(
            epochs=p["epochs"], batch_size=p["batch"], learning_rate=p["lr"], clip=p["clip"],
            seeds=p["seeds"], seed=p["seed"], hidden_size=p["hidden"], layers=p["layers"],
        )
        hook = None
        if p["validate_domain"]:
            vcfg = training.ValidationConfig(seed=derive_seed(p["seed"], "dynval"))
            hook = lambda model: training.dynamic_validation(model, p["validate_domain"], vcfg)
        model, rows = train(ds, p["arch"], p["head"], loss_cfg, train_cfg, validation_hook=hook,
                            log=lambda m: click.echo(m, err=True))
        save_model(model, p["out"])
        if p["log_path"]:
            write_training_log(rows, p["log_path"])
        click.echo(f"wrote checkpoint {p['out']} ({len(rows)} epoch rows)")
    except (OSError, ValueError, training.NonFiniteLossError) as exc:
        raise click.ClickException(str(exc))


def _task_from_options(p):
    domain = _load_domain(p.get("builtin"), p.get("domain_path"))
    if p.get("instance_path"):
        with open(p["instance_path"]) as f:
            inst = pddl.parse_instance(f.read(), domain, filename=p["instance_path"])
    else:
        if not p.get("size"):
            raise click.UsageError("either an instance file or --builtin with --size is required")
        inst = teacher.generate_instance(teacher.GeneratorSpec(p["builtin"], p["size"], p["seed"]))
    return pddl.ground(domain, inst), inst


@main.command("run")
@click.argument("checkpoint", type=click.Path())
@click.option("--instance", "instance_path", type=click.Path(exists=True), default=None)
@click.option("--domain", "domain_path", type=click.Path(exists=True), default=None)
@click.option("--builtin", type=click.Choice(sorted(teacher.BUILTIN_DOMAINS)), default=None)
@click.option("--size", type=int, default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--step-limit", default=None, type=int, help="default: 100 + instance size")
@click.option("--no-forbid-revisit", is_flag=True, default=False)
@click.option("--plan-out", default=None, type=click.Path())
@click.option("--result-out", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_run(ctx, **kwargs):
    """Execute a learned policy on one instance; failures are results, not errors."""
    apply_config(ctx)
    log_resolved(ctx)
    p = ctx.params
    try:
        model = load_model(p["checkpoint"])
        task, inst = _task_from_options(p)
        limit = p["step_limit"] or (100 + len(inst.objects))
        cfg = PolicyConfig(model.head, limit, not p["no_forbid_revisit"])
        result = run_policy(model, task, cfg)
        payload = {
            "instance": inst.name,
            "outcome": result.outcome,
            "plan_length": result.plan_length,
            "encoder_calls": result.stats.encoder_calls,
            "node_updates": result.stats.node_updates,
        }
        if p["plan_out"] and result.solved:
            write_plan_file(task, result.actions, p["plan_out"])
        out = json.dumps(payload, indent=2)
        if p["result_out"]:
            with open(p["result_out"], "w") as f:
                f.write(out + "\n")
        click.echo(out)
    except (OSError, pddl.PddlError, ValueError) as exc:
        raise click.ClickException(str(exc))


@main.command("eval-scaling")
@click.argument("checkpoint", type=click.Path())
@click.option("--builtin", required=True, type=click.Choice(sorted(teacher.BUILTIN_DOMAINS)))
@click.option("--min-size", default=None, type=int)
@click.option("--max-size", default=None, type=int, help="default: 100 (1000 for visitall)")
@click.option("--seed", default=0, show_default=True)
@click.option("--interval", type=click.Choice(["wald", "wilson"]), default="wald", show_default=True)
@click.option("--out-csv", default=None, type=click.Path())
@click.option("--out-json", default=None, type=click.Path())
@click.option("--out-dat", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_eval_scaling(ctx, **kwargs):
    """Scaling-behavior evaluation: per-size coverage, Scale, and SCov."""
    apply_config(ctx)
    log_resolved(ctx)
    p = ctx.params
    try:
        model = load_model(p["checkpoint"])
        cfg = evaluation.ScalingConfig(
            coverage=evaluation.CoverageConfig(seed=p["seed"], interval=p["interval"]),
            max_size=p["max_size"],
            min_size=p["min_size"],
        )
        report = evaluation.scaling_evaluation(model, p["builtin"], cfg)
        if p["out_csv"]:
            evaluation.write_scaling_csv(report, p["out_csv"])
        if p["out_json"]:
            evaluation.write_scaling_json(report, p["out_json"])
        if p["out_dat"]:
            evaluation.write_coverage_dat(report, p["out_dat"])
        click.echo(f"scale={report.scale} scov={report.scov:.3f} termination={report.termination}")
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc))


@main.command("err-diff")
@click.argument("checkpoint", type=click.Path())
@click.argument("dataset_path", type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_err_diff(ctx, **kwargs):
    """Teacher-action prediction error and teacher/non-teacher Q-value gap."""
    apply_config(ctx)
    log_resolved(ctx)
    p = ctx.params
    try:
        model = load_model(p["checkpoint"])
        ds = teacher.load_dataset(p["dataset_path"])
        if model.meta.fingerprint != ds.meta.fingerprint:
            raise click.ClickException("checkpoint/dataset domain fingerprint mismatch")
        err, diff = evaluation.err_diff(model, ds)
        if p["out"]:
            with open(p["out"], "w", newline="") as f:
                f.write("err,diff\n")
                f.write(f"{err:.10g},{diff:.10g}\n")
        click.echo(f"err={err:.4f} diff={diff:.4f}")
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc))


@main.command("bench")
@click.option("--builtin", required=True, type=click.Choice(sorted(teacher.BUILTIN_DOMAINS)))
@click.option("--sizes", required=True, help="e.g. 5..20")
@click.option("--arch", "arches", type=click.Choice(ARCHES), multiple=True, default=("rgnn",))
@click.option("--per-size", default=25, show_default=True)
@click.option("--walk-length", default=25, show_default=True)
@click.option("--hidden", default=16, show_default=True)
@click.option("--layers", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, type=click.Path())
@click.option("--dat", default=None, type=click.Path())
@config_option
@click.pass_context
def cmd_bench(ctx, **kwargs):
    """V-vs-Q efficiency benchmark on random-walk states."""
    apply_config(ctx)
    log_resolved(ctx)
    p = ctx.params
    try:
        cfg = evaluation.BenchConfig(
            instances_per_size=p["per_size"], walk_length=p["walk_length"],
            hidden_size=p["hidden"], layers=p["layers"], seed=p["seed"],
        )
        rows = evaluation.efficiency_bench(list(p["arches"]), p["builtin"], parse_sizes(p["sizes"]), cfg)
        if p["out"]:
            evaluation.write_bench_csv(rows, p["out"])
        if p["dat"]:
            evaluation.write_bench_dat(rows, p["dat"])
        for r in rows:
            click.echo(
                f"{r.arch} size={r.size} states={r.states} "
                f"v_calls={r.v_stats.encoder_calls} q_calls={r.q_stats.encoder_calls} "
                f"v_work={r.v_stats.node_updates} q_work={r.q_stats.node_updates}"
            )
    except (OSError, ValueError) as exc:
        raise click.ClickException(str(exc))


if __name__ == "__main__":
    main()
