"""Command-line entry point: ``moe-replica <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .benefit import estimate_benefits
from .metrics import evaluate_plan
from .placement import PlacementInfeasibleError
from .plan import (
    PlanFormatError,
    build_plan,
    compare_plans,
    load_plan,
    save_plan,
    sweep,
)
from .trace import TraceFormatError, generate_zipfian, load_trace, save_trace


class CliError(Exception):
    pass


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _check_trace_path(path: str) -> None:
    if Path(path).suffix not in (".crft", ".json"):
        raise CliError(f"{path}: trace files must end in .crft or .json")


def cmd_gen_trace(args) -> None:
    _check_trace_path(args.output)
    trace = generate_zipfian(
        args.layers, args.experts, args.batches, args.zipf, args.tokens, args.topk, seed=args.seed
    )
    save_trace(trace, args.output)


def cmd_estimate(args) -> None:
    trace = load_trace(args.trace)
    benefits = estimate_benefits(trace, args.gpus, args.nodes)
    _emit(benefits.to_json() + "\n", args.output)


def cmd_plan(args) -> None:
    trace = load_trace(args.trace)
    plan = build_plan(
        trace,
        args.gpus,
        args.nodes,
        None if args.auto_r else args.replication_factor,
        auto_method=args.auto_method,
        weighting=args.weighting,
        seed=args.seed,
    )
    if args.output:
        save_plan(plan, args.output)
    else:
        sys.stdout.write(plan.to_json())


def _check_dims(trace, plan, name="plan") -> None:
    if (trace.num_layers, trace.num_experts) != (plan.num_layers, plan.num_experts):
        raise CliError(
            f"{name} is for L={plan.num_layers}, E={plan.num_experts} but the trace has "
            f"L={trace.num_layers}, E={trace.num_experts}"
        )
    digest = plan.provenance.get("trace_sha256")
    if digest and digest != trace.digest():
        print(f"warning: {name} was built from a different trace", file=sys.stderr)


def cmd_evaluate(args) -> None:
    trace = load_trace(args.trace)
    plan = load_plan(args.plan)
    _check_dims(trace, plan)
    report = evaluate_plan(trace, plan)
    _emit(report.to_csv() if args.format == "csv" else report.to_json() + "\n", args.output)


def cmd_compare(args) -> None:
    trace = load_trace(args.trace)
    first, second = load_plan(args.plan_a), load_plan(args.plan_b)
    _check_dims(trace, first, "first plan")
    _check_dims(trace, second, "second plan")
    cmp = compare_plans(trace, first, second)
    if args.format == "json":
        _emit(json.dumps(cmp.to_dict(), indent=2) + "\n", args.output)
        return
    lines = ["layer,first,second,delta"]
    for l, (a, b) in enumerate(zip(cmp.first.plan, cmp.second.plan)):
        lines.append(f"{l},{float(a)!r},{float(b)!r},{float(a - b)!r}")
    lines.append(f"aggregate,{cmp.first.aggregate!r},{cmp.second.aggregate!r},{cmp.aggregate_delta!r}")
    lines.append(f"replicas,{cmp.replicas_first},{cmp.replicas_second},")
    lines.append(f"memory_ratio,{cmp.memory_ratio!r},,")
    _emit("\n".join(lines) + "\n", args.output)


def _parse_budgets(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"budgets must be comma-separated integers: {text!r}")
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError("budgets must be non-negative integers")
    return values


def cmd_sweep(args) -> None:
    trace = load_trace(args.trace)
    result = sweep(trace, args.gpus, args.nodes, args.budgets, weighting=args.weighting)
    if args.format == "json":
        _emit(json.dumps(result.to_dict(), indent=2) + "\n", args.output)
    else:
        _emit(result.to_csv(), args.output)


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moe-replica", description="Cost-aware expert replica planning for MoE inference."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def cluster(p):
        p.add_argument("--gpus", type=_positive, required=True)
        p.add_argument("--nodes", type=_positive, default=1)

    def output(p):
        p.add_argument("-o", "--output")

    def fmt(p, default):
        p.add_argument("--format", choices=("csv", "json"), default=default)

    p = sub.add_parser("gen-trace", help="write a synthetic Zipfian trace")
    p.add_argument("--layers", type=_positive, required=True)
    p.add_argument("--experts", type=_positive, required=True)
    p.add_argument("--batches", type=_positive, default=32)
    p.add_argument("--zipf", type=float, default=1.2)
    p.add_argument("--topk", type=_positive, default=8)
    p.add_argument("--tokens", type=_positive, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("estimate", help="per-layer replication benefit (JSON)")
    p.add_argument("trace")
    cluster(p)
    p.add_argument("--seed", type=int, default=0)
    output(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("plan", help="build a replication plan")
    p.add_argument("trace")
    cluster(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--replication-factor", "-R", type=_non_negative)
    group.add_argument("--auto-r", action="store_true")
    p.add_argument("--auto-method", choices=("dp", "uniform"), default="dp")
    p.add_argument("--weighting", choices=("none", "replicas"), default="none")
    p.add_argument("--seed", type=int, default=0)
    output(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("evaluate", help="replay a trace through a plan")
    p.add_argument("trace")
    p.add_argument("plan")
    fmt(p, "csv")
    output(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="replay a trace through two plans")
    p.add_argument("trace")
    p.add_argument("plan_a")
    p.add_argument("plan_b")
    fmt(p, "json")
    output(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="plan and replay over several replication factors")
    p.add_argument("trace")
    cluster(p)
    p.add_argument("--budgets", type=_parse_budgets, required=True,
                   help="comma-separated replicas per GPU, e.g. 0,1,2,4,8")
    p.add_argument("--weighting", choices=("none", "replicas"), default="none")
    p.add_argument("--seed", type=int, default=0)
    fmt(p, "csv")
    output(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, TraceFormatError, PlanFormatError, PlacementInfeasibleError,
            ValueError, OSError) as exc:
        print(f"moe-replica {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
