"""Command-line front end.

Verbs: ``plan``, ``sweep``, ``limits``, ``simulate``, ``calibrate``.  Output
is CSV (default) or JSON.  The first CSV line is a ``# config:`` comment
holding every resolved option, so any output can be replayed.

Exit codes: 0 ok, 2 usage error, 3 infeasible plan, 4 calibration residual
over the threshold.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import List, Optional, Sequence

from . import accounting
from .calibrate import DEFAULT_TARGETS, RESIDUAL_THRESHOLD, calibrate
from .device import builtin_profile, max_contexts
from .endpoints import (
    CATEGORIES,
    SWEEP_RESOURCES,
    EndpointCategory,
    SweepSpec,
    WorkloadSpec,
    build_endpoints,
    build_global_array,
    build_stencil,
    build_sweep,
)
from .errors import InfeasiblePlan, UnknownProfile
from .sim import SimParams, default_params, run_sim
from .verbs import EnvConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_RESIDUAL = 4

SWEEP_COLUMNS = ("resource", "ways", "rate", "mmio_doorbells", "blueflame_writes",
                 "dma_reads_wqe", "dma_reads_payload", "dma_writes_cqe", "cq_polls",
                 "ctx", "pd", "mr", "qp", "cq", "uars", "uuars_alloc", "uuars_used",
                 "memory_bytes")
SIM_COLUMNS = ("category", "workload", "threads", "processes", "rate", "makespan",
               "messages", "mmio_doorbells", "blueflame_writes", "dma_reads_wqe",
               "dma_reads_payload", "dma_writes_cqe", "cq_polls")
LIMIT_COLUMNS = ("profile", "uars_per_ctx", "max_ctx", "datapath_registers")
DEFAULT_LIMIT_SIZES = (8, 9, 16, 256, 8168)
RATE_DIGITS = 9


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _common(p: argparse.ArgumentParser):
    p.add_argument("--profile", default="connectx4",
                   help="adapter profile: connectx4, connectx3 or custom")
    p.add_argument("--profile-file", help="JSON overrides for --profile custom")
    p.add_argument("--threads", type=_positive, default=16)
    p.add_argument("--processes", type=_positive, default=1)
    p.add_argument("--params", help="SimParams JSON file (default: shipped calibration)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--total-uuars", type=int, help="MLX5_TOTAL_UUARS override")
    p.add_argument("--low-lat-uuars", type=int, help="MLX5_NUM_LOW_LAT_UUARS override")
    p.add_argument("--shut-up-bf", action="store_true", default=None,
                   help="MLX5_SHUT_UP_BF: disable BlueFlame")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="verbsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("plan", help="resource and memory report per endpoint category")
    _common(p)
    p.add_argument("--category", action="append",
                   help="endpoint category (repeatable; default: all six)")
    p.add_argument("--workload", choices=("message-rate", "global-array"),
                   default="message-rate")

    p = sub.add_parser("sweep", help="x-way sharing sweep of one resource")
    _common(p)
    p.add_argument("--resource", required=True, choices=SWEEP_RESOURCES)
    p.add_argument("--ways", type=_positive, nargs="+", default=[1, 2, 4, 8, 16])
    p.add_argument("--postlist", type=_positive, default=32)
    p.add_argument("--no-postlist", action="store_true", help="same as --postlist 1")
    p.add_argument("--unsignaled", type=_positive, default=64)
    p.add_argument("--no-unsignaled", action="store_true", help="same as --unsignaled 1")
    p.add_argument("--no-inline", action="store_true")
    p.add_argument("--no-blueflame", action="store_true")
    p.add_argument("--unaligned", action="store_true",
                   help="pack buffers back to back instead of one per cache line")
    p.add_argument("--messages", type=_positive, default=1024)
    p.add_argument("--depth", type=_positive, default=128)

    p = sub.add_parser("limits", help="maximum contexts for UAR counts per context")
    _common(p)
    p.add_argument("--uars-per-ctx", type=_positive, nargs="+",
                   default=list(DEFAULT_LIMIT_SIZES))

    p = sub.add_parser("simulate", help="simulate one category on one workload")
    _common(p)
    p.add_argument("--category", default="mpi-everywhere")
    p.add_argument("--workload", choices=("message-rate", "global-array", "stencil"),
                   default="message-rate")
    p.add_argument("--messages", type=_positive, default=1024)
    p.add_argument("--grid", type=_positive, default=512, help="stencil halo width")
    p.add_argument("--torture", type=int, nargs="?", const=100, default=0, metavar="RUNS",
                   help="also run the concurrent datapath torture harness (default 100 runs)")

    p = sub.add_parser("calibrate", help="fit SimParams to category performance ratios")
    _common(p)
    p.add_argument("--targets", help="JSON object {category: ratio}")
    p.add_argument("--budget", type=_positive, default=24)
    p.add_argument("--threshold", type=float, default=RESIDUAL_THRESHOLD)
    return parser


# ---------------------------------------------------------------- helpers

def _config_line(args) -> str:
    items = []
    for key, value in sorted(vars(args).items()):
        if key == "out":
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        items.append(f"{key}={value}")
    return "# config: " + " ".join(items)


def _config_dict(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "out"}


def _profile(args):
    if args.profile.lower() == "custom":
        return builtin_profile("custom", args.profile_file)
    return builtin_profile(args.profile)


def _env(args) -> EnvConfig:
    return EnvConfig.from_environ(total_uuars=args.total_uuars, num_low_lat=args.low_lat_uuars,
                                  shut_up_bf=args.shut_up_bf)


def _resolve(args):
    """Replace unset options by the values actually used, for the config echo."""
    env = _env(args)
    args.total_uuars = env.total_uuars
    args.low_lat_uuars = env.num_low_lat
    args.shut_up_bf = env.shut_up_bf
    if args.params is None and args.verb != "calibrate":
        args.params = "default"


def _params(args) -> SimParams:
    if args.params in (None, "default"):
        return default_params()
    return SimParams.load(args.params)


def _render(args, columns: Sequence[str], rows: List[dict], extra: Optional[dict] = None) -> str:
    if args.format == "json":
        data = {"config": _config_dict(args), "rows": rows}
        if extra:
            data.update(extra)
        return json.dumps(data, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(_config_line(args) + "\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n",
                            extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _infeasible(exc: InfeasiblePlan) -> int:
    print("infeasible plan:", file=sys.stderr)
    for v in exc.violations:
        print(f"  {v}", file=sys.stderr)
    return EXIT_INFEASIBLE


# ---------------------------------------------------------------- verbs

def cmd_plan(args) -> int:
    profile, env = _profile(args), _env(args)
    names = args.category or [c.value for c in CATEGORIES]
    workload = (WorkloadSpec.global_array() if args.workload == "global-array"
                else WorkloadSpec.message_rate())
    reports = []
    for name in names:
        category = EndpointCategory.parse(name)
        plan = build_endpoints(category, args.threads, args.processes, profile, env, workload)
        reports.append(accounting.resource_report(plan))
    rows = [r.row() for r in reports]
    _emit(args, _render(args, accounting.CSV_COLUMNS, rows))
    return EXIT_OK


def _rate(x: float) -> float:
    return round(x, RATE_DIGITS)


def cmd_sweep(args) -> int:
    spec = SweepSpec(
        resource=args.resource,
        ways=tuple(args.ways),
        threads=args.threads,
        postlist=1 if args.no_postlist else args.postlist,
        unsignaled=1 if args.no_unsignaled else args.unsignaled,
        inline=not args.no_inline,
        blueflame=not args.no_blueflame,
        aligned=not args.unaligned,
        messages=args.messages,
        depth=args.depth,
    )
    params = _params(args)
    rows = []
    for point in build_sweep(spec, _profile(args), _env(args)):
        result = run_sim(point.plan, point.workload, params, args.seed)
        report = accounting.resource_report(point.plan)
        row = {"resource": args.resource, "ways": point.ways,
               "rate": _rate(result.messages_per_tick)}
        row.update(result.counters.to_dict())
        row.update(ctx=report.ctx_count, pd=report.pd_count, mr=report.mr_count,
                   qp=report.qp_count, cq=report.cq_count, uars=report.uars_allocated,
                   uuars_alloc=report.uuars_allocated, uuars_used=report.uuars_used,
                   memory_bytes=report.memory_bytes)
        rows.append(row)
    _emit(args, _render(args, SWEEP_COLUMNS, rows))
    return EXIT_OK


def cmd_limits(args) -> int:
    profile = _profile(args)
    rows = [{"profile": profile.name, "uars_per_ctx": n, "max_ctx": max_contexts(profile, n),
             "datapath_registers": profile.datapath_registers}
            for n in args.uars_per_ctx]
    _emit(args, _render(args, LIMIT_COLUMNS, rows))
    return EXIT_OK


def cmd_simulate(args) -> int:
    profile, env = _profile(args), _env(args)
    category = EndpointCategory.parse(args.category)
    if args.workload == "stencil":
        if 16 % args.processes:
            raise _UsageError("stencil needs --processes dividing 16")
        threads = 16 // args.processes
        plan, wl = build_stencil(args.processes, threads, args.grid, category, profile, env)
    elif args.workload == "global-array":
        threads = args.threads
        plan, wl = build_global_array(category, threads, args.processes, profile, env)
    else:
        threads = args.threads
        wl = WorkloadSpec.message_rate(messages=args.messages)
        plan = build_endpoints(category, threads, args.processes, profile, env, wl)
    result = run_sim(plan, wl, _params(args), args.seed)
    row = {"category": category.value, "workload": args.workload, "threads": threads,
           "processes": args.processes, "rate": _rate(result.messages_per_tick),
           "makespan": result.makespan, "messages": result.total_messages}
    row.update(result.counters.to_dict())
    _emit(args, _render(args, SIM_COLUMNS, [row]))
    if args.torture:
        from .torture import torture_suite

        results = torture_suite(runs=args.torture, first_seed=args.seed)
        bad = [r for r in results if not r.ok]
        print(f"torture: {len(results) - len(bad)}/{len(results)} runs ok", file=sys.stderr)
        for r in bad:
            print(f"  failed: {r.plan} seed={r.seed} errors={r.errors}", file=sys.stderr)
        if bad:
            return 1
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.targets:
        with open(args.targets) as fh:
            targets = json.load(fh)
    else:
        targets = DEFAULT_TARGETS
    base = SimParams.load(args.params) if args.params else SimParams()
    result = calibrate(targets, budget=args.budget, seed=args.seed, base=base,
                       threads=args.threads)
    if args.format == "json":
        data = {"config": _config_dict(args), **result.to_dict()}
        text = json.dumps(data, indent=2) + "\n"
    else:
        rows = [{"category": c, "ratio": result.ratios.get(c), "residual": r}
                for c, r in result.residuals.items()]
        text = _render(args, ("category", "ratio", "residual"), rows)
    _emit(args, text)
    if result.max_residual > args.threshold:
        print(f"max residual {result.max_residual:.3f} exceeds {args.threshold}",
              file=sys.stderr)
        return EXIT_RESIDUAL
    return EXIT_OK


class _UsageError(Exception):
    pass


COMMANDS = {
    "plan": cmd_plan,
    "sweep": cmd_sweep,
    "limits": cmd_limits,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _resolve(args)
        return COMMANDS[args.verb](args)
    except InfeasiblePlan as exc:
        return _infeasible(exc)
    except (_UsageError, UnknownProfile, ValueError) as exc:
        print(f"verbsim {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
