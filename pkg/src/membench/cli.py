"""Command-line front end.

Subcommands mirror the library layers: `env` inspects the host, `latency`
and `bandwidth` run one measurement each, `sweep` runs the standard grids
with persistence and resume, `report` renders stored runs, and `compare`
builds subject-vs-baseline ratio tables from runs or from the bundled
reference numbers.

Exit codes: 0 success, 1 measurement failure, 2 usage error, 3 environment
policy violation (strict mode). Errors go to stderr — as JSON records when
--format structured is selected, so scripted callers never parse prose.

Device profiles are looked up by name: "dram" (anonymous memory on node 0)
is built in; more come from the JSON file named by $MEMBENCH_PROFILES.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

from . import analysis, envguard, model, sweep as sweep_mod
from .chase import run_chase
from .errors import MembenchError, MissingMetricError, PolicyError
from .model import (
    AccessMode,
    AnonymousBacking,
    ChaseSpec,
    DeviceKind,
    DeviceProfile,
    StreamSpec,
    decode_record,
)
from .stream import default_pin_cores, run_stream

PROFILE_ENV_VAR = "MEMBENCH_PROFILES"

EXIT_OK = 0
EXIT_MEASUREMENT = 1
EXIT_USAGE = 2
EXIT_POLICY = 3

_BUILTIN_PROFILES = {
    "dram": DeviceProfile(
        name="dram",
        kind=DeviceKind.DRAM,
        numa_node=0,
        backing=AnonymousBacking(),
        description="anonymous memory bound to NUMA node 0",
    )
}


class UsageError(Exception):
    pass


def load_profiles() -> dict[str, DeviceProfile]:
    """Built-in profiles plus the operator's store, which may shadow them."""
    profiles = dict(_BUILTIN_PROFILES)
    store = os.environ.get(PROFILE_ENV_VAR)
    if store:
        path = Path(store)
        if not path.exists():
            raise UsageError(f"{PROFILE_ENV_VAR} points to missing file {store}")
        try:
            doc = json.loads(path.read_text())
            for name, record in doc["profiles"].items():
                profiles[name] = decode_record("device_profile", record)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"cannot parse profile store {store}: {exc}") from exc
    return profiles


def resolve_profile(name: str) -> DeviceProfile:
    profiles = load_profiles()
    if name not in profiles:
        known = ", ".join(sorted(profiles))
        raise UsageError(f"unknown profile '{name}' (known: {known})")
    return profiles[name]


def _gate_environment(strict: bool) -> envguard.EnvReport:
    """Inspect once; raise in strict mode, warn on stderr otherwise."""
    report = envguard.inspect_environment()
    warnings = envguard.enforce(report, strict=strict)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return report


def _emit(args, record, text: str) -> None:
    if args.format == "structured":
        print(model.dumps(record))
    else:
        print(text)


def _write_out(args, record, env) -> None:
    if getattr(args, "out", None):
        path = model.write_document(Path(args.out), record, env=env)
        if args.format == "text":
            print(f"wrote {path}")


# --- subcommand handlers ------------------------------------------------------


def cmd_env(args) -> int:
    report = envguard.inspect_environment()
    if args.strict_env:
        envguard.enforce(report, strict=True)
    if args.format == "structured":
        print(model.dumps(report))
    else:
        caches = [
            f"{label}={b // 1024}KiB" if b else f"{label}=?"
            for label, b in (
                ("l1d", report.cache_l1d_bytes),
                ("l2", report.cache_l2_bytes),
                ("llc", report.cache_llc_bytes),
            )
        ]
        smt = {True: "on", False: "off", None: "unknown"}[report.smt_enabled]
        print(f"host: {report.hostname}  cpu: {report.cpu_model}")
        print(f"cpus: {report.online_cpus} online, smt={smt}, governor={report.governor}")
        print(f"numa nodes: {list(report.numa_nodes)} cpus per node {list(report.node_cpu_counts)}")
        print(f"caches: {' '.join(caches)}")
        print(f"thp={report.thp_mode} aslr={report.aslr} page={report.page_bytes}B "
              f"timer={report.timer_resolution_s:g}s")
        for v in envguard.violations(report):
            print(f"violation: {v}")
        for w in report.warnings:
            print(f"warning: {w}")
    if args.out:
        model.write_document(Path(args.out), report)
    return EXIT_OK


def cmd_latency(args) -> int:
    device = resolve_profile(args.profile)
    env = _gate_environment(args.strict_env)
    spec = ChaseSpec(
        buffer_bytes=args.buffer_bytes,
        mode=AccessMode.parse(args.mode),
        window_bytes=args.window_bytes,
        seed=args.seed,
        min_timed_duration_ns=args.min_timed_ms * 1_000_000,
        runs=args.runs,
        pin_core=args.pin_core,
    )
    result = run_chase(spec, device)
    window = f"{args.window_bytes}B-window" if args.window_bytes else "global"
    text = (
        f"{device.name} {spec.mode.value} {spec.buffer_bytes}B {window}: "
        f"{model.round_half_up(result.ns_per_access, 1):.1f} ns/access "
        f"(iqr {result.dispersion_ns:.3f} ns, {spec.runs} runs x {result.hops_timed} hops)"
    )
    _emit(args, result, text)
    _write_out(args, result, env)
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    device = resolve_profile(args.profile)
    env = _gate_environment(args.strict_env)
    spec = StreamSpec(
        worker_count=args.workers,
        mode=AccessMode.parse(args.mode),
        pin_cores=default_pin_cores(args.workers, args.worker_node),
        per_worker_bytes=args.buffer_bytes,
        passes=args.passes,
        seed=args.seed,
    )
    result = run_stream(spec, device)
    text = (
        f"{device.name} {spec.mode.value} {spec.worker_count} worker(s) x "
        f"{spec.per_worker_bytes}B x {spec.passes} pass(es): "
        f"{model.round_half_up(result.bandwidth_gbs, 2):.2f} GB/s "
        f"(wall {result.wall_time_ns / 1e9:.3f} s, skew {result.skew_fraction * 100:.1f}%)"
    )
    _emit(args, result, text)
    _write_out(args, result, env)
    return EXIT_OK


def _selected_plans(args, env: envguard.EnvReport) -> list[sweep_mod.SweepPlan]:
    from dataclasses import replace

    plans = sweep_mod.default_plans(
        llc_bytes=env.cache_llc_bytes,
        node=args.worker_node or 0,
        max_buffer_bytes=args.max_buffer_bytes,
    )
    if args.plan != "all":
        plans = tuple(p for p in plans if p.name == args.plan)
        if not plans:
            raise UsageError(f"unknown plan '{args.plan}'")
    out = []
    for p in plans:
        changes = {"seed": args.seed, "runs": args.runs,
                   "min_timed_duration_ns": args.min_timed_ms * 1_000_000,
                   "passes": args.passes}
        if p.kind is sweep_mod.SweepKind.BANDWIDTH_WORKERS and args.per_worker_bytes:
            changes["per_worker_bytes"] = args.per_worker_bytes
        out.append(replace(p, **changes))
    return out


def cmd_sweep(args) -> int:
    device = resolve_profile(args.profile)
    env = _gate_environment(args.strict_env)
    plans = _selected_plans(args, env)
    out_root = Path(args.out)
    reports = []
    for plan in plans:
        plan_dir = out_root / plan.name

        def progress(mode, point, result):
            value = analysis.point_value(result)
            unit = "ns" if plan.kind is sweep_mod.SweepKind.LATENCY_CAPACITY else "GB/s"
            print(f"[{plan.name}] {mode.short} point={point}: {value:.2f} {unit}",
                  file=sys.stderr)

        report = sweep_mod.run_sweep(
            plan, device, out_dir=plan_dir, env=env,
            resume=not args.no_resume, progress=progress,
        )
        (plan_dir / "report.txt").write_text(analysis.render_report(report) + "\n")
        reports.append(report)
    if args.format == "structured":
        print(json.dumps([model.to_document(r) for r in reports], indent=2, sort_keys=True))
    else:
        for r in reports:
            print()
            print(analysis.render_report(r))
    return EXIT_OK


def _load_run_reports(path: Path) -> list[sweep_mod.SweepReport]:
    candidates = []
    if (path / "report.json").exists():
        candidates.append(path / "report.json")
    candidates.extend(sorted(path.glob("*/report.json")))
    if not candidates:
        raise UsageError(f"no report.json under {path}")
    return [model.from_document(model.read_document(c)) for c in candidates]


def cmd_report(args) -> int:
    reports = _load_run_reports(Path(args.run))
    if args.format == "structured":
        print(json.dumps([model.to_document(r) for r in reports], indent=2, sort_keys=True))
    else:
        for r in reports:
            print(analysis.render_report(r))
            print()
    if args.tsv:
        body = "".join(analysis.report_tsv(r) for r in reports)
        Path(args.tsv).write_text(body)
        if args.format == "text":
            print(f"wrote {args.tsv}")
    return EXIT_OK


_REFERENCE_SETS = {
    "ref:dram-local": analysis.REFERENCE_DRAM_LOCAL,
    "ref:nvm-local": analysis.REFERENCE_NVM_LOCAL,
    "ref:nvm-remote": analysis.REFERENCE_NVM_REMOTE,
}


def _metric_source(token: str, label: Optional[str]) -> analysis.MetricSet:
    if token in _REFERENCE_SETS:
        return _REFERENCE_SETS[token]
    path = Path(token)
    if not path.exists():
        known = ", ".join(sorted(_REFERENCE_SETS))
        raise UsageError(f"'{token}' is neither a run directory nor one of: {known}")
    reports = _load_run_reports(path)
    return analysis.metric_set(label or path.name, reports)


def cmd_compare(args) -> int:
    baseline = _metric_source(args.baseline, args.baseline_label)
    subject = _metric_source(args.subject, args.subject_label)
    table = analysis.ratio_table(baseline, subject, args.metric or None)
    if args.format == "structured":
        print(model.dumps(table))
    else:
        print(analysis.render_ratio_table(table))
    if args.out:
        model.write_document(Path(args.out), table)
        if args.format == "text":
            print(f"wrote {args.out}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *, profile: bool = True) -> None:
    if profile:
        p.add_argument("--profile", default="dram",
                       help="device profile name (default: dram)")
    p.add_argument("--strict-env", action="store_true",
                   help="refuse to run unless the host passes hygiene checks")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--out", help="also write the result document to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="membench",
        description="Memory-hierarchy micro-benchmarks: dependent-load latency, "
                    "multi-worker scan bandwidth, sweeps and ratio analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("env", help="inspect host measurement hygiene")
    p.add_argument("--strict-env", action="store_true")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_env)

    p = sub.add_parser("latency", help="pointer-chase latency for one buffer size")
    _add_common(p)
    p.add_argument("--buffer-bytes", type=int, required=True)
    p.add_argument("--mode", default="ro", help="ro (read_only) or wb (write_back)")
    p.add_argument("--window-bytes", type=int, default=None,
                   help="closed-cycle window size; omit for one global cycle")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--min-timed-ms", type=int, default=200)
    p.add_argument("--pin-core", type=int, default=0)
    p.set_defaults(handler=cmd_latency)

    p = sub.add_parser("bandwidth", help="multi-worker sequential scan bandwidth")
    _add_common(p)
    p.add_argument("--workers", type=int, required=True)
    p.add_argument("--mode", default="ro")
    p.add_argument("--buffer-bytes", type=int, default=model.GIB,
                   help="private buffer bytes per worker (default 1 GiB)")
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--worker-node", type=int, default=None,
                   help="NUMA node to take worker cores from (default: node 0)")
    p.set_defaults(handler=cmd_bandwidth)

    p = sub.add_parser("sweep", help="run the standard measurement grids")
    p.add_argument("--profile", default="dram")
    p.add_argument("--strict-env", action="store_true")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--out", required=True,
                   help="run directory (one subdirectory per plan)")
    p.add_argument("--plan", default="all",
                   help="latency-capacity, latency-windowed, bandwidth-workers, or all")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--min-timed-ms", type=int, default=200)
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--max-buffer-bytes", type=int, default=None)
    p.add_argument("--per-worker-bytes", type=int, default=None)
    p.add_argument("--worker-node", type=int, default=None)
    p.add_argument("--no-resume", action="store_true",
                   help="re-measure points even if the run directory has them")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("report", help="render stored sweep results")
    p.add_argument("--run", required=True, help="sweep output directory")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--tsv", help="also write plot-ready label/x/y TSV here")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("compare", help="subject-vs-baseline ratio table")
    p.add_argument("--baseline", required=True,
                   help="run directory or ref:dram-local / ref:nvm-local / ref:nvm-remote")
    p.add_argument("--subject", required=True)
    p.add_argument("--baseline-label")
    p.add_argument("--subject-label")
    p.add_argument("--metric", action="append",
                   help="restrict to this metric (repeatable)")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_compare)

    return parser


def _report_error(fmt: str, code: int, exc: BaseException) -> None:
    if fmt == "structured":
        payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        if isinstance(exc, PolicyError):
            payload["violations"] = list(exc.violations)
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt = getattr(args, "format", "text")
    try:
        return args.handler(args)
    except PolicyError as exc:
        _report_error(fmt, EXIT_POLICY, exc)
        return EXIT_POLICY
    except (UsageError, MissingMetricError) as exc:
        _report_error(fmt, EXIT_USAGE, exc)
        return EXIT_USAGE
    except ValueError as exc:
        _report_error(fmt, EXIT_USAGE, exc)
        return EXIT_USAGE
    except MembenchError as exc:
        _report_error(fmt, EXIT_MEASUREMENT, exc)
        return EXIT_MEASUREMENT


if __name__ == "__main__":
    sys.exit(main())
