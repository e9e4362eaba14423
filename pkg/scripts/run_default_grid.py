#!/usr/bin/env python3
"""Run the full default measurement grid and compare it to a bundled reference.

Runs the three standard sweeps (latency vs buffer size, windowed latency,
bandwidth vs worker count) on one device profile, persists everything under
--out (resumable), prints the rendered tables, and finishes with a ratio
table against one of the bundled reference hosts.

Example:
    python3 scripts/run_default_grid.py --out runs/local --max-buffer-bytes $((1<<28))
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from membench import analysis, envguard
from membench.cli import _REFERENCE_SETS, resolve_profile
from membench.sweep import SweepKind, default_plans, run_sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, required=True, help="run directory")
    ap.add_argument("--profile", default="dram")
    ap.add_argument("--baseline", default="ref:dram-local",
                    choices=sorted(_REFERENCE_SETS))
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--max-buffer-bytes", type=int, default=None,
                    help="cap the largest chase buffer (default: 8x LLC)")
    ap.add_argument("--strict-env", action="store_true",
                    help="refuse to run unless the host passes hygiene checks")
    args = ap.parse_args()

    device = resolve_profile(args.profile)
    env = envguard.inspect_environment()
    for warning in envguard.enforce(env, strict=args.strict_env):
        print(f"warning: {warning}", file=sys.stderr)

    plans = [
        replace(plan, seed=args.seed, runs=args.runs)
        for plan in default_plans(
            llc_bytes=env.cache_llc_bytes,
            node=device.numa_node,
            max_buffer_bytes=args.max_buffer_bytes,
        )
    ]

    reports = []
    for plan in plans:
        unit = "ns" if plan.kind is SweepKind.LATENCY_CAPACITY else "GB/s"

        def progress(mode, point, result, unit=unit, name=plan.name):
            value = analysis.point_value(result)
            print(f"[{name}] {mode.short} point={point}: {value:.2f} {unit}",
                  file=sys.stderr)

        started = time.monotonic()
        report = run_sweep(plan, device, out_dir=args.out / plan.name,
                           env=env, progress=progress)
        (args.out / plan.name / "report.txt").write_text(
            analysis.render_report(report) + "\n"
        )
        print(f"\n{analysis.render_report(report)}")
        print(f"({plan.name}: {time.monotonic() - started:.1f} s)", file=sys.stderr)
        reports.append(report)

    mine = analysis.metric_set(args.profile, reports)
    baseline = _REFERENCE_SETS[args.baseline]
    print()
    print(analysis.render_ratio_table(analysis.ratio_table(baseline, mine)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
