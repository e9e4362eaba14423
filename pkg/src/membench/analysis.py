"""Turning raw sweep records into comparable numbers.

Latency sweeps plateau once the buffer outgrows every cache level; the
plateau value is the memory latency. Bandwidth sweeps peak at some worker
count; the peak is the device's sustainable rate. Comparisons between
devices are expressed as subject/baseline percentages rounded half-up to
one decimal, computed from the full-precision stored values — rounding
happens exactly once, at the edge.

The module also bundles reference numbers for a dual-socket server with
DDR4 DRAM and large-capacity persistent-memory DIMMs (local and remote
paths). They serve as the default comparison baseline and as fixtures
pinning the ratio pipeline.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from .errors import EmptySeriesError, MissingMetricError, ShortSeriesError
from .model import (
    GIB,
    AccessMode,
    ChaseResult,
    RatioRow,
    RatioTable,
    StreamResult,
    round_half_up,
)
from .sweep import KIB, MIB, SweepKind, SweepReport


@dataclass(frozen=True)
class MetricSet:
    """Named bundle of scalar metrics, the unit of comparison."""

    label: str
    values: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "values", dict(self.values))


# Reference numbers: idle pointer-chase latency (ns) and peak sequential
# scan bandwidth (decimal GB/s) for DRAM and persistent memory on the same
# dual-socket machine, via the local and the remote socket.
REFERENCE_DRAM_LOCAL = MetricSet(
    "dram-local",
    {
        "read_latency_ns": 93.5,
        "write_latency_ns": 96.1,
        "read_bandwidth_gbs": 101.3,
        "write_bandwidth_gbs": 37.4,
    },
)
REFERENCE_NVM_LOCAL = MetricSet(
    "nvm-local",
    {
        "read_latency_ns": 374.1,
        "write_latency_ns": 391.2,
        "read_bandwidth_gbs": 37.6,
        "write_bandwidth_gbs": 2.9,
    },
)
REFERENCE_NVM_REMOTE = MetricSet(
    "nvm-remote",
    {
        "read_latency_ns": 394.5,
        "write_latency_ns": 458.4,
        "read_bandwidth_gbs": 6.4,
        "write_bandwidth_gbs": 0.46,
    },
)

_DEFAULT_METRICS = (
    "read_latency_ns",
    "write_latency_ns",
    "read_bandwidth_gbs",
    "write_bandwidth_gbs",
)


def ratio_table(
    baseline: MetricSet,
    subject: MetricSet,
    metrics: Optional[Sequence[str]] = None,
) -> RatioTable:
    """Subject-over-baseline percentages, one row per metric.

    With metrics=None, every metric present in both sets is compared, in
    the baseline's order. Explicitly requested metrics must exist in both.
    """
    if metrics is None:
        chosen = [m for m in baseline.values if m in subject.values]
        if not chosen:
            raise MissingMetricError(
                f"'{baseline.label}' and '{subject.label}' share no metrics"
            )
    else:
        chosen = list(metrics)
        for m in chosen:
            for side in (baseline, subject):
                if m not in side.values:
                    raise MissingMetricError(f"metric '{m}' missing from '{side.label}'")
    rows = []
    for m in chosen:
        b = baseline.values[m]
        s = subject.values[m]
        if b == 0:
            raise ValueError(f"baseline metric '{m}' is zero; ratio undefined")
        rows.append(
            RatioRow(
                metric=m,
                baseline_value=b,
                subject_value=s,
                ratio_percent=round_half_up(s / b * 100.0, 1),
            )
        )
    return RatioTable(
        baseline_label=baseline.label,
        subject_label=subject.label,
        rows=tuple(rows),
    )


def reference_tables() -> tuple[RatioTable, RatioTable]:
    """The two bundled comparisons: nvm vs dram, and remote vs local nvm."""
    return (
        ratio_table(REFERENCE_DRAM_LOCAL, REFERENCE_NVM_LOCAL, _DEFAULT_METRICS),
        ratio_table(REFERENCE_NVM_LOCAL, REFERENCE_NVM_REMOTE, _DEFAULT_METRICS),
    )


# --- series shape analysis ----------------------------------------------------


@dataclass(frozen=True)
class Plateau:
    value: float  # median of the tail
    spread: float  # (max - min) / value over the tail
    converged: bool  # spread within tolerance


def plateau(values: Sequence[float], tail: int = 3, tolerance: float = 0.05) -> Plateau:
    """Settled value of an ascending-x series, from its last `tail` points."""
    if tail < 2:
        raise ValueError("tail must be at least 2")
    if len(values) < tail:
        raise ShortSeriesError(f"need at least {tail} points, got {len(values)}")
    window = list(values[-tail:])
    mid = statistics.median(window)
    if mid == 0:
        spread = 0.0 if max(window) == min(window) else math.inf
    else:
        spread = (max(window) - min(window)) / mid
    return Plateau(value=mid, spread=spread, converged=spread <= tolerance)


def peak(series: Sequence[tuple[int, float]]) -> tuple[int, float]:
    """(x, value) of the maximum; ties go to the smaller x."""
    if not series:
        raise EmptySeriesError("cannot take the peak of an empty series")
    best_x, best_v = series[0]
    for x, v in series[1:]:
        if v > best_v or (v == best_v and x < best_x):
            best_x, best_v = x, v
    return best_x, best_v


@dataclass(frozen=True)
class Degradation:
    x: int
    value: float
    drop_percent: float  # how far below the running maximum, half-up 1dp


def degradation_check(
    series: Sequence[tuple[int, float]], threshold: float = 0.25
) -> tuple[Degradation, ...]:
    """Points that fall at least `threshold` below the best value so far."""
    flagged = []
    running_max = -math.inf
    for x, v in series:
        if running_max > 0 and v < (1.0 - threshold) * running_max:
            flagged.append(
                Degradation(
                    x=x,
                    value=v,
                    drop_percent=round_half_up((1.0 - v / running_max) * 100.0, 1),
                )
            )
        running_max = max(running_max, v)
    return tuple(flagged)


# --- sweep summarization --------------------------------------------------------


def point_value(result: Union[ChaseResult, StreamResult]) -> float:
    if isinstance(result, ChaseResult):
        return result.ns_per_access
    return result.bandwidth_gbs


def series_points(report: SweepReport, mode: AccessMode) -> list[tuple[int, float]]:
    return [(e.point, point_value(e.result)) for e in report.series_for(mode).entries]


def metric_key(report: SweepReport, mode: AccessMode) -> str:
    rw = "read" if mode is AccessMode.READ_ONLY else "write"
    if report.plan.kind is SweepKind.LATENCY_CAPACITY:
        suffix = "_windowed" if report.plan.window_bytes else ""
        return f"{rw}_latency{suffix}_ns"
    return f"{rw}_bandwidth_gbs"


def summarize_report(report: SweepReport) -> dict[str, float]:
    """Collapse each series to one number.

    Latency series settle to their plateau (last value when the series is
    too short to judge); bandwidth series report their peak over worker
    counts.
    """
    out: dict[str, float] = {}
    for series in report.series:
        pts = series_points(report, series.mode)
        key = metric_key(report, series.mode)
        if report.plan.kind is SweepKind.LATENCY_CAPACITY:
            vals = [v for _, v in pts]
            out[key] = plateau(vals).value if len(vals) >= 3 else vals[-1]
        else:
            out[key] = peak(pts)[1]
    return out


def metric_set(label: str, reports: Sequence[SweepReport]) -> MetricSet:
    """Merge sweep summaries into one comparable set."""
    values: dict[str, float] = {}
    for report in reports:
        for key, value in summarize_report(report).items():
            if key in values:
                raise ValueError(f"metric '{key}' produced by more than one sweep")
            values[key] = value
    return MetricSet(label=label, values=values)


# --- rendering ----------------------------------------------------------------


def _human_bytes(n: int) -> str:
    for unit, width in ((GIB, "GiB"), (MIB, "MiB"), (KIB, "KiB")):
        if n % unit == 0 and n >= unit:
            return f"{n // unit}{width}"
    return f"{n}B"


def _sig(v: float) -> str:
    return f"{v:.4g}"


def _render_columns(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    table = [list(header)] + [list(r) for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = []
    for idx, row in enumerate(table):
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def render_ratio_table(table: RatioTable) -> str:
    header = ("metric", table.baseline_label, table.subject_label, "ratio")
    rows = [
        (r.metric, _sig(r.baseline_value), _sig(r.subject_value), f"{r.ratio_percent:.1f}%")
        for r in table.rows
    ]
    title = f"{table.subject_label} relative to {table.baseline_label}"
    return title + "\n" + _render_columns(header, rows)


def render_report(report: SweepReport) -> str:
    """Human-readable summary of one sweep."""
    plan = report.plan
    lines = [
        f"plan: {plan.name} ({plan.kind.value})  hash={plan.plan_hash}",
        f"device: {report.device.name} (node {report.device.numa_node})",
    ]
    if plan.kind is SweepKind.LATENCY_CAPACITY:
        win = _human_bytes(plan.window_bytes) if plan.window_bytes else "global"
        lines.append(f"layout: window={win} seed={plan.seed} runs={plan.runs}")
    else:
        lines.append(
            f"scan: {_human_bytes(plan.per_worker_bytes)}/worker passes={plan.passes}"
        )
    for series in report.series:
        pts = series_points(report, series.mode)
        lines.append("")
        lines.append(f"mode: {series.mode.value}")
        if plan.kind is SweepKind.LATENCY_CAPACITY:
            header = ("buffer", "ns/access", "iqr_ns")
            rows = [
                (
                    _human_bytes(e.point),
                    f"{round_half_up(e.result.ns_per_access, 1):.1f}",
                    f"{round_half_up(e.result.dispersion_ns, 2):.2f}",
                )
                for e in series.entries
            ]
            lines.append(_render_columns(header, rows))
            vals = [v for _, v in pts]
            if len(vals) >= 3:
                p = plateau(vals)
                state = "settled" if p.converged else "NOT settled"
                lines.append(
                    f"plateau: {round_half_up(p.value, 1):.1f} ns "
                    f"({state}, tail spread {round_half_up(p.spread * 100, 1):.1f}%)"
                )
        else:
            header = ("workers", "GB/s", "wall_s", "skew%")
            rows = [
                (
                    str(e.point),
                    f"{round_half_up(e.result.bandwidth_gbs, 2):.2f}",
                    f"{e.result.wall_time_ns / 1e9:.3f}",
                    f"{round_half_up(e.result.skew_fraction * 100, 1):.1f}",
                )
                for e in series.entries
            ]
            lines.append(_render_columns(header, rows))
            px, pv = peak(pts)
            lines.append(f"peak: {round_half_up(pv, 2):.2f} GB/s at {px} worker(s)")
        for d in degradation_check(pts):
            lines.append(
                f"degradation: {d.drop_percent:.1f}% below running best at x={d.x}"
            )
    return "\n".join(lines)


def report_tsv(report: SweepReport) -> str:
    """Plot-ready long-format table: label, x, y (full precision)."""
    lines = ["label\tx\ty"]
    for series in report.series:
        label = f"{report.plan.name}/{series.mode.short}"
        for x, y in series_points(report, series.mode):
            lines.append(f"{label}\t{x}\t{y!r}")
    return "\n".join(lines) + "\n"
