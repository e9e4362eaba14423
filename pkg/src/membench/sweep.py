"""Sweep orchestration: grids of measurements with persistence and resume.

A SweepPlan names an ascending grid of points — buffer sizes for latency,
worker counts for bandwidth — crossed with one or more access modes. Points
run in ascending order per mode, each on a freshly mapped region (engines
map and release internally, so nothing leaks between points). Every result
is written to its own document the moment it exists and recorded in an
append-only index, so an interrupted sweep resumes from the first missing
point of the same plan (matched by content hash, never by name).
"""

from __future__ import annotations

import enum
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

from .backend import available_memory_bytes, node_cpus
from .chase import run_chase
from .errors import SizeError, SweepPointError
from .model import (
    GIB,
    AccessMode,
    ChaseResult,
    ChaseSpec,
    DeviceProfile,
    StreamResult,
    StreamSpec,
    append_index,
    decode_record,
    encode_record,
    from_document,
    read_document,
    read_index,
    register_record,
    to_document,
    write_document,
)
from .stream import default_pin_cores, run_stream

KIB = 1024
MIB = 1024**2
DEFAULT_WINDOW_BYTES = 256 * KIB
_MEMORY_MARGIN = 512 * MIB


class SweepKind(enum.Enum):
    LATENCY_CAPACITY = "latency_capacity"  # points are buffer bytes
    BANDWIDTH_WORKERS = "bandwidth_workers"  # points are worker counts


@dataclass(frozen=True)
class SweepPlan:
    """A reproducible measurement grid."""

    name: str
    kind: SweepKind
    modes: tuple[AccessMode, ...]
    points: tuple[int, ...]
    seed: int = 1
    runs: int = 5
    window_bytes: Optional[int] = None  # latency sweeps only; None = global
    min_timed_duration_ns: int = 200_000_000
    pin_core: int = 0
    per_worker_bytes: int = GIB  # bandwidth sweeps only
    passes: int = 1
    worker_node: Optional[int] = None  # bandwidth: node to pin workers on

    def __post_init__(self):
        if not self.name:
            raise ValueError("plan needs a name")
        if not self.modes:
            raise ValueError("plan needs at least one access mode")
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("duplicate access mode in plan")
        if not self.points:
            raise ValueError("plan needs at least one point")
        if any(p <= 0 for p in self.points):
            raise ValueError("points must be positive")
        if list(self.points) != sorted(set(self.points)):
            raise ValueError("points must be strictly ascending")

    @property
    def plan_hash(self) -> str:
        """Content hash; resume matches on this, so renames are harmless."""
        doc = _encode_plan(self)
        doc.pop("name")
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def point_spec(self, mode: AccessMode, point: int) -> Union[ChaseSpec, StreamSpec]:
        if self.kind is SweepKind.LATENCY_CAPACITY:
            # a window at least as large as the buffer degenerates to the
            # global layout, so small points in a windowed plan stay valid
            window = min(self.window_bytes, point) if self.window_bytes else None
            return ChaseSpec(
                buffer_bytes=point,
                mode=mode,
                window_bytes=window,
                seed=self.seed,
                min_timed_duration_ns=self.min_timed_duration_ns,
                runs=self.runs,
                pin_core=self.pin_core,
            )
        return StreamSpec(
            worker_count=point,
            mode=mode,
            pin_cores=default_pin_cores(point, self.worker_node),
            per_worker_bytes=self.per_worker_bytes,
            passes=self.passes,
            seed=self.seed,
        )


@dataclass(frozen=True)
class SweepEntry:
    point: int
    result: Union[ChaseResult, StreamResult]
    started_at_ns: int
    finished_at_ns: int


@dataclass(frozen=True)
class SweepSeries:
    mode: AccessMode
    entries: tuple[SweepEntry, ...]


@dataclass(frozen=True)
class SweepReport:
    plan: SweepPlan
    device: DeviceProfile
    series: tuple[SweepSeries, ...]

    def series_for(self, mode: AccessMode) -> SweepSeries:
        for s in self.series:
            if s.mode is mode:
                return s
        raise KeyError(f"no series for mode {mode.value}")


def _point_filename(plan: SweepPlan, mode: AccessMode, point: int) -> str:
    prefix = "chase" if plan.kind is SweepKind.LATENCY_CAPACITY else "stream"
    return f"{prefix}-{mode.short}-{point}.json"


def _load_resumed(
    out_dir: Path, plan: SweepPlan, mode: AccessMode, point: int
) -> Optional[Union[ChaseResult, StreamResult]]:
    index = read_index(out_dir / "index.jsonl")
    for entry in reversed(index):
        if (
            entry.get("plan_hash") == plan.plan_hash
            and entry.get("mode") == mode.value
            and entry.get("point") == point
            and entry.get("status") == "ok"
        ):
            path = out_dir / entry["file"]
            if path.exists():
                return from_document(read_document(path))
    return None


def run_sweep(
    plan: SweepPlan,
    device: DeviceProfile,
    out_dir: Optional[Path] = None,
    env=None,
    resume: bool = True,
    progress: Optional[Callable[[AccessMode, int, object], None]] = None,
) -> SweepReport:
    """Execute a plan point by point.

    With an out_dir, each finished point is persisted immediately
    (results/<name>.json plus an index line); a rerun of the same plan
    over the same directory reuses completed points. A failing point
    aborts the sweep with SweepPointError carrying the cause; completed
    documents stay on disk.
    """
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "results").mkdir(parents=True, exist_ok=True)
        write_document(out_dir / "plan.json", plan)

    all_series: list[SweepSeries] = []
    for mode in plan.modes:
        entries: list[SweepEntry] = []
        for point in plan.points:
            resumed = None
            if out_dir is not None and resume:
                resumed = _load_resumed(out_dir, plan, mode, point)
            started = time.time_ns()
            if resumed is not None:
                result = resumed
            else:
                spec = plan.point_spec(mode, point)
                try:
                    if plan.kind is SweepKind.LATENCY_CAPACITY:
                        result = run_chase(spec, device)
                    else:
                        result = run_stream(spec, device)
                except Exception as exc:
                    if out_dir is not None:
                        append_index(
                            out_dir / "index.jsonl",
                            plan_hash=plan.plan_hash,
                            plan_name=plan.name,
                            kind=plan.kind.value,
                            mode=mode.value,
                            point=point,
                            status="failed",
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    raise SweepPointError(point, mode.value, exc) from exc
                if out_dir is not None:
                    fname = _point_filename(plan, mode, point)
                    write_document(out_dir / "results" / fname, result, env=env)
                    append_index(
                        out_dir / "index.jsonl",
                        plan_hash=plan.plan_hash,
                        plan_name=plan.name,
                        kind=plan.kind.value,
                        mode=mode.value,
                        point=point,
                        status="ok",
                        file=f"results/{fname}",
                    )
            finished = time.time_ns()
            entries.append(
                SweepEntry(
                    point=point,
                    result=result,
                    started_at_ns=started,
                    finished_at_ns=finished,
                )
            )
            if progress is not None:
                progress(mode, point, result)
        all_series.append(SweepSeries(mode=mode, entries=tuple(entries)))

    report = SweepReport(plan=plan, device=device, series=tuple(all_series))
    if out_dir is not None:
        write_document(out_dir / "report.json", report, env=env)
    return report


def _pow2_range(lo: int, hi: int) -> tuple[int, ...]:
    out = []
    v = lo
    while v <= hi:
        out.append(v)
        v *= 2
    return tuple(out)


def default_plans(
    llc_bytes: Optional[int],
    node: int = 0,
    max_buffer_bytes: Optional[int] = None,
) -> tuple[SweepPlan, ...]:
    """The standard grids: capacity sweep, windowed sweep, worker sweep.

    The capacity grid runs from well inside L1 (32 KiB) past the last-level
    cache (up to 8x LLC when memory allows, capped at 4 GiB), doubling each
    step. The windowed variant repeats the large buffers with 256 KiB
    windows. The worker grid covers 1..N cores of the chosen node.
    """
    if max_buffer_bytes is None:
        max_buffer_bytes = min(4 * GIB, max(32 * KIB, available_memory_bytes() - _MEMORY_MARGIN))
    if llc_bytes:
        max_buffer_bytes = min(max_buffer_bytes, max(32 * KIB, 8 * llc_bytes))
    buffers = _pow2_range(32 * KIB, max_buffer_bytes)
    if not buffers:
        raise SizeError("not enough memory for even the smallest capacity point")
    big = tuple(b for b in buffers if b >= 4 * DEFAULT_WINDOW_BYTES) or buffers[-1:]
    cores = len(node_cpus(node))
    worker_points = tuple(range(1, max(cores, 1) + 1))
    return (
        SweepPlan(
            name="latency-capacity",
            kind=SweepKind.LATENCY_CAPACITY,
            modes=(AccessMode.READ_ONLY, AccessMode.WRITE_BACK),
            points=buffers,
        ),
        SweepPlan(
            name="latency-windowed",
            kind=SweepKind.LATENCY_CAPACITY,
            modes=(AccessMode.READ_ONLY,),
            points=big,
            window_bytes=DEFAULT_WINDOW_BYTES,
        ),
        SweepPlan(
            name="bandwidth-workers",
            kind=SweepKind.BANDWIDTH_WORKERS,
            modes=(AccessMode.READ_ONLY, AccessMode.WRITE_BACK),
            points=worker_points,
            worker_node=node,
        ),
    )


# --- serialization -----------------------------------------------------------


def _encode_plan(p: SweepPlan) -> dict:
    return {
        "name": p.name,
        "kind": p.kind.value,
        "modes": [m.value for m in p.modes],
        "points": list(p.points),
        "seed": p.seed,
        "runs": p.runs,
        "window_bytes": p.window_bytes,
        "min_timed_duration_ns": p.min_timed_duration_ns,
        "pin_core": p.pin_core,
        "per_worker_bytes": p.per_worker_bytes,
        "passes": p.passes,
        "worker_node": p.worker_node,
    }


def _decode_plan(d: dict) -> SweepPlan:
    return SweepPlan(
        name=d["name"],
        kind=SweepKind(d["kind"]),
        modes=tuple(AccessMode(m) for m in d["modes"]),
        points=tuple(d["points"]),
        seed=d["seed"],
        runs=d["runs"],
        window_bytes=d["window_bytes"],
        min_timed_duration_ns=d["min_timed_duration_ns"],
        pin_core=d["pin_core"],
        per_worker_bytes=d["per_worker_bytes"],
        passes=d["passes"],
        worker_node=d["worker_node"],
    )


def _encode_report(r: SweepReport) -> dict:
    return {
        "plan": _encode_plan(r.plan),
        "device": encode_record(r.device),
        "series": [
            {
                "mode": s.mode.value,
                "entries": [
                    {
                        "point": e.point,
                        "started_at_ns": e.started_at_ns,
                        "finished_at_ns": e.finished_at_ns,
                        "result": to_document(e.result),
                    }
                    for e in s.entries
                ],
            }
            for s in r.series
        ],
    }


def _decode_report(d: dict) -> SweepReport:
    return SweepReport(
        plan=_decode_plan(d["plan"]),
        device=decode_record("device_profile", d["device"]),
        series=tuple(
            SweepSeries(
                mode=AccessMode(s["mode"]),
                entries=tuple(
                    SweepEntry(
                        point=e["point"],
                        result=from_document(e["result"]),
                        started_at_ns=e["started_at_ns"],
                        finished_at_ns=e["finished_at_ns"],
                    )
                    for e in s["entries"]
                ),
            )
            for s in d["series"]
        ),
    )


register_record(SweepPlan, "sweep_plan", _encode_plan, _decode_plan)
register_record(SweepReport, "sweep_report", _encode_report, _decode_report)
