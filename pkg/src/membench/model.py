"""Shared data model: measurement records, units, and serialization.

Unit discipline: every duration is stored in integer nanoseconds and every
size in integer bytes. Derived presentation units (GB/s, percentages) are
computed by the analysis layer and never stored alongside the raw fields.
Reported GB/s use decimal gigabytes (10^9 bytes); reported ratios round
half-up to one decimal place. Stored floats (ns_per_access, bandwidth) keep
full IEEE-754 precision so accounting identities can be checked exactly.

The on-disk format is a self-describing JSON document per record (see
docs/schema.md) plus an append-only JSON-lines results index.
"""

from __future__ import annotations

import enum
import json
import statistics
import time
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Callable, Optional, Union

SCHEMA_VERSION = 1
CACHELINE_BYTES = 64
DEFAULT_PAGE_BYTES = 4096
GIB = 1024**3
GB = 10**9  # decimal gigabyte, used for displayed bandwidths

_SEED_LIMIT = 2**64


def round_half_up(value: float, decimals: int = 1) -> float:
    """Round with ties away from zero, e.g. 105.45 -> 105.5 at one decimal."""
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def iqr(values: list[float]) -> float:
    """Interquartile range; 0.0 for fewer than two values."""
    if len(values) < 2:
        return 0.0
    q = statistics.quantiles(values, n=4, method="inclusive")
    return q[2] - q[0]


class AccessMode(enum.Enum):
    """Read-only traversal vs. traversal that dirties each visited line."""

    READ_ONLY = "read_only"
    WRITE_BACK = "write_back"

    @property
    def short(self) -> str:
        return "ro" if self is AccessMode.READ_ONLY else "wb"

    @classmethod
    def parse(cls, text: str) -> "AccessMode":
        key = text.strip().lower()
        aliases = {
            "ro": cls.READ_ONLY,
            "read_only": cls.READ_ONLY,
            "read-only": cls.READ_ONLY,
            "wb": cls.WRITE_BACK,
            "write_back": cls.WRITE_BACK,
            "write-back": cls.WRITE_BACK,
        }
        if key not in aliases:
            raise ValueError(f"unknown access mode {text!r} (expected ro or wb)")
        return aliases[key]


class DeviceKind(enum.Enum):
    DRAM = "dram"
    NVM = "nvm"
    FILE = "file"


# --- backing store variants -------------------------------------------------


@dataclass(frozen=True)
class AnonymousBacking:
    """Ordinary anonymous memory, NUMA-bindable."""


@dataclass(frozen=True)
class PhysicalRangeBacking:
    """A raw physical address range accessed through a device file."""

    base_address: int
    length: int
    device_path: str = "/dev/mem"

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("physical_range length must be > 0")
        if self.base_address % DEFAULT_PAGE_BYTES != 0:
            raise ValueError("physical_range base_address must be page aligned")


@dataclass(frozen=True)
class FileBacking:
    """A file (or dax character device) mapped shared."""

    path: str


Backing = Union[AnonymousBacking, PhysicalRangeBacking, FileBacking]


@dataclass(frozen=True)
class DeviceProfile:
    """Identity of a target memory region: what it is and where it lives."""

    name: str
    kind: DeviceKind
    numa_node: int
    backing: Backing
    interleaved: bool = True
    description: str = ""

    def __post_init__(self):
        if self.numa_node < 0:
            raise ValueError("numa_node must be >= 0")


# --- latency benchmark records -----------------------------------------------


@dataclass(frozen=True)
class ChaseSpec:
    """Parameters of one pointer-chase latency measurement."""

    buffer_bytes: int
    mode: AccessMode
    window_bytes: Optional[int] = None  # None = global random
    seed: int = 1
    min_timed_duration_ns: int = 200_000_000
    warmup_passes: int = 1
    runs: int = 5
    pin_core: int = 0

    def __post_init__(self):
        if self.buffer_bytes < CACHELINE_BYTES or self.buffer_bytes % CACHELINE_BYTES:
            raise ValueError("buffer_bytes must be a positive multiple of 64")
        if self.window_bytes is not None:
            if self.window_bytes < CACHELINE_BYTES or self.window_bytes % CACHELINE_BYTES:
                raise ValueError("window_bytes must be a positive multiple of 64")
            if self.window_bytes > self.buffer_bytes:
                raise ValueError("window_bytes must not exceed buffer_bytes")
        if not 0 <= self.seed < _SEED_LIMIT:
            raise ValueError("seed must fit in 64 bits")
        if self.min_timed_duration_ns <= 0:
            raise ValueError("min_timed_duration_ns must be > 0")
        if self.warmup_passes < 0:
            raise ValueError("warmup_passes must be >= 0")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.pin_core < 0:
            raise ValueError("pin_core must be >= 0")

    @property
    def node_count(self) -> int:
        return self.buffer_bytes // CACHELINE_BYTES


@dataclass(frozen=True)
class ChaseResult:
    """Outcome of one pointer-chase measurement."""

    spec: ChaseSpec
    hops_timed: int
    elapsed_ns: tuple[int, ...]  # one entry per run, same hop count each
    ns_per_access: float
    dispersion_ns: float  # IQR of per-run ns/access
    checksum: int  # rolling mix of every offset loaded in one pass
    device: DeviceProfile

    def __post_init__(self):
        if self.hops_timed % self.spec.node_count:
            raise ValueError("hops_timed must be a whole number of passes")
        if len(self.elapsed_ns) != self.spec.runs:
            raise ValueError("one elapsed entry per run required")
        if self.ns_per_access != self.recompute_ns_per_access():
            raise ValueError("ns_per_access does not match median(elapsed/hops)")

    @property
    def passes_timed(self) -> int:
        return self.hops_timed // self.spec.node_count

    def recompute_ns_per_access(self) -> float:
        return statistics.median(e / self.hops_timed for e in self.elapsed_ns)

    @classmethod
    def from_runs(
        cls,
        spec: ChaseSpec,
        hops_timed: int,
        elapsed_ns: tuple[int, ...],
        checksum: int,
        device: DeviceProfile,
    ) -> "ChaseResult":
        per_run = [e / hops_timed for e in elapsed_ns]
        return cls(
            spec=spec,
            hops_timed=hops_timed,
            elapsed_ns=tuple(elapsed_ns),
            ns_per_access=statistics.median(per_run),
            dispersion_ns=iqr(per_run),
            checksum=checksum,
            device=device,
        )


# --- bandwidth benchmark records ----------------------------------------------


@dataclass(frozen=True)
class StreamSpec:
    """Parameters of one multi-worker sequential-scan measurement."""

    worker_count: int
    mode: AccessMode
    pin_cores: tuple[int, ...]
    per_worker_bytes: int = GIB
    passes: int = 1
    seed: int = 1

    def __post_init__(self):
        if self.worker_count < 0:
            raise ValueError("worker_count must be >= 0")
        if len(self.pin_cores) != self.worker_count:
            raise ValueError("pin_cores must list one core per worker")
        if len(set(self.pin_cores)) != len(self.pin_cores):
            raise ValueError("pin_cores must not repeat a core")
        if self.per_worker_bytes < CACHELINE_BYTES or self.per_worker_bytes % CACHELINE_BYTES:
            raise ValueError("per_worker_bytes must be a positive multiple of 64")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if not 0 <= self.seed < _SEED_LIMIT:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class StreamResult:
    """Outcome of one bandwidth measurement (barrier release to last finish)."""

    spec: StreamSpec
    total_bytes: int
    wall_time_ns: int
    bandwidth_bps: float
    per_worker_time_ns: tuple[int, ...]
    device: DeviceProfile

    def __post_init__(self):
        expected = self.spec.worker_count * self.spec.per_worker_bytes * self.spec.passes
        if self.total_bytes != expected:
            raise ValueError("total_bytes must equal workers * per_worker_bytes * passes")
        if len(self.per_worker_time_ns) != self.spec.worker_count:
            raise ValueError("one completion time per worker required")
        if self.bandwidth_bps != self.recompute_bandwidth_bps():
            raise ValueError("bandwidth does not match total_bytes / wall_time")

    def recompute_bandwidth_bps(self) -> float:
        return self.total_bytes * 1e9 / self.wall_time_ns

    @property
    def bandwidth_gbs(self) -> float:
        """Decimal GB/s, the presentation unit."""
        return self.bandwidth_bps / GB

    @property
    def skew_fraction(self) -> float:
        """(slowest - fastest worker) / wall time; 0 for a single worker."""
        if self.spec.worker_count < 2:
            return 0.0
        spread = max(self.per_worker_time_ns) - min(self.per_worker_time_ns)
        return spread / self.wall_time_ns

    @property
    def unbalanced(self) -> bool:
        """Quality gate: completion skew above 20% of wall time."""
        return self.skew_fraction > 0.20

    @classmethod
    def from_workers(
        cls,
        spec: StreamSpec,
        wall_time_ns: int,
        per_worker_time_ns: tuple[int, ...],
        device: DeviceProfile,
    ) -> "StreamResult":
        total = spec.worker_count * spec.per_worker_bytes * spec.passes
        return cls(
            spec=spec,
            total_bytes=total,
            wall_time_ns=wall_time_ns,
            bandwidth_bps=total * 1e9 / wall_time_ns,
            per_worker_time_ns=tuple(per_worker_time_ns),
            device=device,
        )


# --- comparison table ----------------------------------------------------------


@dataclass(frozen=True)
class RatioRow:
    metric: str
    baseline_value: float
    subject_value: float
    ratio_percent: float

    def __post_init__(self):
        expected = round_half_up(self.subject_value / self.baseline_value * 100.0, 1)
        if self.ratio_percent != expected:
            raise ValueError(
                f"ratio_percent for {self.metric} must be {expected}, got {self.ratio_percent}"
            )


@dataclass(frozen=True)
class RatioTable:
    """Subject-vs-baseline comparison, one row per metric."""

    baseline_label: str
    subject_label: str
    rows: tuple[RatioRow, ...]


# --- serialization ---------------------------------------------------------------
#
# Each record type registers a (kind tag, encode, decode) triple. Documents are
# {"schema_version", "kind", "record", ...optional "env"/"written_at_ns"}.
# Modules defining extra record types (env report, sweep plan/report) register
# them on import; importing the top-level package loads all of them.

_ENCODERS: dict[type, tuple[str, Callable[[Any], dict]]] = {}
_DECODERS: dict[str, Callable[[dict], Any]] = {}


def register_record(cls: type, kind: str, encode: Callable[[Any], dict], decode: Callable[[dict], Any]) -> None:
    _ENCODERS[cls] = (kind, encode)
    _DECODERS[kind] = decode


def record_kind(record: Any) -> str:
    try:
        return _ENCODERS[type(record)][0]
    except KeyError:
        raise TypeError(f"{type(record).__name__} is not a registered record type") from None


def encode_record(record: Any) -> dict:
    """Encode a registered record to its plain-dict payload (no envelope)."""
    return _ENCODERS[type(record)][1](record)


def decode_record(kind: str, payload: dict) -> Any:
    """Decode a plain-dict payload by kind tag."""
    if kind not in _DECODERS:
        raise ValueError(f"unknown record kind {kind!r}")
    return _DECODERS[kind](payload)


def to_document(record: Any, env: Any = None) -> dict:
    """Build the canonical self-describing document for a record."""
    if type(record) not in _ENCODERS:
        raise TypeError(f"{type(record).__name__} is not a registered record type")
    kind, encode = _ENCODERS[type(record)]
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "record": encode(record),
    }
    if env is not None:
        doc["env"] = _ENCODERS[type(env)][1](env)
    return doc


def from_document(doc: dict) -> Any:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {version!r}")
    kind = doc["kind"]
    if kind not in _DECODERS:
        raise ValueError(f"unknown record kind {kind!r}")
    return _DECODERS[kind](doc["record"])


def document_env(doc: dict) -> Any:
    """Decode the embedded environment report, if the document carries one."""
    if "env" not in doc:
        return None
    return _DECODERS["env_report"](doc["env"])


def dumps(record: Any, env: Any = None, indent: int = 2) -> str:
    return json.dumps(to_document(record, env=env), indent=indent, sort_keys=True)


def loads(text: str) -> Any:
    return from_document(json.loads(text))


def write_document(path: Path, record: Any, env: Any = None) -> Path:
    doc = to_document(record, env=env)
    doc["written_at_ns"] = time.time_ns()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_document(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def append_index(index_path: Path, **entry: Any) -> None:
    """Append one line to the append-only results index."""
    entry.setdefault("written_at_ns", time.time_ns())
    index_path.parent.mkdir(parents=True, exist_ok=True)
    with open(index_path, "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def read_index(index_path: Path) -> list[dict]:
    if not Path(index_path).exists():
        return []
    lines = Path(index_path).read_text().splitlines()
    return [json.loads(line) for line in lines if line.strip()]


# --- per-type codecs ---------------------------------------------------------


def _encode_backing(b: Backing) -> dict:
    if isinstance(b, AnonymousBacking):
        return {"type": "anonymous"}
    if isinstance(b, PhysicalRangeBacking):
        return {
            "type": "physical_range",
            "base_address": b.base_address,
            "length": b.length,
            "device_path": b.device_path,
        }
    if isinstance(b, FileBacking):
        return {"type": "file", "path": b.path}
    raise TypeError(f"unknown backing {b!r}")


def _decode_backing(d: dict) -> Backing:
    t = d["type"]
    if t == "anonymous":
        return AnonymousBacking()
    if t == "physical_range":
        return PhysicalRangeBacking(
            base_address=d["base_address"],
            length=d["length"],
            device_path=d.get("device_path", "/dev/mem"),
        )
    if t == "file":
        return FileBacking(path=d["path"])
    raise ValueError(f"unknown backing type {t!r}")


def _encode_device(p: DeviceProfile) -> dict:
    return {
        "name": p.name,
        "kind": p.kind.value,
        "numa_node": p.numa_node,
        "backing": _encode_backing(p.backing),
        "interleaved": p.interleaved,
        "description": p.description,
    }


def _decode_device(d: dict) -> DeviceProfile:
    return DeviceProfile(
        name=d["name"],
        kind=DeviceKind(d["kind"]),
        numa_node=d["numa_node"],
        backing=_decode_backing(d["backing"]),
        interleaved=d["interleaved"],
        description=d.get("description", ""),
    )


def _encode_chase_spec(s: ChaseSpec) -> dict:
    return {
        "buffer_bytes": s.buffer_bytes,
        "mode": s.mode.value,
        "window_bytes": s.window_bytes,
        "seed": s.seed,
        "min_timed_duration_ns": s.min_timed_duration_ns,
        "warmup_passes": s.warmup_passes,
        "runs": s.runs,
        "pin_core": s.pin_core,
    }


def _decode_chase_spec(d: dict) -> ChaseSpec:
    return ChaseSpec(
        buffer_bytes=d["buffer_bytes"],
        mode=AccessMode(d["mode"]),
        window_bytes=d["window_bytes"],
        seed=d["seed"],
        min_timed_duration_ns=d["min_timed_duration_ns"],
        warmup_passes=d["warmup_passes"],
        runs=d["runs"],
        pin_core=d["pin_core"],
    )


def _encode_chase_result(r: ChaseResult) -> dict:
    return {
        "spec": _encode_chase_spec(r.spec),
        "hops_timed": r.hops_timed,
        "elapsed_ns": list(r.elapsed_ns),
        "ns_per_access": r.ns_per_access,
        "dispersion_ns": r.dispersion_ns,
        "checksum": r.checksum,
        "device": _encode_device(r.device),
    }


def _decode_chase_result(d: dict) -> ChaseResult:
    return ChaseResult(
        spec=_decode_chase_spec(d["spec"]),
        hops_timed=d["hops_timed"],
        elapsed_ns=tuple(d["elapsed_ns"]),
        ns_per_access=d["ns_per_access"],
        dispersion_ns=d["dispersion_ns"],
        checksum=d["checksum"],
        device=_decode_device(d["device"]),
    )


def _encode_stream_spec(s: StreamSpec) -> dict:
    return {
        "worker_count": s.worker_count,
        "mode": s.mode.value,
        "pin_cores": list(s.pin_cores),
        "per_worker_bytes": s.per_worker_bytes,
        "passes": s.passes,
        "seed": s.seed,
    }


def _decode_stream_spec(d: dict) -> StreamSpec:
    return StreamSpec(
        worker_count=d["worker_count"],
        mode=AccessMode(d["mode"]),
        pin_cores=tuple(d["pin_cores"]),
        per_worker_bytes=d["per_worker_bytes"],
        passes=d["passes"],
        seed=d["seed"],
    )


def _encode_stream_result(r: StreamResult) -> dict:
    return {
        "spec": _encode_stream_spec(r.spec),
        "total_bytes": r.total_bytes,
        "wall_time_ns": r.wall_time_ns,
        "bandwidth_bps": r.bandwidth_bps,
        "per_worker_time_ns": list(r.per_worker_time_ns),
        "device": _encode_device(r.device),
    }


def _decode_stream_result(d: dict) -> StreamResult:
    return StreamResult(
        spec=_decode_stream_spec(d["spec"]),
        total_bytes=d["total_bytes"],
        wall_time_ns=d["wall_time_ns"],
        bandwidth_bps=d["bandwidth_bps"],
        per_worker_time_ns=tuple(d["per_worker_time_ns"]),
        device=_decode_device(d["device"]),
    )


def _encode_ratio_table(t: RatioTable) -> dict:
    return {
        "baseline_label": t.baseline_label,
        "subject_label": t.subject_label,
        "rows": [
            {
                "metric": r.metric,
                "baseline_value": r.baseline_value,
                "subject_value": r.subject_value,
                "ratio_percent": r.ratio_percent,
            }
            for r in t.rows
        ],
    }


def _decode_ratio_table(d: dict) -> RatioTable:
    return RatioTable(
        baseline_label=d["baseline_label"],
        subject_label=d["subject_label"],
        rows=tuple(
            RatioRow(
                metric=r["metric"],
                baseline_value=r["baseline_value"],
                subject_value=r["subject_value"],
                ratio_percent=r["ratio_percent"],
            )
            for r in d["rows"]
        ),
    )


register_record(DeviceProfile, "device_profile", _encode_device, _decode_device)
register_record(ChaseSpec, "chase_spec", _encode_chase_spec, _decode_chase_spec)
register_record(ChaseResult, "chase_result", _encode_chase_result, _decode_chase_result)
register_record(StreamSpec, "stream_spec", _encode_stream_spec, _decode_stream_spec)
register_record(StreamResult, "stream_result", _encode_stream_result, _decode_stream_result)
register_record(RatioTable, "ratio_table", _encode_ratio_table, _decode_ratio_table)
