"""Host environment inspection and measurement-hygiene policy.

Latency and bandwidth numbers are only comparable when the host is in a
known state: SMT steals core-private resources, transparent huge pages
change TLB behaviour mid-run, address-space randomization moves buffers
between runs, and a non-performance governor rescales the clock under
load. inspect_environment() reads all of this without touching anything;
enforce() either raises (strict) or returns warnings (advisory).

Every probe degrades to an explicit "unknown" rather than guessing, so a
report from a locked-down container is still serializable and honest.
"""

from __future__ import annotations

import os
import re
import resource
import socket
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .backend import node_cpus, numa_nodes, parse_cpu_list
from .errors import PolicyError
from .model import register_record

_SIZE_SUFFIX = {"K": 1024, "M": 1024**2, "G": 1024**3}


@dataclass(frozen=True)
class EnvReport:
    """Snapshot of everything that can skew a measurement."""

    hostname: str
    cpu_model: str
    online_cpus: int
    smt_enabled: Optional[bool]  # None = cannot tell
    thp_mode: str  # always | madvise | never | unknown
    aslr: str  # off | partial | full | unknown
    governor: str
    numa_nodes: tuple[int, ...]
    node_cpu_counts: tuple[int, ...]
    cache_l1d_bytes: Optional[int]
    cache_l2_bytes: Optional[int]
    cache_llc_bytes: Optional[int]
    page_bytes: int
    timer_resolution_s: float
    warnings: tuple[str, ...] = ()


def _read(path: str) -> Optional[str]:
    try:
        return Path(path).read_text().strip()
    except OSError:
        return None


def _parse_cache_size(text: str) -> Optional[int]:
    m = re.fullmatch(r"(\d+)([KMG]?)", text.strip())
    if not m:
        return None
    return int(m.group(1)) * _SIZE_SUFFIX.get(m.group(2), 1)


def _cache_sizes() -> tuple[Optional[int], Optional[int], Optional[int]]:
    """(L1d, L2, last-level) sizes of cpu0 in bytes."""
    base = Path("/sys/devices/system/cpu/cpu0/cache")
    if not base.exists():
        return None, None, None
    l1d = l2 = None
    by_level: dict[int, int] = {}
    for index in sorted(base.glob("index*")):
        level = _read(str(index / "level"))
        ctype = _read(str(index / "type"))
        size = _read(str(index / "size"))
        if level is None or ctype is None or size is None:
            continue
        nbytes = _parse_cache_size(size)
        if nbytes is None:
            continue
        lvl = int(level)
        if lvl == 1 and ctype == "Data":
            l1d = nbytes
        if lvl == 2 and ctype in ("Unified", "Data"):
            l2 = nbytes
        if ctype in ("Unified", "Data"):
            by_level[lvl] = max(by_level.get(lvl, 0), nbytes)
    llc = by_level[max(by_level)] if by_level else None
    return l1d, l2, llc


def _smt_state() -> Optional[bool]:
    active = _read("/sys/devices/system/cpu/smt/active")
    if active is not None:
        return active == "1"
    siblings = _read("/sys/devices/system/cpu/cpu0/topology/thread_siblings_list")
    if siblings is not None:
        return "," in siblings or "-" in siblings
    return None


def _thp_mode() -> str:
    text = _read("/sys/kernel/mm/transparent_hugepage/enabled")
    if text is None:
        return "unknown"
    m = re.search(r"\[(\w+)\]", text)
    return m.group(1) if m else "unknown"


def _aslr_state() -> str:
    text = _read("/proc/sys/kernel/randomize_va_space")
    mapping = {"0": "off", "1": "partial", "2": "full"}
    return mapping.get(text or "", "unknown")


def _cpu_model() -> str:
    try:
        for line in Path("/proc/cpuinfo").read_text().splitlines():
            if line.lower().startswith("model name"):
                return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return "unknown"


def inspect_environment() -> EnvReport:
    """Collect the report; read-only and safe to call anywhere."""
    nodes = numa_nodes()
    l1d, l2, llc = _cache_sizes()
    online = _read("/sys/devices/system/cpu/online")
    if online:
        cpu_count = len(parse_cpu_list(online))
    else:
        cpu_count = len(os.sched_getaffinity(0))

    warnings: list[str] = []
    governor = _read("/sys/devices/system/cpu/cpu0/cpufreq/scaling_governor") or "unknown"
    if governor not in ("performance", "unknown"):
        warnings.append(f"cpu frequency governor is '{governor}', not 'performance'")
    if llc is None:
        warnings.append("last-level cache size unknown; capacity sweeps need --buffer-bytes")

    return EnvReport(
        hostname=socket.gethostname(),
        cpu_model=_cpu_model(),
        online_cpus=cpu_count,
        smt_enabled=_smt_state(),
        thp_mode=_thp_mode(),
        aslr=_aslr_state(),
        governor=governor,
        numa_nodes=nodes,
        node_cpu_counts=tuple(len(node_cpus(n)) for n in nodes),
        cache_l1d_bytes=l1d,
        cache_l2_bytes=l2,
        cache_llc_bytes=llc,
        page_bytes=resource.getpagesize(),
        timer_resolution_s=time.get_clock_info("perf_counter").resolution,
        warnings=tuple(warnings),
    )


def violations(report: EnvReport) -> list[str]:
    """Conditions that make absolute numbers untrustworthy."""
    out: list[str] = []
    if report.smt_enabled is True:
        out.append("SMT is enabled; sibling threads share core resources")
    elif report.smt_enabled is None:
        out.append("SMT state unknown")
    if report.thp_mode != "never":
        out.append(
            f"transparent huge pages are '{report.thp_mode}'; "
            "page size must be fixed at 4 KiB (expected 'never')"
        )
    if report.aslr != "off":
        out.append(
            f"address space randomization is '{report.aslr}' (expected 'off')"
        )
    return out


def enforce(report: EnvReport, strict: bool) -> tuple[str, ...]:
    """Apply the hygiene policy.

    In strict mode any violation raises PolicyError. In advisory mode
    violations come back as warnings alongside the report's own, and the
    measurement may proceed.
    """
    found = violations(report)
    if strict and found:
        raise PolicyError(found)
    return tuple(found) + report.warnings


def _encode_env(r: EnvReport) -> dict:
    return {
        "hostname": r.hostname,
        "cpu_model": r.cpu_model,
        "online_cpus": r.online_cpus,
        "smt_enabled": r.smt_enabled,
        "thp_mode": r.thp_mode,
        "aslr": r.aslr,
        "governor": r.governor,
        "numa_nodes": list(r.numa_nodes),
        "node_cpu_counts": list(r.node_cpu_counts),
        "cache_l1d_bytes": r.cache_l1d_bytes,
        "cache_l2_bytes": r.cache_l2_bytes,
        "cache_llc_bytes": r.cache_llc_bytes,
        "page_bytes": r.page_bytes,
        "timer_resolution_s": r.timer_resolution_s,
        "warnings": list(r.warnings),
    }


def _decode_env(d: dict) -> EnvReport:
    return EnvReport(
        hostname=d["hostname"],
        cpu_model=d["cpu_model"],
        online_cpus=d["online_cpus"],
        smt_enabled=d["smt_enabled"],
        thp_mode=d["thp_mode"],
        aslr=d["aslr"],
        governor=d["governor"],
        numa_nodes=tuple(d["numa_nodes"]),
        node_cpu_counts=tuple(d["node_cpu_counts"]),
        cache_l1d_bytes=d["cache_l1d_bytes"],
        cache_l2_bytes=d["cache_l2_bytes"],
        cache_llc_bytes=d["cache_llc_bytes"],
        page_bytes=d["page_bytes"],
        timer_resolution_s=d["timer_resolution_s"],
        warnings=tuple(d["warnings"]),
    )


register_record(EnvReport, "env_report", _encode_env, _decode_env)
