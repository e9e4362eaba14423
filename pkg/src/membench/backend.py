"""Region mapping, page placement, and CPU pinning.

A measurement buffer is an mmap'd region described by a DeviceProfile:
anonymous memory bound to a NUMA node, a shared file mapping, or a raw
physical range through a device file such as /dev/mem. Regions are mapped
with transparent huge pages disabled and are prefaulted page by page so a
later timed walk observes TLB behaviour for ordinary 4 KiB pages and never
takes a demand fault.

NumPy views are the only buffer exports this module creates; syscalls take
the view's address as a plain integer. release() drops the views before
closing the map, so a caller that still holds a view of its own gets a
StateError instead of a dangling pointer.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import errno
import mmap
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    AffinityError,
    ClockError,
    ExhaustedError,
    PrivilegeError,
    RangeError,
    SizeError,
    StateError,
)
from .model import (
    DEFAULT_PAGE_BYTES,
    AnonymousBacking,
    DeviceProfile,
    FileBacking,
    PhysicalRangeBacking,
)

_SYS_MBIND = 237  # x86_64
_SYS_MOVE_PAGES = 279  # x86_64
_MPOL_BIND = 2

_libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6", use_errno=True)


def _round_up(value: int, step: int) -> int:
    return -(-value // step) * step


def parse_cpu_list(text: str) -> tuple[int, ...]:
    """Parse kernel cpulist syntax like ``0-3,8,10-11``."""
    out: list[int] = []
    for part in text.strip().split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(sorted(set(out)))


def numa_nodes() -> tuple[int, ...]:
    """Online NUMA node ids; (0,) when sysfs does not expose them."""
    path = Path("/sys/devices/system/node/online")
    if path.exists():
        return parse_cpu_list(path.read_text())
    return (0,)


def node_cpus(node: int) -> tuple[int, ...]:
    """CPU ids attached to a NUMA node."""
    path = Path(f"/sys/devices/system/node/node{node}/cpulist")
    if path.exists():
        return parse_cpu_list(path.read_text())
    if node == 0:
        online = Path("/sys/devices/system/cpu/online")
        if online.exists():
            return parse_cpu_list(online.read_text())
        return tuple(sorted(os.sched_getaffinity(0)))
    return ()


def available_memory_bytes() -> int:
    """MemAvailable from /proc/meminfo, or a conservative guess."""
    try:
        for line in Path("/proc/meminfo").read_text().splitlines():
            if line.startswith("MemAvailable:"):
                return int(line.split()[1]) * 1024
    except OSError:
        pass
    return 1 << 30


def ensure_precise_clock() -> None:
    """Fail fast if perf_counter cannot time sub-microsecond intervals."""
    info = time.get_clock_info("perf_counter")
    if not info.monotonic or info.resolution > 1e-6:
        raise ClockError(
            f"perf_counter is unusable for latency timing "
            f"(monotonic={info.monotonic}, resolution={info.resolution}s)"
        )


def pin_current_to_core(core: int) -> tuple[int, ...]:
    """Pin the calling thread to one CPU; returns the previous affinity."""
    previous = tuple(sorted(os.sched_getaffinity(0)))
    try:
        os.sched_setaffinity(0, {core})
    except (OSError, ValueError) as exc:
        raise AffinityError(f"cannot pin to core {core}: {exc}") from exc
    return previous


def restore_affinity(cores: tuple[int, ...]) -> None:
    try:
        os.sched_setaffinity(0, set(cores))
    except (OSError, ValueError) as exc:
        raise AffinityError(f"cannot restore affinity {cores}: {exc}") from exc


def _mbind(address: int, length: int, node: int) -> None:
    mask_words = max(1, node // 64 + 1)
    mask = (ctypes.c_ulong * mask_words)()
    mask[node // 64] = 1 << (node % 64)
    rc = _libc.syscall(
        _SYS_MBIND,
        ctypes.c_void_p(address),
        ctypes.c_ulong(length),
        ctypes.c_int(_MPOL_BIND),
        mask,
        ctypes.c_ulong(mask_words * 64 + 1),
        ctypes.c_uint(0),
    )
    if rc != 0:
        err = ctypes.get_errno()
        if err == errno.ENOMEM:
            raise ExhaustedError(f"node {node} cannot satisfy {length} bytes")
        raise StateError(f"mbind to node {node} failed: {os.strerror(err)}")


@dataclass
class MappedRegion:
    """One live mapping plus its NumPy views and placement metadata."""

    profile: DeviceProfile
    length: int
    page_bytes: int
    address: int
    u8: Optional[np.ndarray]
    _mm: Optional[mmap.mmap] = field(repr=False, default=None)
    _fd: int = -1
    released: bool = False

    @property
    def u64(self) -> np.ndarray:
        if self.released or self.u8 is None:
            raise StateError("region has been released")
        return self.u8.view(np.uint64)

    @property
    def page_count(self) -> int:
        return _round_up(self.length, self.page_bytes) // self.page_bytes

    def resident_fraction(self) -> float:
        """Fraction of pages currently in core (mincore)."""
        if self.released:
            raise StateError("region has been released")
        npages = self.page_count
        vec = (ctypes.c_ubyte * npages)()
        rc = _libc.mincore(
            ctypes.c_void_p(self.address),
            ctypes.c_size_t(npages * self.page_bytes),
            vec,
        )
        if rc != 0:
            raise StateError(f"mincore failed: {os.strerror(ctypes.get_errno())}")
        return sum(v & 1 for v in vec) / npages

    def page_nodes(self, max_pages: int = 512) -> tuple[int, ...]:
        """NUMA node of up to ``max_pages`` evenly sampled resident pages.

        Negative entries are -errno from the kernel (e.g. page not present).
        """
        if self.released:
            raise StateError("region has been released")
        total = self.page_count
        stride = max(1, total // max_pages)
        sample = range(0, total, stride)
        count = len(sample)
        pages = (ctypes.c_void_p * count)(
            *[self.address + i * self.page_bytes for i in sample]
        )
        status = (ctypes.c_int * count)()
        rc = _libc.syscall(
            _SYS_MOVE_PAGES,
            ctypes.c_int(0),
            ctypes.c_ulong(count),
            pages,
            None,
            status,
            ctypes.c_int(0),
        )
        if rc != 0:
            raise StateError(f"move_pages failed: {os.strerror(ctypes.get_errno())}")
        return tuple(status)

    def release(self) -> None:
        release(self)


def map_region(
    profile: DeviceProfile,
    length: int,
    page_bytes: int = DEFAULT_PAGE_BYTES,
) -> MappedRegion:
    """Map, place, and prefault a measurement buffer.

    The mapping is rounded up to whole pages but the region (and its views)
    keeps the requested byte length. Anonymous regions are bound to the
    profile's NUMA node before the faulting pass so every page lands there.
    """
    if length <= 0:
        raise SizeError("region length must be > 0")
    if page_bytes <= 0 or page_bytes % DEFAULT_PAGE_BYTES:
        raise SizeError("page_bytes must be a positive multiple of 4096")
    backing = profile.backing
    map_len = _round_up(length, page_bytes)
    fd = -1

    if isinstance(backing, AnonymousBacking):
        if profile.numa_node not in numa_nodes():
            raise RangeError(f"NUMA node {profile.numa_node} is not online")
        headroom = available_memory_bytes() - (256 << 20)
        if map_len > headroom:
            # fail here instead of letting the prefault pass get OOM-killed
            raise ExhaustedError(
                f"{map_len} bytes requested but only ~{max(headroom, 0)} available"
            )
        try:
            mm = mmap.mmap(-1, map_len, flags=mmap.MAP_PRIVATE | mmap.MAP_ANONYMOUS)
        except OSError as exc:
            raise ExhaustedError(f"cannot map {map_len} bytes: {exc}") from exc
    elif isinstance(backing, PhysicalRangeBacking):
        if length > backing.length:
            raise RangeError(
                f"requested {length} bytes exceeds declared range of {backing.length}"
            )
        try:
            fd = os.open(backing.device_path, os.O_RDWR | os.O_SYNC)
        except PermissionError as exc:
            raise PrivilegeError(f"cannot open {backing.device_path}: {exc}") from exc
        except FileNotFoundError as exc:
            raise RangeError(f"device path {backing.device_path} does not exist") from exc
        try:
            mm = mmap.mmap(fd, map_len, flags=mmap.MAP_SHARED, offset=backing.base_address)
        except PermissionError as exc:
            os.close(fd)
            raise PrivilegeError(f"cannot map {backing.device_path}: {exc}") from exc
        except OSError as exc:
            os.close(fd)
            if exc.errno in (errno.EPERM, errno.EACCES):
                raise PrivilegeError(f"cannot map {backing.device_path}: {exc}") from exc
            raise RangeError(f"cannot map physical range: {exc}") from exc
    elif isinstance(backing, FileBacking):
        try:
            fd = os.open(backing.path, os.O_RDWR | os.O_CREAT, 0o600)
        except PermissionError as exc:
            raise PrivilegeError(f"cannot open {backing.path}: {exc}") from exc
        except FileNotFoundError as exc:
            raise RangeError(f"directory for {backing.path} does not exist") from exc
        if os.fstat(fd).st_size < map_len:
            try:
                os.ftruncate(fd, map_len)
            except OSError as exc:
                os.close(fd)
                raise ExhaustedError(f"cannot grow {backing.path}: {exc}") from exc
        try:
            mm = mmap.mmap(fd, map_len, flags=mmap.MAP_SHARED)
        except OSError as exc:
            os.close(fd)
            raise ExhaustedError(f"cannot map {backing.path}: {exc}") from exc
    else:
        raise TypeError(f"unknown backing {backing!r}")

    nohuge = getattr(mmap, "MADV_NOHUGEPAGE", None)
    if nohuge is not None:
        try:
            mm.madvise(nohuge)
        except OSError:
            pass  # advisory; some filesystems reject it

    u8_full = np.frombuffer(mm, dtype=np.uint8)
    address = int(u8_full.ctypes.data)

    if isinstance(backing, AnonymousBacking):
        _mbind(address, map_len, profile.numa_node)
        u8_full[::page_bytes] = 0  # write-fault: private pages must not alias the zero page
    else:
        int(u8_full[::page_bytes].sum())  # read-fault is enough for shared mappings

    return MappedRegion(
        profile=profile,
        length=length,
        page_bytes=page_bytes,
        address=address,
        u8=u8_full[:length],
        _mm=mm,
        _fd=fd,
    )


def release(region: MappedRegion) -> None:
    """Drop the region's views and unmap it. Regions release exactly once."""
    if region.released:
        raise StateError("region already released")
    region.u8 = None
    mm = region._mm
    region._mm = None
    try:
        if mm is not None:
            mm.close()
    except BufferError as exc:
        region._mm = mm
        region.u8 = np.frombuffer(mm, dtype=np.uint8)[: region.length]
        raise StateError(
            "cannot release: buffer views are still exported; drop them first"
        ) from exc
    region.released = True
    if region._fd >= 0:
        os.close(region._fd)
        region._fd = -1


def regions_disjoint(regions: list[MappedRegion]) -> bool:
    """True when no two regions overlap in the address space."""
    spans = sorted((r.address, r.address + r.length) for r in regions)
    return all(spans[i][1] <= spans[i + 1][0] for i in range(len(spans) - 1))
