"""Pointer-chase latency benchmark.

The buffer is divided into 64-byte nodes. Each node's first word holds the
byte offset of its successor, drawn so that every window of the buffer forms
one closed cycle visiting each of its nodes exactly once (a cycle-forcing
shuffle; see kernels.cycle_shuffle). A timed pass walks the windows in
ascending order and the whole chain within each window, so elapsed time per
hop is the latency of one dependent load.

Two traversal modes: read_only only loads; write_back additionally stores a
counter into bytes [8, 16) of every visited node, leaving each line dirty so
its eventual eviction writes back to memory.

window_bytes=None walks one global cycle over the whole buffer, the layout
that exposes TLB-miss cost on large buffers. A small window (the classic
choice is 256 KiB) keeps translations hot and isolates the pure access
latency.
"""

from __future__ import annotations

import hashlib
import math
import struct
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .backend import (
    MappedRegion,
    ensure_precise_clock,
    map_region,
    pin_current_to_core,
    release,
    restore_affinity,
)
from .errors import SizeError, StateError
from .model import (
    CACHELINE_BYTES,
    AccessMode,
    ChaseResult,
    ChaseSpec,
    DeviceProfile,
)

_WORDS_PER_NODE = CACHELINE_BYTES // 8


@dataclass(frozen=True)
class ChaseLayout:
    """Geometry of the cycles written into a buffer, plus their digest.

    The digest is a SHA-256 over the window geometry and every successor
    permutation, so two builds agree iff they produced identical chains.
    """

    node_count: int
    window_nodes: int
    window_starts: tuple[int, ...]  # byte offset of each window's first node
    window_hops: tuple[int, ...]  # cycle length of each window
    seed: int
    digest: str


def layout_into(
    words: np.ndarray,
    seed: int,
    window_bytes: int | None = None,
    node_count: int | None = None,
) -> ChaseLayout:
    """Write successor chains into a uint64 word array.

    Array-level core of build_layout, usable on any buffer. Only the first
    word of each node is written. Windows are laid out in ascending order
    from a single seeded stream, so (seed, node_count, window_bytes) fully
    determines every pointer.
    """
    if words.dtype != np.uint64 or words.ndim != 1:
        raise TypeError("words must be a 1-d uint64 array")
    capacity = words.shape[0] // _WORDS_PER_NODE
    if node_count is None:
        node_count = capacity
    if node_count < 1:
        raise SizeError("need at least one 64-byte node")
    if node_count > capacity:
        raise SizeError(f"{node_count} nodes do not fit in {words.shape[0] * 8} bytes")

    if window_bytes is None:
        window_nodes = node_count
    else:
        if window_bytes < CACHELINE_BYTES or window_bytes % CACHELINE_BYTES:
            raise SizeError("window_bytes must be a positive multiple of 64")
        window_nodes = min(window_bytes // CACHELINE_BYTES, node_count)

    rng = np.random.Generator(np.random.PCG64(seed))
    slots = words[: node_count * _WORDS_PER_NODE].reshape(node_count, _WORDS_PER_NODE)
    hasher = hashlib.sha256(struct.pack("<qqQ", node_count, window_nodes, seed))

    starts: list[int] = []
    hops: list[int] = []
    for base in range(0, node_count, window_nodes):
        count = min(window_nodes, node_count - base)
        perm = np.arange(count, dtype=np.int64)
        if count > 1:
            draws = rng.integers(0, np.arange(1, count), dtype=np.int64)
            kernels.cycle_shuffle(perm, draws)
        slots[base : base + count, 0] = (base + perm) * CACHELINE_BYTES
        hasher.update(struct.pack("<qq", base, count))
        hasher.update(memoryview(perm))
        starts.append(base * CACHELINE_BYTES)
        hops.append(count)

    return ChaseLayout(
        node_count=node_count,
        window_nodes=window_nodes,
        window_starts=tuple(starts),
        window_hops=tuple(hops),
        seed=seed,
        digest=hasher.hexdigest(),
    )


def build_layout(
    region: MappedRegion,
    seed: int,
    window_bytes: int | None = None,
    node_count: int | None = None,
) -> ChaseLayout:
    """Lay out successor chains across a mapped region."""
    if region.length < CACHELINE_BYTES:
        raise SizeError("region too small for a single node")
    words = region.u8[: region.length // 8 * 8].view(np.uint64)
    try:
        return layout_into(words, seed, window_bytes, node_count)
    finally:
        del words


def run_chase(spec: ChaseSpec, device: DeviceProfile) -> ChaseResult:
    """Measure dependent-load latency for one spec on one device.

    Maps and lays out the buffer, pins to spec.pin_core, warms up, then
    times `runs` identical traversals. The pass count is calibrated upward
    until every timed run lasts at least min_timed_duration_ns; all runs
    in the final set execute the same hop count. Per-run checksums must
    agree exactly or the chain is considered corrupted.

    The caller's CPU affinity is restored afterwards.
    """
    ensure_precise_clock()
    previous_affinity = pin_current_to_core(spec.pin_core)
    try:
        region = map_region(device, spec.buffer_bytes)
        words = None
        try:
            layout = build_layout(region, spec.seed, spec.window_bytes)
            words = region.u64
            starts = np.asarray(layout.window_starts, dtype=np.int64)
            hops = np.asarray(layout.window_hops, dtype=np.int64)
            kernel = (
                kernels.chase_write
                if spec.mode is AccessMode.WRITE_BACK
                else kernels.chase_read
            )

            checksum: int | None = None
            if spec.warmup_passes:
                checksum = int(kernel(words, starts, hops, spec.warmup_passes))

            hops_per_pass = layout.node_count
            passes = 1
            while True:
                elapsed: list[int] = []
                complete = True
                for _ in range(spec.runs):
                    t0 = time.perf_counter_ns()
                    cs = int(kernel(words, starts, hops, passes))
                    dt = time.perf_counter_ns() - t0
                    if checksum is None:
                        checksum = cs
                    elif cs != checksum:
                        raise StateError(
                            f"chain corrupted: checksum {cs:#x} != {checksum:#x}"
                        )
                    if dt < spec.min_timed_duration_ns:
                        scale = spec.min_timed_duration_ns / max(dt, 1)
                        passes = max(passes + 1, math.ceil(passes * scale * 1.25))
                        complete = False
                        break
                    elapsed.append(dt)
                if complete:
                    break

            return ChaseResult.from_runs(
                spec=spec,
                hops_timed=hops_per_pass * passes,
                elapsed_ns=tuple(elapsed),
                checksum=checksum,
                device=device,
            )
        finally:
            words = None  # noqa: F841 - drop the export before unmapping
            release(region)
    finally:
        restore_affinity(previous_affinity)
