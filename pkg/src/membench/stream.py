"""Multi-worker sequential-scan bandwidth benchmark.

Each worker is a thread pinned to its own core with a private, disjoint
buffer placed on the target device. All workers block on a shared barrier;
the wall clock runs from barrier release to the completion of the slowest
worker, and bandwidth is total bytes moved over that wall time — the
aggregate rate the device sustained while all workers were active.

Threads are real workers here because the scan kernels release the GIL;
pinning happens inside each thread so the affinity applies to that thread
alone. Read workers fold every word into a sum that is checked against the
closed form for the fill pattern, so a scan that skipped memory would be
detected rather than reported as impossible bandwidth.
"""

from __future__ import annotations

import threading
import time
import traceback
from dataclasses import dataclass

import numpy as np

from . import kernels
from .backend import (
    MappedRegion,
    ensure_precise_clock,
    map_region,
    node_cpus,
    numa_nodes,
    pin_current_to_core,
    regions_disjoint,
    release,
)
from .errors import StateError, TopologyError
from .model import AccessMode, DeviceProfile, StreamResult, StreamSpec

_FILL_MIX = 0x9E3779B97F4A7C15  # distinct per-worker fill values
_BARRIER_TIMEOUT_S = 300.0


@dataclass(frozen=True)
class WorkerAssignment:
    worker_id: int
    core: int
    buffer_bytes: int


def cpu_node(cpu: int) -> int | None:
    """NUMA node owning a CPU id, or None if unknown."""
    for node in numa_nodes():
        if cpu in node_cpus(node):
            return node
    return None


def default_pin_cores(worker_count: int, node: int | None = None) -> tuple[int, ...]:
    """First `worker_count` CPUs of a node (node 0 by default)."""
    target = 0 if node is None else node
    cores = node_cpus(target)
    if not cores:
        raise TopologyError(f"NUMA node {target} is offline or has no CPUs")
    if worker_count > len(cores):
        raise TopologyError(
            f"node {target} has {len(cores)} CPU(s), cannot pin {worker_count} worker(s)"
        )
    return tuple(cores[:worker_count])


def assign_workers(spec: StreamSpec, device: DeviceProfile) -> tuple[WorkerAssignment, ...]:
    """Validate topology and produce one assignment per worker.

    All workers must sit in a single NUMA domain so every measurement is a
    pure local or pure remote path; the memory node comes from the device
    profile and may differ from the worker node.
    """
    if spec.worker_count < 1:
        raise TopologyError("bandwidth measurement needs at least one worker")
    anchor = cpu_node(spec.pin_cores[0])
    if anchor is None:
        raise TopologyError(f"core {spec.pin_cores[0]} is not online")
    domain = node_cpus(anchor)
    stray = [c for c in spec.pin_cores if c not in domain]
    if stray:
        raise TopologyError(
            f"cores {stray} are outside NUMA node {anchor}; workers must share one domain"
        )
    if spec.worker_count > len(domain):
        raise TopologyError(
            f"{spec.worker_count} workers exceed the {len(domain)} cores of node {anchor}"
        )
    return tuple(
        WorkerAssignment(worker_id=i, core=core, buffer_bytes=spec.per_worker_bytes)
        for i, core in enumerate(spec.pin_cores)
    )


def _raise_worker_failure(failures: list[BaseException]) -> None:
    exc = failures[0]
    # the traceback pins the dead worker's frame, and with it the buffer
    # view; drop the locals so the regions can actually be unmapped
    traceback.clear_frames(exc.__traceback__)
    raise exc


def _fill_value(seed: int, worker_id: int) -> int:
    return (seed + _FILL_MIX * (worker_id + 1)) % (1 << 64)


def _expected_sum(fill: int, word_count: int) -> int:
    return (fill * word_count) % (1 << 64)


def run_stream(spec: StreamSpec, device: DeviceProfile) -> StreamResult:
    """Measure aggregate sequential bandwidth for one spec on one device.

    Honors spec.passes exactly, so total_bytes is always
    worker_count * per_worker_bytes * passes.
    """
    ensure_precise_clock()
    assignments = assign_workers(spec, device)

    regions: list[MappedRegion] = []
    threads: list[threading.Thread] = []
    barrier = threading.Barrier(spec.worker_count + 1)
    finish_ns = [0] * spec.worker_count
    sums = [0] * spec.worker_count
    failures: list[BaseException] = []

    def worker(idx: int, core: int, words: np.ndarray) -> None:
        try:
            pin_current_to_core(core)
            if spec.mode is AccessMode.READ_ONLY:
                kernels.scan_read(words, 1)  # warm untimed pass
                barrier.wait(timeout=_BARRIER_TIMEOUT_S)
                sums[idx] = int(kernels.scan_read(words, spec.passes))
            else:
                kernels.scan_write(words, np.uint64(_fill_value(spec.seed, idx)), 1)
                barrier.wait(timeout=_BARRIER_TIMEOUT_S)
                kernels.scan_write(words, np.uint64(_fill_value(spec.seed, idx)), spec.passes)
            finish_ns[idx] = time.perf_counter_ns()
        except BaseException as exc:  # propagate to the main thread
            failures.append(exc)
            barrier.abort()

    try:
        for a in assignments:
            region = map_region(device, a.buffer_bytes)
            regions.append(region)
            fill = np.uint64(_fill_value(spec.seed, a.worker_id))
            words = region.u64
            try:
                words[:] = fill
            finally:
                del words
        if not regions_disjoint(regions):
            raise StateError("worker buffers overlap")

        for a, region in zip(assignments, regions):
            t = threading.Thread(
                target=worker,
                args=(a.worker_id, a.core, region.u64),
                name=f"scan-worker-{a.worker_id}",
                daemon=True,
            )
            threads.append(t)
            t.start()

        try:
            barrier.wait(timeout=_BARRIER_TIMEOUT_S)
        except threading.BrokenBarrierError:
            for t in threads:
                t.join()
            if failures:
                _raise_worker_failure(failures)
            raise StateError("start barrier broke without a worker error")
        started_ns = time.perf_counter_ns()

        for t in threads:
            t.join()
        if failures:
            _raise_worker_failure(failures)

        if spec.mode is AccessMode.READ_ONLY:
            word_count = spec.per_worker_bytes // 8
            for idx in range(spec.worker_count):
                expected = _expected_sum(_fill_value(spec.seed, idx), word_count)
                if sums[idx] != expected:
                    raise StateError(
                        f"worker {idx} checksum {sums[idx]:#x} != expected {expected:#x}"
                    )

        per_worker = tuple(f - started_ns for f in finish_ns)
        if any(p <= 0 for p in per_worker):
            raise StateError("worker finished before the barrier released")
        return StreamResult.from_workers(
            spec=spec,
            wall_time_ns=max(per_worker),
            per_worker_time_ns=per_worker,
            device=device,
        )
    finally:
        for t in threads:
            t.join()
        for region in regions:
            if not region.released:
                release(region)
