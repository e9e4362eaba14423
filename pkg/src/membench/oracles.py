"""Independent checks for the measurement machinery.

walk_and_verify re-derives what a chase layout promises — every window is
one closed cycle covering each of its nodes exactly once, with no pointer
escaping its window — by actually following the pointers, using none of the
construction code. expected_checksum replays the traversal checksum in
plain Python so the compiled kernels can be pinned against it.

ToyCacheModel is a deliberately small set-associative LRU cache with
next-line prefetch on miss. It exists to demonstrate *why* the chase uses
a random cycle: a sequential walk lets the prefetcher hide every other
miss, a random cycle defeats it. The model is for reasoning and tests, not
for predicting real hardware.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .chase import ChaseLayout
from .model import CACHELINE_BYTES

_MASK = (1 << 64) - 1
_WORDS_PER_NODE = CACHELINE_BYTES // 8


@dataclass(frozen=True)
class WalkReport:
    node_count: int
    window_count: int
    nodes_visited: int
    issues: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.issues and self.nodes_visited == self.node_count


def walk_and_verify(words: np.ndarray, layout: ChaseLayout) -> WalkReport:
    """Follow every window's chain and check full single-cycle coverage."""
    issues: list[str] = []
    visited = 0
    for start, hops in zip(layout.window_starts, layout.window_hops):
        base = start // CACHELINE_BYTES
        ptrs = words[base * _WORDS_PER_NODE : (base + hops) * _WORDS_PER_NODE : _WORDS_PER_NODE]
        lo = np.uint64(start)
        hi = np.uint64(start + hops * CACHELINE_BYTES)
        if np.any(ptrs % np.uint64(CACHELINE_BYTES)):
            issues.append(f"window@{start}: pointer not 64-byte aligned")
            continue
        if np.any((ptrs < lo) | (ptrs >= hi)):
            issues.append(f"window@{start}: pointer escapes the window")
            continue
        length = int(kernels.walk_cycle_len(words, start, hops))
        if length != hops:
            issues.append(
                f"window@{start}: cycle closed after {length} hops, expected {hops}"
            )
            continue
        visited += length
    return WalkReport(
        node_count=layout.node_count,
        window_count=len(layout.window_starts),
        nodes_visited=visited,
        issues=tuple(issues),
    )


def python_cycle_length(successors: list[int], start: int) -> int:
    """Reference walk over node indices; -1 if it never returns to start."""
    node = start
    for hop in range(1, len(successors) + 1):
        node = successors[node]
        if node == start:
            return hop
    return -1


def expected_checksum(words: np.ndarray, layout: ChaseLayout) -> int:
    """One traversal pass's checksum, replayed with Python integers."""
    acc = 0
    for start, hops in zip(layout.window_starts, layout.window_hops):
        off = start
        for _ in range(hops):
            off = int(words[off >> 3])
            acc = (((acc << 1) & _MASK) | (acc >> 63)) ^ off
    return acc


def walk_addresses(words: np.ndarray, layout: ChaseLayout) -> Iterator[int]:
    """Byte address of every node in traversal order, one full pass."""
    for start, hops in zip(layout.window_starts, layout.window_hops):
        off = start
        for _ in range(hops):
            yield off
            off = int(words[off >> 3])


def sequential_addresses(line_count: int, line_bytes: int = CACHELINE_BYTES) -> Iterator[int]:
    """Byte address of every line of a front-to-back scan."""
    for i in range(line_count):
        yield i * line_bytes


# --- toy cache model -----------------------------------------------------------


@dataclass(frozen=True)
class ToyCacheModel:
    """Set-associative, true-LRU, optional next-line prefetch on miss."""

    set_count: int
    ways: int
    line_bytes: int = CACHELINE_BYTES
    prefetch_next_line: bool = True

    def __post_init__(self):
        if self.set_count < 1 or self.ways < 1 or self.line_bytes < 1:
            raise ValueError("set_count, ways and line_bytes must be positive")

    @property
    def capacity_lines(self) -> int:
        return self.set_count * self.ways

    @property
    def capacity_bytes(self) -> int:
        return self.capacity_lines * self.line_bytes


@dataclass(frozen=True)
class MissStats:
    accesses: int
    demand_misses: int
    hits: int
    prefetch_fills: int

    @property
    def miss_ratio(self) -> float:
        return self.demand_misses / self.accesses if self.accesses else 0.0


def simulate_misses(model: ToyCacheModel, addresses: Iterable[int]) -> MissStats:
    """Run an address trace through a cold cache; count demand misses.

    A demand miss installs its line and, when enabled, also fills the next
    line without promoting it if already present — so a later access to a
    prefetched line is a hit the trace never paid for. Dict insertion order
    doubles as the per-set LRU queue.
    """
    sets: list[dict[int, None]] = [dict() for _ in range(model.set_count)]
    accesses = misses = hits = prefetch_fills = 0

    def install(line: int) -> None:
        s = sets[line % model.set_count]
        if len(s) >= model.ways:
            del s[next(iter(s))]
        s[line] = None

    for addr in addresses:
        line = addr // model.line_bytes
        s = sets[line % model.set_count]
        accesses += 1
        if line in s:
            hits += 1
            del s[line]  # move to most-recently-used
            s[line] = None
            continue
        misses += 1
        install(line)
        if model.prefetch_next_line:
            nxt = line + 1
            if nxt not in sets[nxt % model.set_count]:
                install(nxt)
                prefetch_fills += 1

    return MissStats(
        accesses=accesses,
        demand_misses=misses,
        hits=hits,
        prefetch_fills=prefetch_fills,
    )
