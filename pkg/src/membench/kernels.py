"""Numba-compiled measurement kernels.

The latency kernels walk a pointer chain where each 64-byte node stores the
byte offset of its successor in its first 8 bytes. Every load depends on the
previous one, so out-of-order hardware cannot overlap the misses and elapsed
time divided by hop count is the access latency. The checksum accumulator is
reset at the start of each pass and folds in every loaded offset, which makes
its final value independent of the pass count while still forcing the
compiler to keep all loads.

The bandwidth kernels scan a buffer front to back. The read kernel consumes
every 8-byte word of every line; the write kernel dirties one word per line,
which still moves whole lines through the hierarchy.

All kernels are compiled with explicit signatures, ``nogil=True`` (workers
must scan in parallel from Python threads) and ``cache=True`` (compile once
per machine).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U1 = np.uint64(1)
_U3 = np.uint64(3)
_U63 = np.uint64(63)

WORDS_PER_LINE = 8  # 64-byte line / 8-byte word


@njit("uint64(uint64[::1], int64[::1], int64[::1], int64)", nogil=True, cache=True)
def chase_read(words, window_starts, window_hops, passes):
    """Dependent-load walk; returns the per-pass offset checksum."""
    acc = np.uint64(0)
    for _ in range(passes):
        acc = np.uint64(0)
        for w in range(window_starts.shape[0]):
            off = np.uint64(window_starts[w])
            for _ in range(window_hops[w]):
                off = words[off >> _U3]
                acc = ((acc << _U1) | (acc >> _U63)) ^ off
    return acc


@njit("uint64(uint64[::1], int64[::1], int64[::1], int64)", nogil=True, cache=True)
def chase_write(words, window_starts, window_hops, passes):
    """Dependent-load walk that also dirties every visited line.

    The hop counter lands in bytes [8, 16) of the node being left, so the
    store never clobbers a pointer and the load chain stays serialized.
    """
    acc = np.uint64(0)
    counter = np.uint64(0)
    for _ in range(passes):
        acc = np.uint64(0)
        for w in range(window_starts.shape[0]):
            off = np.uint64(window_starts[w])
            for _ in range(window_hops[w]):
                slot = off >> _U3
                nxt = words[slot]
                words[slot + _U1] = counter
                counter += _U1
                acc = ((acc << _U1) | (acc >> _U63)) ^ nxt
                off = nxt
    return acc


@njit("uint64(uint64[::1], int64)", nogil=True, cache=True)
def scan_read(words, passes):
    """Sequential read of every word; returns the per-pass sum."""
    total = np.uint64(0)
    for _ in range(passes):
        total = np.uint64(0)
        for i in range(words.shape[0]):
            total += words[i]
    return total


@njit("void(uint64[::1], uint64, int64)", nogil=True, cache=True)
def scan_write(words, value, passes):
    """Sequential store of one word per 64-byte line."""
    for p in range(passes):
        v = value + np.uint64(p)
        for i in range(0, words.shape[0], WORDS_PER_LINE):
            words[i] = v


@njit("void(int64[::1], int64[::1])", nogil=True, cache=True)
def cycle_shuffle(perm, draws):
    """In-place cycle-forcing shuffle.

    ``draws[k]`` must be uniform on [0, k+1). Swapping position i with a
    strictly smaller position for i = n-1 .. 1 yields a permutation that is
    a single cycle over all n elements (the classic restriction of the
    swap range that forbids fixed points from ever forming).
    """
    n = perm.shape[0]
    for i in range(n - 1, 0, -1):
        j = draws[i - 1]
        t = perm[i]
        perm[i] = perm[j]
        perm[j] = t


@njit("int64(uint64[::1], int64, int64)", nogil=True, cache=True)
def walk_cycle_len(words, start, max_hops):
    """Hops needed to return to ``start``, or -1 within ``max_hops``.

    Successor maps are deterministic, so the first return to the start
    happens after exactly cycle-length hops with no intermediate repeats;
    a map that is not a permutation either never returns or exhausts the
    budget, both reported as -1.
    """
    off = np.uint64(start)
    for h in range(1, max_hops + 1):
        off = words[off >> _U3]
        if off == np.uint64(start):
            return h
    return np.int64(-1)
