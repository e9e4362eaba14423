from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membench.chase import layout_into
from membench.oracles import (
    MissStats,
    ToyCacheModel,
    sequential_addresses,
    simulate_misses,
    walk_addresses,
    walk_and_verify,
)


class TestWalkHelpers:
    def test_walk_addresses_covers_every_node_once(self):
        words = np.zeros(50 * 8, dtype=np.uint64)
        layout = layout_into(words, seed=3)
        addrs = list(walk_addresses(words, layout))
        assert len(addrs) == 50
        assert sorted(addrs) == [i * 64 for i in range(50)]

    def test_windowed_walk_stays_ordered_by_window(self):
        words = np.zeros(40 * 8, dtype=np.uint64)
        layout = layout_into(words, seed=3, window_bytes=64 * 10)
        addrs = list(walk_addresses(words, layout))
        for i, addr in enumerate(addrs):
            assert addr // (64 * 10) == i // 10  # window index in visit order

    def test_sequential_addresses(self):
        assert list(sequential_addresses(4)) == [0, 64, 128, 192]


class TestVerifyReport:
    def test_ok_report_counts_everything(self):
        words = np.zeros(30 * 8, dtype=np.uint64)
        layout = layout_into(words, seed=1, window_bytes=64 * 8)
        report = walk_and_verify(words, layout)
        assert report.ok
        assert report.nodes_visited == 30
        assert report.window_count == 4


class TestToyCacheModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            ToyCacheModel(set_count=0, ways=1)

    def test_capacity(self):
        m = ToyCacheModel(set_count=64, ways=4)
        assert m.capacity_lines == 256
        assert m.capacity_bytes == 256 * 64

    def test_stats_accounting(self):
        m = ToyCacheModel(set_count=4, ways=2)
        stats = simulate_misses(m, sequential_addresses(64))
        assert stats.accesses == 64
        assert stats.hits + stats.demand_misses == stats.accesses
        assert 0.0 <= stats.miss_ratio <= 1.0

    def test_empty_trace(self):
        m = ToyCacheModel(set_count=4, ways=2)
        stats = simulate_misses(m, [])
        assert stats == MissStats(0, 0, 0, 0)
        assert stats.miss_ratio == 0.0

    def test_repeated_line_hits_after_first_miss(self):
        m = ToyCacheModel(set_count=4, ways=2, prefetch_next_line=False)
        stats = simulate_misses(m, [0, 0, 0, 0])
        assert stats.demand_misses == 1
        assert stats.hits == 3

    def test_lru_eviction_order(self):
        # one set, two ways, no prefetch: lines 0,1 fill; 2 evicts 0
        m = ToyCacheModel(set_count=1, ways=2, prefetch_next_line=False)
        trace = [a * 64 for a in (0, 1, 2, 0)]
        stats = simulate_misses(m, trace)
        assert stats.demand_misses == 4  # final 0 was evicted by 2

    def test_lru_promotion_on_hit(self):
        m = ToyCacheModel(set_count=1, ways=2, prefetch_next_line=False)
        trace = [a * 64 for a in (0, 1, 0, 2, 0)]
        # hit on 0 promotes it; 2 then evicts 1, so the last 0 still hits
        stats = simulate_misses(m, trace)
        assert stats.demand_misses == 3
        assert stats.hits == 2

    def test_sequential_prefetch_hides_alternate_misses(self):
        m = ToyCacheModel(set_count=64, ways=4)
        n = 4 * m.capacity_lines
        stats = simulate_misses(m, sequential_addresses(n))
        assert stats.miss_ratio == pytest.approx(0.5, abs=0.01)

    def test_sequential_without_prefetch_misses_every_line(self):
        m = ToyCacheModel(set_count=64, ways=4, prefetch_next_line=False)
        stats = simulate_misses(m, sequential_addresses(4 * m.capacity_lines))
        assert stats.miss_ratio == 1.0

    def test_random_cycle_defeats_prefetch(self):
        m = ToyCacheModel(set_count=64, ways=4)
        n = 8 * m.capacity_lines
        words = np.zeros(n * 8, dtype=np.uint64)
        layout = layout_into(words, seed=7)
        stats = simulate_misses(m, walk_addresses(words, layout))
        assert stats.miss_ratio > 0.9  # deterministic trace: 0.9404…

    def test_working_set_within_capacity_all_hits_after_warmup(self):
        m = ToyCacheModel(set_count=8, ways=2, prefetch_next_line=False)
        lines = list(sequential_addresses(m.capacity_lines))
        warm = simulate_misses(m, lines + lines)
        assert warm.demand_misses == m.capacity_lines  # second lap free

    @settings(max_examples=20)
    @given(
        st.lists(st.integers(0, 63).map(lambda l: l * 64), max_size=200),
        st.integers(1, 8),
        st.integers(1, 4),
    )
    def test_stats_always_consistent(self, trace, sets, ways):
        stats = simulate_misses(ToyCacheModel(set_count=sets, ways=ways), trace)
        assert stats.accesses == len(trace)
        assert stats.hits + stats.demand_misses == stats.accesses
