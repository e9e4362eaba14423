from __future__ import annotations

import numpy as np
import pytest

from membench import backend
from membench.errors import TopologyError
from membench.model import GIB, AccessMode, StreamSpec
from membench.stream import (
    WorkerAssignment,
    assign_workers,
    cpu_node,
    default_pin_cores,
    run_stream,
    _expected_sum,
    _fill_value,
)

NODE0_CORES = backend.node_cpus(0)


def spec(workers=1, mode=AccessMode.READ_ONLY, pwb=1 << 22, passes=2, cores=None):
    return StreamSpec(
        worker_count=workers,
        mode=mode,
        pin_cores=cores if cores is not None else tuple(NODE0_CORES[:workers]),
        per_worker_bytes=pwb,
        passes=passes,
    )


class TestAssignment:
    def test_one_assignment_per_worker(self, dram_profile):
        s = spec(workers=1)
        out = assign_workers(s, dram_profile)
        assert out == (
            WorkerAssignment(worker_id=0, core=NODE0_CORES[0], buffer_bytes=1 << 22),
        )

    def test_zero_workers_rejected(self, dram_profile):
        s = StreamSpec(worker_count=0, mode=AccessMode.READ_ONLY, pin_cores=())
        with pytest.raises(TopologyError):
            assign_workers(s, dram_profile)

    def test_more_workers_than_domain_cores_rejected(self, dram_profile):
        n = len(NODE0_CORES)
        cores = tuple(NODE0_CORES) + tuple(max(NODE0_CORES) + i + 1 for i in range(2))
        s = StreamSpec(
            worker_count=n + 2, mode=AccessMode.READ_ONLY, pin_cores=cores
        )
        with pytest.raises(TopologyError):
            assign_workers(s, dram_profile)

    def test_offline_core_rejected(self, dram_profile):
        s = spec(workers=1, cores=(99999,))
        with pytest.raises(TopologyError):
            assign_workers(s, dram_profile)

    def test_default_pin_cores(self):
        cores = default_pin_cores(1)
        assert cores == (NODE0_CORES[0],)

    def test_cpu_node_of_first_core(self):
        assert cpu_node(NODE0_CORES[0]) == 0
        assert cpu_node(99999) is None


class TestFillOracle:
    def test_fill_values_distinct_per_worker(self):
        vals = {_fill_value(1, i) for i in range(8)}
        assert len(vals) == 8

    def test_expected_sum_matches_numpy(self):
        fill = _fill_value(5, 0)
        n = 1024
        arr = np.full(n, fill, dtype=np.uint64)
        assert int(arr.sum(dtype=np.uint64)) == _expected_sum(fill, n)


class TestRunStream:
    def test_read_result_accounting(self, dram_profile):
        s = spec(workers=1, passes=3)
        r = run_stream(s, dram_profile)
        assert r.total_bytes == 1 * (1 << 22) * 3
        assert r.bandwidth_bps == r.total_bytes * 1e9 / r.wall_time_ns
        assert len(r.per_worker_time_ns) == 1
        assert r.wall_time_ns == max(r.per_worker_time_ns)
        assert r.bandwidth_gbs > 0.1  # even a VM beats 100 MB/s

    def test_write_mode_runs(self, dram_profile):
        r = run_stream(spec(workers=1, mode=AccessMode.WRITE_BACK), dram_profile)
        assert r.total_bytes == (1 << 22) * 2

    def test_wall_time_covers_every_worker(self, dram_profile):
        r = run_stream(spec(workers=1, passes=1), dram_profile)
        assert all(0 < t <= r.wall_time_ns for t in r.per_worker_time_ns)

    @pytest.mark.skipif(len(NODE0_CORES) < 2, reason="needs 2 cores in node 0")
    def test_two_workers_move_twice_the_bytes(self, dram_profile):
        r = run_stream(spec(workers=2), dram_profile)
        assert r.total_bytes == 2 * (1 << 22) * 2
        assert len(r.per_worker_time_ns) == 2

    def test_topology_error_propagates(self, dram_profile):
        s = StreamSpec(worker_count=0, mode=AccessMode.READ_ONLY, pin_cores=())
        with pytest.raises(TopologyError):
            run_stream(s, dram_profile)

    def test_worker_failure_surfaces(self, dram_profile, monkeypatch):
        from membench import stream as stream_mod
        from membench.errors import AffinityError

        def explode(core):
            raise AffinityError("injected")

        monkeypatch.setattr(stream_mod, "pin_current_to_core", explode)
        with pytest.raises(AffinityError, match="injected"):
            run_stream(spec(workers=1), dram_profile)

    def test_regions_released_after_run(self, dram_profile, monkeypatch):
        from membench import stream as stream_mod

        seen = []
        real_release = stream_mod.release

        def tracking_release(region):
            seen.append(region)
            real_release(region)

        monkeypatch.setattr(stream_mod, "release", tracking_release)
        run_stream(spec(workers=1), dram_profile)
        assert len(seen) == 1
        assert seen[0].released
