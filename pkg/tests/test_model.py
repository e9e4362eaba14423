from __future__ import annotations

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from membench import model
from membench.model import (
    AccessMode,
    AnonymousBacking,
    ChaseResult,
    ChaseSpec,
    DeviceKind,
    DeviceProfile,
    FileBacking,
    PhysicalRangeBacking,
    RatioRow,
    RatioTable,
    StreamResult,
    StreamSpec,
    round_half_up,
)


def make_device(**kw) -> DeviceProfile:
    base = dict(
        name="dram", kind=DeviceKind.DRAM, numa_node=0, backing=AnonymousBacking()
    )
    base.update(kw)
    return DeviceProfile(**base)


class TestRounding:
    def test_ties_round_away_from_zero(self):
        assert round_half_up(105.45, 1) == 105.5
        assert round_half_up(7.75, 1) == 7.8
        assert round_half_up(15.85, 1) == 15.9
        assert round_half_up(0.25, 1) == 0.3

    def test_non_tie_cases(self):
        assert round_half_up(400.107, 1) == 400.1
        assert round_half_up(37.117, 1) == 37.1
        assert round_half_up(17.021, 1) == 17.0

    def test_decimals_parameter(self):
        assert round_half_up(2.345, 2) == 2.35
        assert round_half_up(390.625, 1) == 390.6

    @given(st.floats(min_value=0.0, max_value=1e6, allow_nan=False))
    def test_result_has_single_decimal(self, x):
        r = round_half_up(x, 1)
        assert math.isclose(r * 10, round(r * 10), abs_tol=1e-6)
        assert abs(r - x) <= 0.05 + 1e-9


class TestAccessMode:
    @pytest.mark.parametrize(
        "text,mode",
        [
            ("ro", AccessMode.READ_ONLY),
            ("read_only", AccessMode.READ_ONLY),
            ("WB", AccessMode.WRITE_BACK),
            ("write-back", AccessMode.WRITE_BACK),
        ],
    )
    def test_parse(self, text, mode):
        assert AccessMode.parse(text) is mode

    def test_parse_rejects_unknown(self):
        with pytest.raises(ValueError):
            AccessMode.parse("readonly-ish")

    def test_short_names(self):
        assert AccessMode.READ_ONLY.short == "ro"
        assert AccessMode.WRITE_BACK.short == "wb"


class TestSpecValidation:
    def test_buffer_must_be_line_multiple(self):
        with pytest.raises(ValueError):
            ChaseSpec(buffer_bytes=100, mode=AccessMode.READ_ONLY)

    def test_window_exceeding_buffer_rejected(self):
        with pytest.raises(ValueError):
            ChaseSpec(buffer_bytes=128, mode=AccessMode.READ_ONLY, window_bytes=256)

    def test_single_node_buffer_allowed(self):
        spec = ChaseSpec(buffer_bytes=64, mode=AccessMode.READ_ONLY)
        assert spec.node_count == 1

    def test_seed_must_fit_64_bits(self):
        with pytest.raises(ValueError):
            ChaseSpec(buffer_bytes=64, mode=AccessMode.READ_ONLY, seed=2**64)

    def test_stream_pin_cores_must_match_workers(self):
        with pytest.raises(ValueError):
            StreamSpec(worker_count=2, mode=AccessMode.READ_ONLY, pin_cores=(0,))

    def test_stream_pin_cores_must_be_unique(self):
        with pytest.raises(ValueError):
            StreamSpec(worker_count=2, mode=AccessMode.READ_ONLY, pin_cores=(1, 1))

    def test_physical_backing_alignment(self):
        with pytest.raises(ValueError):
            PhysicalRangeBacking(base_address=100, length=4096)
        with pytest.raises(ValueError):
            PhysicalRangeBacking(base_address=4096, length=0)

    def test_negative_numa_node_rejected(self):
        with pytest.raises(ValueError):
            make_device(numa_node=-1)


class TestChaseResult:
    def spec(self, runs=3):
        return ChaseSpec(buffer_bytes=64 * 100, mode=AccessMode.READ_ONLY, runs=runs)

    def test_from_runs_median_and_iqr(self):
        r = ChaseResult.from_runs(
            spec=self.spec(),
            hops_timed=1000,
            elapsed_ns=(100_000, 120_000, 110_000),
            checksum=42,
            device=make_device(),
        )
        assert r.ns_per_access == 110.0
        assert r.passes_timed == 10
        assert r.dispersion_ns == pytest.approx(10.0)

    def test_rejects_inconsistent_ns_per_access(self):
        with pytest.raises(ValueError):
            ChaseResult(
                spec=self.spec(),
                hops_timed=1000,
                elapsed_ns=(100_000, 120_000, 110_000),
                ns_per_access=123.0,
                dispersion_ns=0.0,
                checksum=42,
                device=make_device(),
            )

    def test_rejects_partial_pass(self):
        with pytest.raises(ValueError):
            ChaseResult.from_runs(
                spec=self.spec(),
                hops_timed=1001,
                elapsed_ns=(1, 2, 3),
                checksum=0,
                device=make_device(),
            )

    def test_rejects_wrong_run_count(self):
        with pytest.raises(ValueError):
            ChaseResult.from_runs(
                spec=self.spec(runs=4),
                hops_timed=1000,
                elapsed_ns=(1, 2, 3),
                checksum=0,
                device=make_device(),
            )


class TestStreamResult:
    def spec(self, workers=2, pwb=640, passes=3):
        return StreamSpec(
            worker_count=workers,
            mode=AccessMode.READ_ONLY,
            pin_cores=tuple(range(workers)),
            per_worker_bytes=pwb,
            passes=passes,
        )

    def test_accounting_identity(self):
        r = StreamResult.from_workers(
            spec=self.spec(),
            wall_time_ns=250_000_000,
            per_worker_time_ns=(240_000_000, 250_000_000),
            device=make_device(),
        )
        assert r.total_bytes == 2 * 640 * 3
        assert r.bandwidth_bps == r.total_bytes * 1e9 / r.wall_time_ns

    def test_exact_decimal_gigabytes(self):
        # 10^9 bytes in exactly 0.25 s must be exactly 4 GB/s
        spec = StreamSpec(
            worker_count=1,
            mode=AccessMode.READ_ONLY,
            pin_cores=(0,),
            per_worker_bytes=10**9,
            passes=1,
        )
        r = StreamResult.from_workers(
            spec=spec,
            wall_time_ns=250_000_000,
            per_worker_time_ns=(250_000_000,),
            device=make_device(),
        )
        assert r.bandwidth_gbs == 4.0

    def test_rejects_bad_total(self):
        with pytest.raises(ValueError):
            StreamResult(
                spec=self.spec(),
                total_bytes=999,
                wall_time_ns=1,
                bandwidth_bps=999e9,
                per_worker_time_ns=(1, 1),
                device=make_device(),
            )

    def test_skew_and_balance(self):
        r = StreamResult.from_workers(
            spec=self.spec(),
            wall_time_ns=1_000_000,
            per_worker_time_ns=(700_000, 1_000_000),
            device=make_device(),
        )
        assert r.skew_fraction == pytest.approx(0.3)
        assert r.unbalanced

    def test_single_worker_has_no_skew(self):
        r = StreamResult.from_workers(
            spec=self.spec(workers=1),
            wall_time_ns=1_000_000,
            per_worker_time_ns=(1_000_000,),
            device=make_device(),
        )
        assert r.skew_fraction == 0.0
        assert not r.unbalanced


class TestRatioRows:
    def test_row_recomputation_enforced(self):
        RatioRow("m", 93.5, 374.1, 400.1)
        with pytest.raises(ValueError):
            RatioRow("m", 93.5, 374.1, 400.2)


# --- serialization ------------------------------------------------------------

@st.composite
def chase_specs(draw):
    buffer_nodes = draw(st.integers(1, 512))
    window_nodes = draw(st.one_of(st.none(), st.integers(1, buffer_nodes)))
    return ChaseSpec(
        buffer_bytes=buffer_nodes * 64,
        mode=draw(st.sampled_from(AccessMode)),
        window_bytes=None if window_nodes is None else window_nodes * 64,
        seed=draw(st.integers(0, 2**64 - 1)),
        runs=draw(st.integers(1, 8)),
    )

backings = st.one_of(
    st.just(AnonymousBacking()),
    st.builds(
        PhysicalRangeBacking,
        base_address=st.integers(0, 2**40).map(lambda a: a * 4096),
        length=st.integers(1, 2**30),
    ),
    st.builds(FileBacking, path=st.text(min_size=1, max_size=30)),
)

devices = st.builds(
    DeviceProfile,
    name=st.text(min_size=1, max_size=16),
    kind=st.sampled_from(DeviceKind),
    numa_node=st.integers(0, 7),
    backing=backings,
    interleaved=st.booleans(),
    description=st.text(max_size=40),
)


@st.composite
def chase_results(draw):
    spec = draw(chase_specs())
    passes = draw(st.integers(1, 50))
    hops = spec.node_count * passes
    elapsed = tuple(
        draw(st.integers(hops, hops * 10_000)) for _ in range(spec.runs)
    )
    return ChaseResult.from_runs(
        spec=spec,
        hops_timed=hops,
        elapsed_ns=elapsed,
        checksum=draw(st.integers(0, 2**64 - 1)),
        device=draw(devices),
    )


@st.composite
def stream_results(draw):
    workers = draw(st.integers(1, 8))
    spec = StreamSpec(
        worker_count=workers,
        mode=draw(st.sampled_from(AccessMode)),
        pin_cores=tuple(range(workers)),
        per_worker_bytes=draw(st.integers(1, 2**14)) * 64,
        passes=draw(st.integers(1, 16)),
        seed=draw(st.integers(0, 2**64 - 1)),
    )
    wall = draw(st.integers(10**6, 10**10))
    others = tuple(draw(st.integers(1, wall)) for _ in range(workers - 1))
    return StreamResult.from_workers(
        spec=spec,
        wall_time_ns=wall,
        per_worker_time_ns=others + (wall,),
        device=draw(devices),
    )


class TestSerialization:
    @given(chase_results())
    def test_chase_round_trip_identity(self, result):
        assert model.loads(model.dumps(result)) == result

    @given(stream_results())
    def test_stream_round_trip_identity(self, result):
        assert model.loads(model.dumps(result)) == result

    @given(devices)
    def test_device_round_trip_identity(self, device):
        assert model.loads(model.dumps(device)) == device

    @given(stream_results())
    def test_floats_survive_exactly(self, result):
        back = model.loads(model.dumps(result))
        assert back.bandwidth_bps == result.bandwidth_bps

    def test_document_envelope_shape(self):
        table = RatioTable("b", "s", rows=(RatioRow("m", 2.0, 1.0, 50.0),))
        doc = model.to_document(table)
        assert doc["schema_version"] == model.SCHEMA_VERSION
        assert doc["kind"] == "ratio_table"
        assert model.from_document(doc) == table

    def test_unknown_schema_version_rejected(self):
        doc = model.to_document(RatioTable("b", "s", rows=()))
        doc["schema_version"] = 999
        with pytest.raises(ValueError):
            model.from_document(doc)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            model.from_document({"schema_version": 1, "kind": "nope", "record": {}})

    def test_unregistered_type_rejected(self):
        with pytest.raises(TypeError):
            model.to_document(object())

    def test_write_and_read_document(self, tmp_path, dram_profile):
        path = tmp_path / "dev.json"
        model.write_document(path, dram_profile)
        doc = model.read_document(path)
        assert "written_at_ns" in doc
        assert model.from_document(doc) == dram_profile

    def test_env_embedding(self, tmp_path, dram_profile):
        from membench.envguard import inspect_environment

        env = inspect_environment()
        path = model.write_document(tmp_path / "d.json", dram_profile, env=env)
        doc = model.read_document(path)
        assert model.document_env(doc) == env
        assert model.document_env({"kind": "x"}) is None


class TestIndex:
    def test_append_and_read(self, tmp_path):
        idx = tmp_path / "index.jsonl"
        model.append_index(idx, point=1, status="ok")
        model.append_index(idx, point=2, status="failed")
        entries = model.read_index(idx)
        assert [e["point"] for e in entries] == [1, 2]
        assert all("written_at_ns" in e for e in entries)

    def test_append_only(self, tmp_path):
        idx = tmp_path / "index.jsonl"
        model.append_index(idx, point=1)
        first = idx.read_text()
        model.append_index(idx, point=2)
        assert idx.read_text().startswith(first)

    def test_read_missing_index(self, tmp_path):
        assert model.read_index(tmp_path / "absent.jsonl") == []

    def test_lines_are_valid_json(self, tmp_path):
        idx = tmp_path / "index.jsonl"
        model.append_index(idx, point=3, file="results/a.json")
        for line in idx.read_text().splitlines():
            json.loads(line)
