from __future__ import annotations

import dataclasses

import pytest

from membench import envguard, model
from membench.envguard import EnvReport, enforce, inspect_environment, violations
from membench.errors import PolicyError


def clean_report(**overrides) -> EnvReport:
    base = dict(
        hostname="h",
        cpu_model="cpu",
        online_cpus=4,
        smt_enabled=False,
        thp_mode="never",
        aslr="off",
        governor="performance",
        numa_nodes=(0,),
        node_cpu_counts=(4,),
        cache_l1d_bytes=32 * 1024,
        cache_l2_bytes=1024 * 1024,
        cache_llc_bytes=32 * 1024 * 1024,
        page_bytes=4096,
        timer_resolution_s=1e-9,
        warnings=(),
    )
    base.update(overrides)
    return EnvReport(**base)


class TestInspection:
    def test_runs_and_fills_every_field(self):
        r = inspect_environment()
        assert r.hostname
        assert r.online_cpus >= 1
        assert r.thp_mode in ("always", "madvise", "never", "unknown")
        assert r.aslr in ("off", "partial", "full", "unknown")
        assert r.smt_enabled in (True, False, None)
        assert 0 in r.numa_nodes
        assert len(r.node_cpu_counts) == len(r.numa_nodes)
        assert r.page_bytes >= 4096
        assert r.timer_resolution_s > 0

    def test_is_read_only_and_repeatable(self):
        a = inspect_environment()
        b = inspect_environment()
        assert dataclasses.replace(a, warnings=()) == dataclasses.replace(
            b, warnings=()
        )

    def test_round_trip(self):
        r = inspect_environment()
        assert model.loads(model.dumps(r)) == r


class TestParsers:
    def test_cache_size_parsing(self):
        assert envguard._parse_cache_size("32K") == 32 * 1024
        assert envguard._parse_cache_size("300M") == 300 * 1024 * 1024
        assert envguard._parse_cache_size("1G") == 1024**3
        assert envguard._parse_cache_size("512") == 512
        assert envguard._parse_cache_size("bogus") is None


class TestPolicy:
    def test_clean_host_has_no_violations(self):
        assert violations(clean_report()) == []

    def test_smt_on_flagged(self):
        out = violations(clean_report(smt_enabled=True))
        assert any("SMT" in v for v in out)

    def test_smt_unknown_flagged(self):
        out = violations(clean_report(smt_enabled=None))
        assert any("SMT" in v for v in out)

    def test_thp_not_never_flagged(self):
        for mode in ("always", "madvise", "unknown"):
            out = violations(clean_report(thp_mode=mode))
            assert any("huge pages" in v for v in out)

    def test_aslr_not_off_flagged(self):
        for state in ("partial", "full", "unknown"):
            out = violations(clean_report(aslr=state))
            assert any("randomization" in v for v in out)

    def test_strict_raises_with_all_violations(self):
        report = clean_report(smt_enabled=True, thp_mode="always", aslr="full")
        with pytest.raises(PolicyError) as exc_info:
            enforce(report, strict=True)
        assert len(exc_info.value.violations) == 3

    def test_strict_passes_clean_host(self):
        assert enforce(clean_report(), strict=True) == ()

    def test_advisory_returns_violations_as_warnings(self):
        report = clean_report(thp_mode="always", warnings=("pre-existing",))
        out = enforce(report, strict=False)
        assert any("huge pages" in w for w in out)
        assert "pre-existing" in out

    def test_governor_warning_is_not_a_violation(self):
        report = clean_report(governor="powersave")
        assert violations(report) == []
