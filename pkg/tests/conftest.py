from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from membench.model import AnonymousBacking, DeviceKind, DeviceProfile

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def dram_profile() -> DeviceProfile:
    return DeviceProfile(
        name="dram",
        kind=DeviceKind.DRAM,
        numa_node=0,
        backing=AnonymousBacking(),
        description="anonymous memory on node 0",
    )


@pytest.fixture
def words_4k() -> np.ndarray:
    """Zeroed word buffer holding 4096 chase nodes (256 KiB)."""
    return np.zeros(4096 * 8, dtype=np.uint64)
