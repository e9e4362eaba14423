"""Memory-hierarchy micro-benchmarks.

Dependent-load pointer-chase latency, multi-worker sequential-scan
bandwidth, sweep orchestration with resume, environment hygiene guards,
and ratio-based analysis against bundled reference numbers.

Importing the package loads every module so all record kinds are present
in the serialization registry.
"""

from . import analysis, backend, chase, cli, envguard, kernels, model, oracles, stream, sweep
from .errors import MembenchError
from .model import AccessMode, ChaseResult, ChaseSpec, DeviceProfile, StreamResult, StreamSpec

__version__ = "0.1.0"

__all__ = [
    "AccessMode",
    "ChaseResult",
    "ChaseSpec",
    "DeviceProfile",
    "MembenchError",
    "StreamResult",
    "StreamSpec",
    "analysis",
    "backend",
    "chase",
    "cli",
    "envguard",
    "kernels",
    "model",
    "oracles",
    "stream",
    "sweep",
]
