"""Exception hierarchy shared by all membench modules."""


class MembenchError(Exception):
    """Base class for all errors raised by this package."""


class PrivilegeError(MembenchError):
    """A device file or backing store could not be opened."""


class ExhaustedError(MembenchError):
    """Allocation, mapping, or NUMA binding failed."""


class RangeError(MembenchError):
    """A requested range exceeds the backing device's extent."""


class AffinityError(MembenchError):
    """The platform refused a CPU affinity request."""


class StateError(MembenchError):
    """An operation was applied to a handle in the wrong state."""


class SizeError(MembenchError):
    """A buffer is too small for the requested layout."""


class ClockError(MembenchError):
    """The monotonic timer is too coarse for the requested duration."""


class TopologyError(MembenchError):
    """Worker placement is incompatible with the host topology."""


class PolicyError(MembenchError):
    """Strict environment policy refused to run; lists the violations."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("environment policy violated: " + "; ".join(self.violations))


class MissingMetricError(MembenchError):
    """A requested metric is absent from one of the compared result sets."""


class ShortSeriesError(MembenchError):
    """A series has fewer points than the requested tail."""


class EmptySeriesError(MembenchError):
    """An operation requires a non-empty series."""


class SweepPointError(MembenchError):
    """A sweep measurement failed; carries the failing point and mode."""

    def __init__(self, point: int, mode: str, cause: BaseException):
        self.point = point
        self.mode = mode
        super().__init__(f"sweep point {point} ({mode}) failed: {cause}")
