"""Exception types shared across the platform."""


class SplitLabError(Exception):
    """Base class for all platform errors."""


class ValidationFailure(SplitLabError):
    """A precondition or domain invariant was violated by the caller."""


class ConflictError(SplitLabError):
    """A uniqueness constraint was violated (duplicate key, name, decision)."""


class NotFoundError(SplitLabError):
    """A referenced entity (experiment, metric, method) does not exist."""


class StateError(SplitLabError):
    """An operation was attempted in an illegal lifecycle state."""

    def __init__(self, message: str, current_status: str | None = None):
        super().__init__(message)
        self.current_status = current_status


class FrozenError(SplitLabError):
    """A mutation was attempted on an immutable (frozen) value."""


class OffsetRangeError(SplitLabError):
    """A log read was requested beyond the current head."""


class SegmentReadError(SplitLabError):
    """A log segment could not be read; batch runs must not skip data."""

    def __init__(self, segment: str, cause: Exception | None = None):
        super().__init__(f"unreadable log segment: {segment}" + (f" ({cause})" if cause else ""))
        self.segment = segment


class DegenerateDataError(SplitLabError):
    """The data carries no information for the requested statistic."""


class InsufficientSampleError(SplitLabError):
    """Too few observations to compute the requested statistic."""


class WatermarkMismatchError(SplitLabError):
    """Two snapshot sets cover different watermarks and cannot be compared."""

    def __init__(self, rt_watermark: int, batch_watermark: int):
        super().__init__(
            f"watermark mismatch: rt snapshots at {rt_watermark}, "
            f"batch snapshots at {batch_watermark}"
        )
        self.rt_watermark = rt_watermark
        self.batch_watermark = batch_watermark
