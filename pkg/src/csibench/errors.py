"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 2, data/format errors
exit 3, protocol errors exit 4.
"""


class CsiBenchError(Exception):
    """Base class for all toolkit errors."""


class FormatError(CsiBenchError):
    """Byte stream does not match the declared container layout."""


class TruncationError(FormatError):
    """Stream ended before the declared payload was complete."""

    def __init__(self, expected: int, actual: int, context: str = ""):
        self.expected = expected
        self.actual = actual
        where = f" in {context}" if context else ""
        super().__init__(
            f"truncated input{where}: expected {expected} bytes, got {actual}"
        )


class UnsupportedError(CsiBenchError):
    """Well-formed input using a feature this reader does not handle."""


class ShapeError(CsiBenchError):
    """Array shape is not one of the accepted forms."""


class DataError(CsiBenchError):
    """Values violate a data invariant (non-finite, out of range, empty)."""


class IoWriteError(CsiBenchError):
    """Sink failed mid-write; carries the number of bytes already written."""

    def __init__(self, bytes_written: int, cause: BaseException):
        self.bytes_written = bytes_written
        super().__init__(f"write failed after {bytes_written} bytes: {cause}")


class DimensionError(CsiBenchError):
    """Operand dimensions do not agree."""


class DegenerateDataError(CsiBenchError):
    """Training data cannot support the requested fit (missing/tiny classes)."""


class ProtocolError(CsiBenchError):
    """Dataset does not satisfy the evaluation protocol preconditions."""
