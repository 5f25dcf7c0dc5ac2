"""Typed errors shared across the px3d pipeline.

Every failure a caller can act on has its own class so the CLI can map
data-level problems to a distinct exit code and tests can assert on the
exact failure mode instead of matching message strings.
"""


class Px3dError(Exception):
    """Base class for all px3d data and pipeline errors."""


class ContainerError(Px3dError):
    """Base class for binary container problems."""


class BadMagic(ContainerError):
    def __init__(self, found: bytes, expected: bytes, offset: int = 0):
        self.found = found
        self.expected = expected
        self.offset = offset
        super().__init__(
            f"bad magic at byte {offset}: expected {expected!r}, found {found!r}"
        )


class UnsupportedVersion(ContainerError):
    def __init__(self, version: int, supported: int, offset: int):
        self.version = version
        self.offset = offset
        super().__init__(
            f"unsupported container version {version} at byte {offset} "
            f"(supported: {supported})"
        )


class TruncatedPayload(ContainerError):
    def __init__(self, offset: int, needed: int, available: int):
        self.offset = offset
        self.needed = needed
        self.available = available
        super().__init__(
            f"truncated payload at byte {offset}: need {needed} bytes, "
            f"{available} available"
        )


class DimensionMismatch(ContainerError):
    pass


class InvariantViolation(ContainerError):
    pass


class IoFailure(ContainerError):
    pass


class GridMismatch(Px3dError):
    """Pixel dimensions are not an integer multiple of the patch grid."""


class BudgetTooSmall(Px3dError):
    """Token budget cannot grant every group its minimum proxy count."""


class KOutOfRange(Px3dError):
    """Requested center count outside [1, group size]."""


class OrderMismatch(Px3dError):
    """Serialization order is not a permutation of the group labels present."""


class OddChannels(Px3dError):
    """Rotary encoding requires an even channel count."""


class DivergenceDetected(Px3dError):
    """Training loss became non-finite."""


class IndexOutOfRange(Px3dError):
    """Identifier or category index outside the registry range."""


class ParseError(Px3dError):
    """Text does not match the object token format."""


class ShapeMismatch(Px3dError):
    """Loss input arrays violate their declared shape contract."""


class UnknownLabel(Px3dError):
    """A referenced label does not exist in the scene."""


class PlacementFailure(Px3dError):
    """Synthetic object placement failed after bounded retries."""


class UsageError(Px3dError):
    """Bad command line arguments (exit code 1, not a data error)."""
