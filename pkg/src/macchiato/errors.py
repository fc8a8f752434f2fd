"""Exception and warning types raised across the package."""


class ConsensusError(Exception):
    """Base class for all package errors."""


class GridMismatchError(ConsensusError, ValueError):
    """Masks or fields defined on different grids."""


class EmptySourceMask(ConsensusError, ValueError):
    """A distance map was requested from a mask with no foreground voxel."""


class SupportError(ConsensusError, ValueError):
    """A hard candidate has foreground outside the rater union."""


class DomainError(ConsensusError, ValueError):
    """Input value outside the mathematical domain of an operation."""


class BudgetExceeded(ConsensusError, RuntimeError):
    """A brute-force oracle was asked for more work than its budget allows."""


class MaskFormatError(ConsensusError, OSError):
    """Malformed mask file, sidecar header or manifest."""


class DegenerateCountsWarning(RuntimeWarning):
    """A STAPLE parameter had a zero denominator and was clamped."""
