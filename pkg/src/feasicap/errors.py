"""Exception types shared by more than one module.

Module-specific errors (URDF parsing, codec, transport, ...) live next to
the code that raises them; everything derives from FeasicapError.
"""


class FeasicapError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(FeasicapError):
    """A joint vector's length does not match the model's dof."""


class NonFiniteInput(FeasicapError):
    """NaN or infinity where a finite value is required."""


class DegenerateTimestamps(FeasicapError):
    """Timestamps are not strictly increasing (some interval <= 0)."""
