"""
Workbench Errors - Exception family shared by the core and the command layer.

Every error carries the process exit code the CLI reports for it.
"""


class WorkbenchError(Exception):
    """Base class for all workbench failures."""

    exit_code: int = 3


class ConfigError(WorkbenchError, ValueError):
    """Invalid parameter value or cross-field violation."""

    exit_code = 2


class DimensionError(WorkbenchError, ValueError):
    """Shape mismatch between arrays, datasets or checkpoints."""

    exit_code = 3


class NumericError(WorkbenchError, ArithmeticError):
    """Non-finite value produced by a loss, gradient or function evaluation."""

    exit_code = 3


class InvariantError(WorkbenchError, ValueError):
    """A model invariant does not hold (unit-norm atoms, parameter presence, sizes)."""

    exit_code = 3


class NoEligibleSampleError(WorkbenchError, ValueError):
    """Every sample was skipped by a support-restricted metric."""

    exit_code = 3


class FormatError(WorkbenchError, ValueError):
    """Malformed checkpoint, activation container or IDX file."""

    exit_code = 4


def shape_mismatch(what: str, left, right) -> DimensionError:
    """
    Build a DimensionError reporting both shapes.

    Args:
        what: Short description of the operation
        left: Shape (or length) of the first operand
        right: Shape (or length) of the second operand

    Returns:
        DimensionError ready to raise
    """
    return DimensionError(f"{what}: shape mismatch {tuple(_as_shape(left))} vs {tuple(_as_shape(right))}")


def _as_shape(value) -> tuple:
    if isinstance(value, int):
        return (value,)
    return tuple(value)
