"""
Exception hierarchy for the climbing pipeline.

Every error carries the process exit code the CLI reports for it, so a
failure deep inside a service surfaces as a distinct, machine-parseable
record without the CLI having to know where it came from.
"""
from typing import Any, Dict


class AdvClimbError(Exception):
    """Base class for all pipeline failures."""

    exit_code: int = 1

    def to_record(self) -> Dict[str, Any]:
        """Serializable error record for stderr / summaries."""
        return {
            "error": str(self),
            "type": type(self).__name__,
            "exit_code": self.exit_code,
        }


class ShapeMismatchError(AdvClimbError, ValueError):
    """Operand extents disagree."""

    exit_code = 5


class GraphError(AdvClimbError):
    """A requested gradient target does not participate in the graph."""

    exit_code = 5


class NonFiniteError(AdvClimbError, ArithmeticError):
    """NaN or Inf appeared in values or gradients."""

    exit_code = 5


class LabelError(AdvClimbError, ValueError):
    """Invalid label vector, class id, or label cardinality."""

    exit_code = 4


class PlacementError(AdvClimbError):
    """The scene generator could not place an object."""

    exit_code = 5


class TensorFormatError(AdvClimbError, ValueError):
    """Malformed ATNS blob or image file."""

    exit_code = 6

    def __init__(self, message: str, path: str = "<memory>", offset: int = 0) -> None:
        super().__init__(f"{path} @ byte {offset}: {message}")
        self.path = path
        self.offset = offset


class ConfigContradictionError(AdvClimbError, ValueError):
    """Flags or inputs that cannot be satisfied together."""

    exit_code = 4


class MissingInputError(AdvClimbError, FileNotFoundError):
    """A required input path does not exist."""

    exit_code = 3
