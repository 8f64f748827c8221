"""
Error types raised by the QPL semantics toolkit.

Everything derives from ``QPLError`` (itself a ``ValueError``) so callers that
only care about "bad input" can keep catching ``ValueError``.
"""

from typing import Optional


class QPLError(ValueError):
    """Base class for all domain errors."""


class ShapeError(QPLError):
    """Matrix or block dimensions do not fit the operation."""


class SignatureMismatchError(QPLError):
    """Arrow endpoints or state signatures do not line up."""


class UnsupportedSignatureError(QPLError):
    """The operation is not available for this combination of NatLike objects."""


class NotUnitaryError(QPLError):
    """A matrix expected to be unitary is not, within tolerance."""


class NotCompletelyPositiveError(QPLError):
    """A Choi matrix has a negative eigenvalue beyond tolerance."""


class NonMonotoneIterationError(QPLError):
    """A Kleene chain stepped downwards; signals a bug in the arrow being iterated."""


class InvariantViolationError(QPLError):
    """An arrow, state or effect broke one of its structural invariants."""


class StateSpecError(QPLError):
    """A textual state specification could not be interpreted."""


class _PositionedError(QPLError):
    """Error that points at a place in a source file."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column or 0}: {message}"
        super().__init__(message)


class ParseError(_PositionedError):
    """Lexical or syntactic error in QPL source."""


class TypeCheckError(_PositionedError):
    """Typing error in a parsed QPL program."""
