"""Exception types shared across the package."""

from __future__ import annotations


class ChainError(Exception):
    """Base class for every error raised by worldchain."""


class InvalidInputError(ChainError, ValueError):
    """An argument or file violates a documented precondition."""

    def __init__(self, message: str, location: str | None = None) -> None:
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class ZeroStateError(ChainError, ArithmeticError):
    """A vector that must be normalized is numerically zero."""


class PVMRequiredError(ChainError):
    """Projector retrodiction was asked for a chain whose families are not all PVMs."""


class RecursionBlockedError(ChainError):
    """Recursive retrodiction hit an intermediate state that is not a product branch."""
