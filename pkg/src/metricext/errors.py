"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class MetricExtError(Exception):
    """Base class for all library errors."""


class DomainError(MetricExtError, ValueError):
    """A parameter lies outside its mathematical domain (e.g. t not in [0, 1])."""


class DegenerateInputError(MetricExtError, ValueError):
    """Input is too small or too flat for the requested construction."""


class ConfigError(MetricExtError, ValueError):
    """Inconsistent extension configuration."""


class ValidationError(MetricExtError, ValueError):
    """Input data violates a structural requirement.

    ``witness`` holds the ids that reproduce the violation, when there are any.
    """

    def __init__(self, message: str, witness: tuple = ()):
        super().__init__(message)
        self.witness = tuple(witness)


class PreconditionError(MetricExtError, ValueError):
    """A verification check was asked to run outside its precondition."""
