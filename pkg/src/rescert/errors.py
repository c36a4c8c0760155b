"""Exception types shared across the package."""

from __future__ import annotations


class RescertError(Exception):
    """Base class for all package errors."""


class ParseError(RescertError):
    """Malformed expression text. ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        pointer = ""
        if text:
            pointer = "\n  " + text + "\n  " + " " * position + "^"
        super().__init__(f"{message} (at position {position}){pointer}")


class EvaluationDomainError(RescertError):
    """An expression was evaluated outside its domain (1/0, sqrt(<0), overflow)."""


class NotDifferentiableError(RescertError):
    """Symbolic differentiation reached a non-smooth node (min/max)."""


class ConfigError(RescertError):
    """Invalid system or run configuration. ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(prefix + message)


class NetFormatError(RescertError):
    """Malformed or incompatible network file."""


class TrainingError(RescertError):
    """Training failed: rank deficiency, failed initialisation, divergence."""


class OracleError(RescertError):
    """Ground-truth computation failed (non-convergent trajectory, step underflow)."""


class PreconditionError(RescertError):
    """A verifier entry point was called with unmet preconditions."""
