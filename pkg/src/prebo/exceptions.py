"""Exception types shared across the package.

The CLI maps these onto exit codes: validation/input problems exit 3,
numerical failures exit 4 (usage errors exit 2 via argparse).
"""


class PreboError(Exception):
    """Base class for all package errors."""


class InputError(PreboError, ValueError):
    """Malformed caller input: wrong shapes, dimension mismatch, empty domain."""


class ParameterError(PreboError, ValueError):
    """Parameter vector is malformed or non-finite."""


class ValidationError(PreboError, ValueError):
    """A document or configuration failed schema/bounds validation."""


class ParseError(ValidationError):
    """A document could not be parsed; message carries path and field."""


class NoMatchingDataError(ValidationError):
    """No input locations are shared by every task in the collection."""


class DegenerateMomentsError(PreboError, ValueError):
    """Sample covariance has no numerical rank above the cutoff."""


class DomainError(PreboError, ValueError):
    """A closed-form expression was evaluated outside its valid domain."""


class NumericalError(PreboError, ArithmeticError):
    """A numerical routine failed (e.g. factorization after jitter escalation)."""

    def __init__(self, msg, jitters=None):
        super().__init__(msg)
        self.jitters = tuple(jitters) if jitters is not None else ()


class InitializationError(PreboError, RuntimeError):
    """Could not find a finite objective value at any seeded initialization."""
