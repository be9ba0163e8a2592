"""Exception types shared across the package.

Each operation's contract names the error it raises; keeping them as one
flat family makes CLI exit-code mapping trivial (validation vs runtime).
"""


class DccfrError(Exception):
    """Base class for all package errors."""


class ValidationError(DccfrError):
    """Bad input or configuration (CLI exit code 2)."""


# --- trace ingestion / synthesis ---

class MalformedRow(ValidationError):
    pass


class NonUniformSpacing(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class EmptyFile(ValidationError):
    pass


class IncompatibleStep(ValidationError):
    pass


class WrongKind(ValidationError):
    pass


class BadDays(ValidationError):
    pass


# --- simulation ---

class BadUtilization(ValidationError):
    pass


class ConfigInvalid(ValidationError):
    pass


class InvalidAction(DccfrError):
    pass


class MaskedAction(DccfrError):
    pass


class Empty(DccfrError):
    pass


# --- networks / training ---

class ShapeMismatch(DccfrError):
    pass


class NonFinite(DccfrError):
    pass


class AllMasked(DccfrError):
    pass


class LengthMismatch(DccfrError):
    pass


class EmptyBuffer(DccfrError):
    pass


class NonFiniteLoss(DccfrError):
    pass


# --- harness ---

class MissingRuns(ValidationError):
    pass


class NoTrace(ValidationError):
    pass


class IoError(DccfrError):
    pass
