# app/errors.py


class ValidationError(ValueError):
    """Bad input: a violated precondition, a malformed file or an invalid config value."""


class ChainError(RuntimeError):
    """Numerical failure while propagating a waveform through the equipment chain."""


class DataQualityWarning(UserWarning):
    """Recoverable data problem (empty slot, empty statistics bucket)."""
