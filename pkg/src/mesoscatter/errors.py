"""Exception hierarchy shared by all mesoscatter modules."""

from __future__ import annotations

from typing import Sequence


class MesoscatterError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MesoscatterError, ValueError):
    """An argument lies outside the domain of the operation (e.g. coincident points)."""


class EmptyClusterError(MesoscatterError, ValueError):
    """No particle fits inside the requested domain."""


class BornConditionError(MesoscatterError, ValueError):
    """The spectral-radius condition needed for the effective tensors fails."""


class ConvergenceError(MesoscatterError, RuntimeError):
    """An iterative procedure did not reach its tolerance.

    The residual history is kept so that callers (and the CLI) can dump it.
    """

    def __init__(self, message: str, residual_history: Sequence[float] = ()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class ConfigError(MesoscatterError, ValueError):
    """A configuration document violates its schema.

    Attributes:
        path: dotted path to the offending field, e.g. ``"wave.P"``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
