"""Exception hierarchy shared by all caplab modules.

The CLI maps these onto exit codes: ``InapplicableError`` -> 2,
``NonConvergenceError`` -> 3, ``ConfigError`` -> 1.
"""


class CaplabError(Exception):
    """Base class for library errors."""


class DomainError(CaplabError, ValueError):
    """An argument lies outside the validity interval of a profile."""


class RegimeError(CaplabError):
    """Ellipticity was lost during a computation."""


class NonConvergenceError(CaplabError):
    """An iterative method failed to meet its tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class InapplicableError(CaplabError):
    """A hypothesis required by a check does not hold on the given data."""

    def __init__(self, message, failed=None):
        super().__init__(message)
        self.failed = dict(failed) if failed else {}


class ConfigError(CaplabError, ValueError):
    """Malformed configuration or unknown registry name."""
