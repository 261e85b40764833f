"""Exception taxonomy shared across the package.

Every failure mode the CLI maps to an exit code has a class here, so callers
can catch a single family (`DecohistError`) or discriminate precisely.
"""

from __future__ import annotations


class DecohistError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(DecohistError, ValueError):
    """A physical or configuration parameter violates its constraints."""


class KindError(ParameterError):
    """System kind / omega combination is inconsistent (e.g. free with omega != 0)."""


class CausticError(ParameterError):
    """Oscillator phase omega*T at or beyond a caustic (sin or cos(omega*T/2) ~ 0)."""


class OutOfRangeError(ParameterError):
    """History label alpha outside the declared coarse-graining range."""


class DomainError(ParameterError):
    """Special-function argument outside the declared accuracy domain."""


class GridError(DecohistError):
    """Grid mismatch or grid too small for the requested evolution.

    `suggestion` (when set) carries recommended half-widths {"Lx": ..., "LX": ...}.
    """

    def __init__(self, message, suggestion=None):
        super().__init__(message)
        self.suggestion = suggestion


class BudgetError(DecohistError):
    """Node budget exhausted before convergence; carries the partial estimate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateError(DecohistError):
    """All branches numerically empty; no meaningful decoherence metric."""


class ValidationError(DecohistError):
    """Scenario failed validation; `issues` is a machine-readable list of strings."""

    def __init__(self, issues):
        super().__init__("; ".join(issues))
        self.issues = list(issues)
