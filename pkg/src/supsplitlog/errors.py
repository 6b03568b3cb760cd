"""Exception types shared across the package."""

from __future__ import annotations


class ConfigurationError(ValueError):
    """Invalid hyperparameters or experiment configuration."""


class UsageError(ValueError):
    """An operation was called with arguments that violate its contract."""


class AuditError(AssertionError):
    """A deterministic invariant was violated during an audited run."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
