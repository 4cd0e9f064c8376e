"""
Error types shared by the simulator, the spectral estimator and the CLI.

Every error is also a built-in ``ValueError`` or ``RuntimeError`` so callers
that only know the built-ins keep working. The CLI maps these to exit codes:
configuration/model problems exit 2, capacity problems exit 3.
"""


class LevyEstimationError(Exception):
    """Base class for every error raised by this package."""


class InvalidModelError(LevyEstimationError, ValueError):
    """A Lévy model description violates its invariants (PSD, positivity, partition)."""


class InvalidInputError(LevyEstimationError, ValueError):
    """Data handed to an operation is unusable (empty sample, non-finite values, bad test function)."""


class ConfigurationError(LevyEstimationError, ValueError):
    """Grids, kernels or estimator settings are inconsistent with each other."""


class DomainError(LevyEstimationError, ValueError):
    """A formula was evaluated outside the range where it is defined."""


class CapacityError(LevyEstimationError, RuntimeError):
    """The request would exceed the numeric or memory capacity we support."""
