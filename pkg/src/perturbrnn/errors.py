"""Exception hierarchy shared by every module."""


class PerturbRNNError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PerturbRNNError, ValueError):
    """Invalid hyperparameters, dimensions or task settings."""


class ContractError(PerturbRNNError, ValueError):
    """Arguments violate a documented precondition (shapes, lengths, kinds)."""


class DataError(PerturbRNNError, ValueError):
    """Input data is malformed, non-finite or unparseable."""


class InstabilityError(PerturbRNNError, FloatingPointError):
    """A computation produced NaN or Inf."""


class DegenerateNoiseError(PerturbRNNError, ZeroDivisionError):
    """A clean/noisy pass pair has zero activity difference at some step."""
