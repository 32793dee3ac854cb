"""Exception types raised across the package."""


class NetdiffError(Exception):
    """Base class for all package errors."""


class InputError(NetdiffError, ValueError):
    """Invalid argument or malformed input data."""


class ExperimentError(NetdiffError, RuntimeError):
    """An experiment could not be set up (e.g. no admissible alternative seed)."""


class EstimationError(NetdiffError, RuntimeError):
    """An estimator has no qualifying observations."""


class PerturbationError(ExperimentError):
    """A seed perturbation could not be drawn."""


class NumericError(NetdiffError, ArithmeticError):
    """Numerical routine failed: non-convergence, zero variance, rank deficiency."""


class FitError(NetdiffError, RuntimeError):
    """Model fit failed or landed on an invalid optimum."""
