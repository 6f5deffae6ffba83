"""Exception hierarchy shared by all modules.

Numerical failures derive from :class:`NumericalError` so the command line
front end can map them to a distinct exit status.
"""


class HoinferError(Exception):
    """Base class for all package errors."""


class ValidationError(HoinferError, ValueError):
    """Invalid user input: bad shapes, unknown names, inconsistent options."""


class NumericalError(HoinferError, ArithmeticError):
    """A computation could not be carried out reliably."""


class DomainError(NumericalError):
    """Evaluation outside the parameter or sample-space domain."""


class SingularInformationError(NumericalError):
    """An information block that must be inverted is singular.

    Parameters
    ----------
    block : str
        Name of the offending block, e.g. ``"j_lambda_lambda"``.
    """

    def __init__(self, block: str, detail: str = ""):
        self.block = block
        msg = f"singular information block {block}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class SingularZoneError(NumericalError):
    """The likelihood root is too close to zero for the tail formulas."""


class InvalidCorrectionError(NumericalError):
    """The higher-order correction is undefined (e.g. r and q of opposite sign)."""


class UnsupportedVariantError(HoinferError, NotImplementedError):
    """Requested computation needs ingredients that were not supplied."""


class AdjustmentUndefinedError(NumericalError):
    """A determinant inside an adjustment factor is not positive."""


class ProfileFailureError(NumericalError):
    """Too many grid points failed while building a profile."""


class ExtendGridError(NumericalError):
    """The significance curve does not reach the requested level on the grid.

    Parameters
    ----------
    needed : tuple of float
        Suggested ``(psi_low, psi_high)`` span on the working scale.
    """

    def __init__(self, message: str, needed: tuple[float, float]):
        self.needed = needed
        super().__init__(f"{message}; extend the grid to cover [{needed[0]:.6g}, {needed[1]:.6g}]")


class BridgeError(NumericalError):
    """Not enough non-singular grid points to bridge the singular window."""


class SamplerTuningError(NumericalError):
    """The conditional sampler could not reach a usable acceptance rate."""


class SampleSizeError(ValidationError):
    """Too few retained draws for the requested summary."""


class StudyIntegrityError(NumericalError):
    """Too many per-draw refits failed in a Monte Carlo study."""


class BudgetExceededError(NumericalError):
    """A brute-force or quadrature computation exceeded its work budget.

    Parameters
    ----------
    estimate : float or None
        Best estimate reached before giving up, when available.
    """

    def __init__(self, message: str, estimate: float | None = None):
        self.estimate = estimate
        super().__init__(message)
