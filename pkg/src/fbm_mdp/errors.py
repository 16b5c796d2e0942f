"""Exception types shared across modules."""


class NumericalError(RuntimeError):
    """A computation failed for numerical reasons (exit code 3 in the CLI)."""


class FactorizationError(NumericalError):
    pass


class BlowUpError(NumericalError):
    pass


class UnreachableTargetError(NumericalError):
    pass


class StabilityError(ValueError):
    """The grid is too coarse for the requested time-scale separation."""
