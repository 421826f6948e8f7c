"""Exception hierarchy shared by all catres modules."""


class CatresError(Exception):
    """Base class for every error raised by catres."""


class ConfigurationError(CatresError, ValueError):
    """Invalid parameters, unknown mode labels or malformed config."""


class ShapeError(CatresError, ValueError):
    """Operands live on different layouts or have the wrong shape."""


class LayoutError(ConfigurationError):
    """A builder received a layout with the wrong set of modes."""


class TruncationError(CatresError, ValueError):
    """A state does not fit in the truncated Fock space."""

    def __init__(self, message, required_dim=None):
        super().__init__(message)
        self.required_dim = required_dim


class ContractError(CatresError, ValueError):
    """A precondition on an operator (e.g. Hermiticity) does not hold."""


class IntegrationError(CatresError, RuntimeError):
    """Time integration could not meet its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SubstepError(IntegrationError):
    """Requested substep is too coarse for the fastest term frequency."""

    def __init__(self, message, required=None):
        super().__init__(message, achieved=None)
        self.required = required


class ConditioningError(CatresError, ValueError):
    """Coherent-state basis is too close to degenerate to fit."""


class RegimeWarning(UserWarning):
    """Parameters fall outside the regime where the reduced models hold."""


class NumericalToleranceError(CatresError, RuntimeError):
    """An experiment finished but a recorded tolerance was violated."""
