"""Exception types shared across the package."""


class ModelError(ValueError):
    """A model specification violates a structural requirement."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NoImmigrationError(DomainError):
    """The operation needs an immigration/culling mechanism but mu = 0 / law is none."""


class UnsupportedRegimeError(RuntimeError):
    """The requested quantity is only defined in a parameter regime that does not hold.

    ``inequality`` names the violated condition (e.g. ``"phi_q <= varphi"``) so
    callers can surface a precise refusal instead of a silent wrong number.
    """

    def __init__(self, inequality: str, detail: str = ""):
        self.inequality = inequality
        msg = f"unsupported regime: {inequality} violated"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class PreconditionError(RuntimeError):
    """A documented precondition of an operation does not hold."""


class QuadratureError(RuntimeError):
    """A quadrature failed to certify the requested tolerance.

    Carries the last estimate and the achieved error so callers can decide
    whether to use the value anyway.
    """

    def __init__(self, message: str, estimate: float, achieved_error: float):
        self.estimate = estimate
        self.achieved_error = achieved_error
        super().__init__(f"{message} (last estimate {estimate!r}, achieved error {achieved_error:.3e})")


class AdmissibilityError(RuntimeError):
    """A control policy let the population reach the protected floor."""
