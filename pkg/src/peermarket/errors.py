"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data violates a documented invariant or format rule."""


class InfeasibleError(ValidationError):
    """No market equilibrium exists for the given bounds."""
