"""Exception types shared across the toolkit."""


class ParseError(ValueError):
    """A task document could not be parsed."""


class ValidationError(ValueError):
    """A parsed task document violates an invariant.

    ``path`` points at the offending field, e.g. ``joints[2].axes``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class GimbalLock(ValueError):
    """Euler extraction requested within 1e-6 of the pitch singularity.

    Callers holding a rotation matrix should keep using it instead of the
    Euler triple.
    """


class SingularMass(RuntimeError):
    """Mass matrix lost positive definiteness (bad morphology parameters)."""


class NumericalBlowup(RuntimeError):
    """Integration produced velocities beyond 1e6; episode must terminate."""


class LayoutMismatch(ValueError):
    """An augmentation kind was applied to an incompatible feature layout."""
