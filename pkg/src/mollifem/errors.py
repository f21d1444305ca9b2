"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its required accuracy."""


class NonTerminationError(NumericalError):
    """An adaptive loop hit its iteration cap before meeting its tolerance."""
