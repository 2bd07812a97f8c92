"""Exception types shared across the package."""


class LculabError(ValueError):
    """Base class for all errors raised by lculab."""


class InvalidInputError(LculabError):
    pass


class DegenerateFormulaError(LculabError):
    """Repetition numbers of a multi-product formula would collide."""


class DomainError(LculabError):
    """A bound was evaluated outside the region where it is proven."""


class UnsupportedError(LculabError):
    """The request is valid but too large for exhaustive treatment."""
