"""Exception hierarchy shared by every stage of the pipeline."""


class SsfamonError(Exception):
    """Base class for all package errors."""


class DataError(SsfamonError, ValueError):
    """Input data is malformed, degenerate or of the wrong shape."""


class NumericalError(SsfamonError, ArithmeticError):
    """A factorization or solver failed beyond tolerance."""


class DegenerateLoadingError(NumericalError):
    """A sparse loading collapsed to all zeros."""


class DegenerateSplitError(NumericalError):
    """No feature passed the system/residual selection rule."""
