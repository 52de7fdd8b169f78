"""Exception hierarchy shared across the toolkit."""


class FacelabError(Exception):
    """Base class for all toolkit errors."""


class DataError(FacelabError):
    """Malformed input data: bad files, dimension mismatches, invalid datasets."""


class NumericError(FacelabError):
    """Numerical failure: non-convergence, degenerate spectra, underflow."""


class SingularOrIndefinite(NumericError):
    """Cholesky factorization hit a non-positive pivot."""
