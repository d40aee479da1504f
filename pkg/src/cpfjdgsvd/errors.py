"""Exception types raised across the package."""


class InputError(ValueError):
    """Bad argument: wrong dimensions, invalid sizes, out-of-range parameters."""


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class RankDeficiencyError(ArithmeticError):
    """A column appended to a thin QR factorization is (numerically) dependent."""


class DegeneratePairError(ArithmeticError):
    """The stacked matrix [G; H] of a small pair is numerically rank deficient."""


class RegularityError(ArithmeticError):
    """The pair (A, B) is not regular, i.e. N(A) and N(B) intersect."""
