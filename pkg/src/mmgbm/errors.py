"""Exception hierarchy shared by all mmgbm modules."""


class MMGBMError(Exception):
    """Base class for every error raised by this package."""


# configuration / validation

class ValidationError(MMGBMError, ValueError):
    pass


class NonConservativeRateMatrix(ValidationError):
    pass


class NegativeOffDiagonal(ValidationError):
    pass


class NonpositiveVolatility(ValidationError):
    pass


class ParseError(MMGBMError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# simulation / lookup

class OutOfRange(MMGBMError, ValueError):
    pass


class OutOfDomain(MMGBMError, ValueError):
    pass


# numerics

class NumericalError(MMGBMError, ArithmeticError):
    pass


class StabilityViolation(NumericalError):
    pass


class DegenerateDenominator(NumericalError):
    pass


class FixedPointDivergence(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


# implied volatility

class ArbitrageError(MMGBMError, ValueError):
    """Option price outside the no-arbitrage interval ((s - K e^{-r tau})^+, s)."""


class PriceBelowIntrinsic(ArbitrageError):
    pass


class PriceAboveSpot(ArbitrageError):
    pass


class NonpositiveTTM(MMGBMError, ValueError):
    pass


# statistics / recovery

class EmptyBucket(MMGBMError, ValueError):
    pass


class ClusteringAmbiguous(MMGBMError):
    pass
