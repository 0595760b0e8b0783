"""Exception hierarchy shared by every amopt module."""


class AmoptError(Exception):
    """Base class for all library errors."""


class ShapeError(AmoptError, ValueError):
    pass


class ParameterError(AmoptError, ValueError):
    pass


class DataError(AmoptError, ValueError):
    pass


class EnrichmentError(DataError):
    """Rate or volatility series do not cover some (date, bucket) pairs."""

    def __init__(self, gaps):
        self.gaps = sorted(gaps)
        shown = ", ".join(f"{d}/{b}" for d, b in self.gaps[:20])
        more = "" if len(self.gaps) <= 20 else f" (+{len(self.gaps) - 20} more)"
        super().__init__(f"missing rate/vol for {len(self.gaps)} (date, bucket) pairs: {shown}{more}")


class NumericError(AmoptError, ArithmeticError):
    pass


class OracleError(NumericError):
    pass


class MetricError(AmoptError, ValueError):
    pass
