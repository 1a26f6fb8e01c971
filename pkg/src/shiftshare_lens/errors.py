"""Exception hierarchy shared by all modules.

Two families matter for the CLI exit codes: ``DataError`` covers anything
wrong with the inputs themselves (malformed files, invalid configurations),
``EstimationError`` covers numerically or statistically degenerate situations
detected while estimating. Every concrete class carries a stable ``code``
string that also appears in machine-readable reports.
"""

from __future__ import annotations


class ShiftShareError(Exception):
    """Base class for all library errors."""

    code = "Error"

    def __init__(self, message: str = "", **context):
        self.context = context
        if context:
            detail = ", ".join(f"{k}={v!r}" for k, v in sorted(context.items()))
            message = f"{message} ({detail})" if message else detail
        super().__init__(message)


class DataError(ShiftShareError):
    """Input data or configuration is unusable (CLI exit code 1)."""

    code = "DataError"


class EstimationError(ShiftShareError):
    """Estimation cannot proceed on otherwise valid data (CLI exit code 2)."""

    code = "EstimationError"


# --- data / loading -------------------------------------------------------

class MissingColumn(DataError):
    code = "MissingColumn"


class DuplicateKey(DataError):
    code = "DuplicateKey"


class NonFinite(DataError):
    code = "NonFinite"


class UnknownIdentifier(DataError):
    code = "UnknownIdentifier"


class UnbalancedPanel(DataError):
    code = "UnbalancedPanel"


class InvalidConfig(DataError):
    code = "InvalidConfig"


# --- estimation -----------------------------------------------------------

class DimensionMismatch(EstimationError):
    code = "DimensionMismatch"


class CollinearRegressor(EstimationError):
    code = "CollinearRegressor"


class WeakDenominator(EstimationError):
    code = "WeakDenominator"


class ZeroDenominator(EstimationError):
    code = "ZeroDenominator"


class LevelMismatch(EstimationError):
    code = "LevelMismatch"


class WrongSpec(EstimationError):
    code = "WrongSpec"


class AllZeroVariance(EstimationError):
    code = "AllZeroVariance"


class SingularDesign(EstimationError):
    code = "SingularDesign"


class TooFewPeriods(EstimationError):
    code = "TooFewPeriods"


class DegenerateInstrument(EstimationError):
    code = "DegenerateInstrument"


class NonPositiveLevel(EstimationError):
    code = "NonPositiveLevel"


class AllMassInOneLocation(EstimationError):
    code = "AllMassInOneLocation"


class PerLocationShocksUnsupported(EstimationError):
    code = "PerLocationShocksUnsupported"


class RankDeficientCovariates(EstimationError):
    code = "RankDeficientCovariates"


class ShocksNotZeroAtPrePeriod(EstimationError):
    code = "ShocksNotZeroAtPrePeriod"


class EstimatorFailedInDraw(EstimationError):
    code = "EstimatorFailedInDraw"


class NoiseNotZero(EstimationError):
    code = "NoiseNotZero"


class ShiftShareWarning(UserWarning):
    """Non-fatal data quirks (missing share cells, near-zero pre-period shocks)."""
