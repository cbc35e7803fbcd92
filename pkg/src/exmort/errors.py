"""Exception types shared across the package."""


class ExmortError(Exception):
    """Base class for all package errors."""


class ConfigError(ExmortError):
    """Invalid configuration: bad schema, empty year range, bad CI level, ..."""


class IngestError(ExmortError):
    """Unreadable or structurally broken input stream."""


class FitError(ExmortError):
    """Least-squares fit could not be computed (singular or degenerate system)."""


class DegenerateSampleError(ExmortError):
    """A statistic is undefined for the given sample (e.g. zero variance)."""


class TrendError(ExmortError):
    """Parameter trend cannot be estimated (too few reference years)."""


class EstimateError(ExmortError):
    """Excess estimate cannot be formed (mismatched inputs, missing years)."""


class DenominatorError(EstimateError):
    """No population denominator resolvable for a requested (period, stratum)."""
