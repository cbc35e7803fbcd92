"""Quartic seasonal model for one year of weekly death counts.

The weekly count is modeled as a degree-4 polynomial of the week index
plus mean-zero noise. Coefficients are estimated by ordinary least
squares on a centered and rescaled week variable (the raw 52-week
quartic design is ill-conditioned enough to degrade naive normal
equations) and mapped back to the raw-week basis for reporting.

Residuals follow the fitted-minus-observed sign convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import ndtr

from .aggregate import AnnualWeeklySeries, StratumKey
from .errors import ConfigError, DegenerateSampleError, FitError

WEEKS = np.arange(1, 53)

N_PREDICTORS = 4  # week, week^2, week^3, week^4


@dataclass
class PolyFit:
    """Fitted quartic, residual diagnostics and goodness of fit for one year."""

    year: int
    stratum: StratumKey | None
    coefficients: np.ndarray       # (alpha, beta1..beta4) in the raw-week basis
    fitted: np.ndarray             # evaluated at weeks 1..52
    residuals: np.ndarray          # fitted - observed
    sigma: float
    adj_r2: float
    ad_stat: float
    ad_pvalue: float
    band_lo_offset: float
    band_hi_offset: float

    def predict(self, week) -> np.ndarray | float:
        """Evaluate the fitted polynomial at (possibly fractional) week values."""
        return np.polynomial.polynomial.polyval(week, self.coefficients)


def design_matrix(weeks=WEEKS) -> np.ndarray:
    """Rows (1, w, w^2, w^3, w^4) for each week."""
    return np.vander(np.asarray(weeks, dtype=float), N_PREDICTORS + 1,
                     increasing=True)


def ols_fit(series: AnnualWeeklySeries, residual_ddof: int = 0) -> PolyFit:
    """Fit the quartic seasonal model to one annual series.

    ``residual_ddof`` selects the dispersion convention: 0 divides the
    residual sum of squares by n (the default), 5 by n minus the number
    of estimated coefficients.

    Residual-degenerate series (an exact polynomial, e.g. all-constant
    counts) get ``ad_stat``/``ad_pvalue`` of NaN since a normality test
    is undefined on a zero-variance sample.
    """
    counts = np.asarray(series.counts, dtype=float)
    if counts.shape != (52,):
        raise FitError(f"series must provide 52 weekly counts, got {counts.shape}")

    # Least squares on the [-1, 1]-mapped week variable, then back to raw weeks.
    try:
        scaled = Polynomial.fit(WEEKS.astype(float), counts, N_PREDICTORS)
    except np.linalg.LinAlgError as exc:  # full-rank fixed design; guarded anyway
        raise FitError(f"singular design for year {series.year}") from exc
    coefficients = scaled.convert().coef
    if coefficients.size < N_PREDICTORS + 1:
        coefficients = np.pad(coefficients,
                              (0, N_PREDICTORS + 1 - coefficients.size))

    fitted = design_matrix() @ coefficients
    residuals = fitted - counts
    sigma = float(residuals.std(ddof=residual_ddof))
    adj_r2 = adjusted_r2(residuals, counts)

    scale = max(1.0, float(np.abs(counts).max()))
    if residuals.std(ddof=1) > 1e-9 * scale:
        ad_stat, ad_pvalue = anderson_darling(residuals)
    else:
        ad_stat, ad_pvalue = float("nan"), float("nan")

    return PolyFit(
        year=series.year,
        stratum=series.stratum,
        coefficients=coefficients,
        fitted=fitted,
        residuals=residuals,
        sigma=sigma,
        adj_r2=adj_r2,
        ad_stat=ad_stat,
        ad_pvalue=ad_pvalue,
        band_lo_offset=float(np.quantile(residuals, 0.025)),
        band_hi_offset=float(np.quantile(residuals, 0.975)),
    )


def adjusted_r2(residuals, counts, n_predictors: int = N_PREDICTORS) -> float:
    """R-squared penalized for the polynomial predictors.

    Convention for zero total variance: 1.0 when the residuals are zero
    too (a constant series fitted exactly), otherwise the statistic is
    undefined and :class:`DegenerateSampleError` is raised.
    """
    residuals = np.asarray(residuals, dtype=float)
    counts = np.asarray(counts, dtype=float)
    n = counts.size
    ss_res = float(residuals @ residuals)
    centered = counts - counts.mean()
    ss_tot = float(centered @ centered)
    # Constant series: ss_tot is zero up to rounding of the mean.
    atol = 1e-9 * max(1.0, float(np.abs(counts).max()))
    if ss_tot <= n * atol**2:
        if np.all(np.abs(residuals) <= atol):
            return 1.0
        raise DegenerateSampleError("zero count variance with nonzero residuals")
    r2 = 1.0 - ss_res / ss_tot
    return 1.0 - (1.0 - r2) * (n - 1) / (n - n_predictors - 1)


def anderson_darling(values) -> tuple[float, float]:
    """Normality test with estimated mean and variance.

    Returns the A^2 statistic and a p-value obtained by applying the
    small-sample modification A*^2 = A^2 (1 + 0.75/n + 2.25/n^2) and the
    piecewise-exponential approximation for the estimated-parameters
    case.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n < 8:
        raise DegenerateSampleError(f"need at least 8 observations, got {n}")
    sd = x.std(ddof=1)
    if sd == 0.0:
        raise DegenerateSampleError("zero-variance sample")
    z = ndtr((x - x.mean()) / sd)
    z = np.clip(z, 1e-300, 1.0 - 1e-16)
    i = np.arange(1, n + 1)
    a2 = -n - float(np.mean((2 * i - 1) * (np.log(z) + np.log1p(-z[::-1]))))
    a2_star = a2 * (1.0 + 0.75 / n + 2.25 / n**2)
    return a2, _ad_pvalue(a2_star)


def _ad_pvalue(a2_star: float) -> float:
    if a2_star < 0.2:
        return 1.0 - float(np.exp(-13.436 + 101.14 * a2_star - 223.73 * a2_star**2))
    if a2_star < 0.34:
        return 1.0 - float(np.exp(-8.318 + 42.796 * a2_star - 59.938 * a2_star**2))
    if a2_star < 0.6:
        return float(np.exp(0.9177 - 4.279 * a2_star - 1.38 * a2_star**2))
    if a2_star <= 13.0:
        return float(np.exp(1.2937 - 5.709 * a2_star + 0.0186 * a2_star**2))
    return 0.0


def confidence_band(fit: PolyFit, level: float = 0.95) -> np.ndarray:
    """Per-week (lo, hi) band from residual quantiles around the fitted curve.

    Quantiles use linear interpolation between order statistics.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"band level must be in (0, 1), got {level}")
    q_lo = np.quantile(fit.residuals, (1.0 - level) / 2.0)
    q_hi = np.quantile(fit.residuals, (1.0 + level) / 2.0)
    return np.column_stack((fit.fitted + q_lo, fit.fitted + q_hi))
