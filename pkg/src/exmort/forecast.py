"""Baseline forecasting: linear trends of the fitted parameters.

Each of the five polynomial coefficients and the residual dispersion is
given its own least-squares line over the reference years. Forecast
years get their parameters from those lines; the partial week 53 is
scaled by its day count and corrected with a bias factor estimated from
the reference years.
"""

from __future__ import annotations

import calendar
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .aggregate import AnnualWeeklySeries, StratumKey
from .errors import EstimateError, TrendError
from .seasonal import PolyFit, design_matrix, ols_fit

PARAMETERS = ("alpha", "beta1", "beta2", "beta3", "beta4", "sigma")


@dataclass(frozen=True)
class ParamTrend:
    """Least-squares line (value = slope * year + intercept) for one parameter."""

    parameter: str
    slope: float
    intercept: float
    reference_years: tuple[int, int]
    n_years: int
    mean_year: float
    year_ss: float      # sum of squared year deviations, used for leverage
    scatter: float      # RMS deviation of the parameter values around the line

    def predict(self, year: int | float) -> float:
        return self.slope * year + self.intercept

    def leverage(self, year: int | float) -> float:
        """Prediction leverage 1/n + (year - mean)^2 / Syy of the trend line."""
        return 1.0 / self.n_years + (year - self.mean_year) ** 2 / self.year_ss


@dataclass
class BiasFactorResult:
    """Week-53 bias correction with the years excluded from its average."""

    value: float
    excluded_years: tuple[int, ...]

    def __float__(self) -> float:
        return self.value


@dataclass
class BaselineForecast:
    """Trend-extrapolated parameters and expected weekly deaths for one year."""

    year: int
    stratum: StratumKey | None
    coefficients: np.ndarray
    sigma_forecast: float
    expected: np.ndarray
    expected_week53: float
    bias_factor: float
    leap: bool
    sigma_clamped: bool = False


def _line(years: np.ndarray, values: np.ndarray) -> tuple[float, float, float, float, float]:
    mean_year = years.mean()
    dev = years - mean_year
    year_ss = float(dev @ dev)
    slope = float(dev @ (values - values.mean()) / year_ss)
    intercept = float(values.mean() - slope * mean_year)
    scatter = float(np.sqrt(np.mean((values - (slope * years + intercept)) ** 2)))
    return slope, intercept, float(mean_year), year_ss, scatter


def fit_param_trends(fits: Sequence[PolyFit]) -> dict[str, ParamTrend]:
    """One least-squares line per parameter over the reference-year fits."""
    if len(fits) < 3:
        raise TrendError(f"need at least 3 reference years, got {len(fits)}")
    ordered = sorted(fits, key=lambda f: f.year)
    years = np.array([f.year for f in ordered], dtype=float)
    if len(set(years)) != len(years):
        raise TrendError("duplicate reference years")
    span = (ordered[0].year, ordered[-1].year)

    trends: dict[str, ParamTrend] = {}
    for index, name in enumerate(PARAMETERS):
        if name == "sigma":
            values = np.array([f.sigma for f in ordered])
        else:
            values = np.array([f.coefficients[index] for f in ordered])
        slope, intercept, mean_year, year_ss, scatter = _line(years, values)
        trends[name] = ParamTrend(name, slope, intercept, span,
                                  len(ordered), mean_year, year_ss, scatter)
    return trends


def alpha_growth_rate(trend: ParamTrend, year: int) -> float:
    """Yearly percentage increase of the baseline shift parameter.

    100 * slope / (slope * year + intercept).
    """
    level = trend.predict(year)
    if level == 0.0:
        raise EstimateError(f"trend level is zero at year {year}")
    return 100.0 * trend.slope / level


def week53_day_count(leap: bool) -> int:
    return 2 if leap else 1


def bias_factor(reference: Sequence[tuple[AnnualWeeklySeries, PolyFit]]) -> BiasFactorResult:
    """Average observed/expected ratio for the partial week 53.

    The expectation for a year is its own fitted curve evaluated at week
    53, scaled by the week's day count over 7. Years whose fitted value
    at week 53 is non-positive are excluded and reported.
    """
    ratios = []
    excluded = []
    for series, fit in reference:
        predicted = float(fit.predict(53.0))
        if predicted <= 0.0:
            excluded.append(series.year)
            continue
        ell = week53_day_count(series.leap)
        ratios.append(series.week53_count / (predicted * ell / 7.0))
    if not ratios:
        raise EstimateError("no reference year has a positive fitted value at week 53")
    return BiasFactorResult(float(np.mean(ratios)), tuple(excluded))


def forecast_year(trends: Mapping[str, ParamTrend],
                  bias: float | BiasFactorResult,
                  year: int,
                  leap: bool | None = None,
                  stratum: StratumKey | None = None) -> BaselineForecast:
    """Expected weekly deaths for a year, from the parameter trend lines.

    A negative extrapolated dispersion is clamped to zero with a warning.
    """
    missing = [name for name in PARAMETERS if name not in trends]
    if missing:
        raise EstimateError(f"missing parameter trends: {missing}")
    if leap is None:
        leap = calendar.isleap(year)
    b = float(bias)

    coefficients = np.array([trends[name].predict(year) for name in PARAMETERS[:5]])
    sigma_forecast = trends["sigma"].predict(year)
    sigma_clamped = sigma_forecast < 0.0
    if sigma_clamped:
        warnings.warn(f"extrapolated sigma {sigma_forecast:.6g} at year {year} "
                      f"clamped to 0", stacklevel=2)
        sigma_forecast = 0.0

    expected = design_matrix() @ coefficients
    ell = week53_day_count(leap)
    expected_week53 = float(np.polynomial.polynomial.polyval(53.0, coefficients)
                            * (ell / 7.0) * b)
    return BaselineForecast(
        year=year,
        stratum=stratum,
        coefficients=coefficients,
        sigma_forecast=float(sigma_forecast),
        expected=expected,
        expected_week53=expected_week53,
        bias_factor=b,
        leap=leap,
        sigma_clamped=sigma_clamped,
    )


def backtest_year(series_by_year: Mapping[int, AnnualWeeklySeries],
                  reference_years: Sequence[int],
                  held_out: int,
                  residual_ddof: int = 0,
                  stratum: StratumKey | None = None) -> BaselineForecast:
    """Forecast a held-out reference year from the remaining ones.

    Validation aid: contrasting the result against the held-out year's
    observed series measures how well the trend extrapolation does
    inside the reference period.
    """
    if held_out not in reference_years:
        raise EstimateError(f"{held_out} is not a reference year")
    remaining = [year for year in reference_years if year != held_out]
    fits = {year: ols_fit(series_by_year[year], residual_ddof=residual_ddof)
            for year in remaining}
    trends = fit_param_trends(list(fits.values()))
    bias = bias_factor([(series_by_year[year], fits[year])
                        for year in remaining])
    return forecast_year(trends, bias.value, held_out,
                         leap=series_by_year[held_out].leap, stratum=stratum)
