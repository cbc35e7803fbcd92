"""Excess mortality estimation: points, intervals, rates, and the full grid.

Excess deaths for a year are observed minus forecast-expected deaths,
week 53 included. Multi-year periods sum the yearly quantities. The
normal-theory interval propagates the forecast dispersion through the
52 weekly noise terms plus the scaled week-53 term; an optional per-year
leverage factor widens it for the uncertainty of the trend extrapolation
itself. A residual-resampling bootstrap is available as an alternative
interval method for sensitivity analysis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .aggregate import (AGE_GROUPS, ALL_AGES, BOTH, AnnualWeeklySeries,
                        StratumKey, full_grid, series_total)
from .errors import ConfigError, DenominatorError, EstimateError
from .forecast import (BaselineForecast, bias_factor, fit_param_trends,
                       forecast_year, week53_day_count)
from .seasonal import PolyFit, ols_fit

Period = tuple[int, int]


def period_label(period: Period) -> str:
    start, end = period
    return str(start) if start == end else f"{start}-{end}"


def periods_for(forecast_years: Sequence[int]) -> list[Period]:
    """Each single year, then the cumulative ranges from the first year."""
    years = sorted(forecast_years)
    singles = [(y, y) for y in years]
    prefixes = [(years[0], y) for y in years[1:]]
    return singles + prefixes


@dataclass(frozen=True)
class YearExcess:
    """Per-year excess with the noise quantities the interval needs."""

    year: int
    stratum: StratumKey | None
    psi: float
    expected_total: float
    observed_total: float
    sigma_forecast: float
    leap: bool
    bias: float
    trend_leverage: float = 0.0


@dataclass
class ExcessEstimate:
    """Point and interval excess estimates for one (period, stratum)."""

    period: Period
    stratum: StratumKey | None
    psi: float
    expected_total: float
    observed_total: float
    delta_psi_pct: float
    psi_ci: tuple[float, float] | None = None
    delta_psi_ci: tuple[float, float] | None = None
    rate_per_100k: float | None = None
    rate_ci: tuple[float, float] | None = None


def excess_year(series: AnnualWeeklySeries,
                forecast: BaselineForecast) -> tuple[float, float, float]:
    """(psi, expected_total, observed_total) for one year.

    psi sums observed minus expected over weeks 1-52 and adds the
    week-53 difference.
    """
    if series.year != forecast.year:
        raise EstimateError(f"series year {series.year} != forecast year "
                            f"{forecast.year}")
    if (series.stratum is not None and forecast.stratum is not None
            and series.stratum != forecast.stratum):
        raise EstimateError(f"series stratum {series.stratum.label()} != "
                            f"forecast stratum {forecast.stratum.label()}")
    psi = float((series.counts - forecast.expected).sum()
                + series.week53_count - forecast.expected_week53)
    expected_total = float(forecast.expected.sum() + forecast.expected_week53)
    observed_total = series_total(series)
    return psi, expected_total, observed_total


def year_excess(series: AnnualWeeklySeries, forecast: BaselineForecast,
                trend_leverage: float = 0.0) -> YearExcess:
    psi, expected_total, observed_total = excess_year(series, forecast)
    return YearExcess(
        year=series.year,
        stratum=series.stratum,
        psi=psi,
        expected_total=expected_total,
        observed_total=observed_total,
        sigma_forecast=forecast.sigma_forecast,
        leap=forecast.leap,
        bias=forecast.bias_factor,
        trend_leverage=trend_leverage,
    )


def excess_period(yearly: Sequence[YearExcess], period: Period) -> ExcessEstimate:
    """Sum yearly excess over an inclusive year range (point fields only)."""
    start, end = period
    if start > end:
        raise EstimateError(f"invalid period {period}")
    by_year = {y.year: y for y in yearly}
    missing = [year for year in range(start, end + 1) if year not in by_year]
    if missing:
        raise EstimateError(f"period {period_label(period)} is missing years {missing}")
    members = [by_year[year] for year in range(start, end + 1)]

    psi = sum(y.psi for y in members)
    expected_total = sum(y.expected_total for y in members)
    observed_total = sum(y.observed_total for y in members)
    if expected_total == 0.0:
        raise EstimateError(f"zero expected total for period {period_label(period)}")
    return ExcessEstimate(
        period=period,
        stratum=members[0].stratum,
        psi=psi,
        expected_total=expected_total,
        observed_total=observed_total,
        delta_psi_pct=100.0 * psi / expected_total,
    )


def _psi_variance(sigma_forecasts, leaps, biases, trend_leverages=None) -> float:
    if trend_leverages is None:
        trend_leverages = [0.0] * len(sigma_forecasts)
    if not (len(sigma_forecasts) == len(leaps) == len(biases) == len(trend_leverages)):
        raise EstimateError("per-year inputs must have equal lengths")
    variance = 0.0
    for sigma, leap, b, lev in zip(sigma_forecasts, leaps, biases, trend_leverages):
        if sigma < 0:
            raise EstimateError(f"negative sigma_forecast {sigma}")
        ell = week53_day_count(leap)
        variance += sigma**2 * (52.0 + (ell * b / 7.0) ** 2) * (1.0 + lev)
    return variance


def excess_interval(psi: float,
                    sigma_forecasts: Sequence[float],
                    leaps: Sequence[bool],
                    biases: Sequence[float],
                    level: float = 0.95,
                    trend_leverages: Sequence[float] | None = None,
                    ) -> tuple[float, float]:
    """Normal-theory interval for psi under independent weekly noise.

    Var = sum over years of sigma^2 (52 + (l b / 7)^2), each term
    inflated by (1 + leverage) when ``trend_leverages`` is given.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"interval level must be in (0, 1), got {level}")
    z = float(ndtri((1.0 + level) / 2.0))
    half = z * np.sqrt(_psi_variance(sigma_forecasts, leaps, biases, trend_leverages))
    return psi - half, psi + half


def excess_interval_bootstrap(psi: float,
                              standardized_pool: Sequence[float],
                              sigma_forecasts: Sequence[float],
                              leaps: Sequence[bool],
                              biases: Sequence[float],
                              level: float = 0.95,
                              n_boot: int = 2000,
                              rng: np.random.Generator | None = None,
                              ) -> tuple[float, float]:
    """Percentile interval from resampled unit-scale fit residuals.

    Each replicate draws 52 weekly terms plus one scaled week-53 term
    per year from ``standardized_pool`` (reference residuals divided by
    their year's dispersion), scaled by that year's forecast dispersion.
    The interval is clipped to contain the point estimate.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"interval level must be in (0, 1), got {level}")
    pool = np.asarray(standardized_pool, dtype=float)
    if pool.size < 2:
        raise EstimateError("standardized residual pool is too small")
    if rng is None:
        rng = np.random.default_rng(0)

    noise = np.zeros(n_boot)
    for sigma, leap, b in zip(sigma_forecasts, leaps, biases, strict=True):
        ell = week53_day_count(leap)
        draws = rng.choice(pool, size=(n_boot, 53), replace=True)
        noise += sigma * (draws[:, :52].sum(axis=1) + (ell * b / 7.0) * draws[:, 52])
    lo = psi + float(np.quantile(noise, (1.0 - level) / 2.0))
    hi = psi + float(np.quantile(noise, (1.0 + level) / 2.0))
    return min(lo, psi), max(hi, psi)


@dataclass
class PopulationTable:
    """Population denominators keyed by (year, stratum).

    Aggregate cells not present are derived by addition: "both" from
    male + female, "all" from the nine age brackets.
    """

    entries: dict[tuple[int, StratumKey], float]

    @classmethod
    def from_csv(cls, path, encoding: str = "utf-8") -> "PopulationTable":
        entries: dict[tuple[int, StratumKey], float] = {}
        with open(path, "r", encoding=encoding, newline="") as handle:
            reader = csv.DictReader(handle)
            required = {"year", "sex", "age_group", "population"}
            if reader.fieldnames is None or not required <= set(reader.fieldnames):
                raise ConfigError(f"population table {path} must have columns "
                                  f"{sorted(required)}")
            for row in reader:
                value = float(row["population"])
                if value <= 0:
                    raise ConfigError(f"non-positive population in {path}: {row}")
                key = (int(row["year"]), StratumKey(row["sex"], row["age_group"]))
                entries[key] = value
        return cls(entries)

    def population(self, year: int, stratum: StratumKey) -> float:
        direct = self.entries.get((year, stratum))
        if direct is not None:
            return direct
        if stratum.sex == BOTH:
            parts = [self.population(year, replace_sex(stratum, sex))
                     for sex in ("male", "female")]
            return sum(parts)
        if stratum.age_group == ALL_AGES:
            return sum(self.population(year, StratumKey(stratum.sex, age))
                       for age in AGE_GROUPS)
        raise DenominatorError(f"no population for year {year}, "
                               f"stratum {stratum.label()}")

    def period_denominator(self, period: Period, stratum: StratumKey) -> float:
        """Mean of the yearly populations over the period."""
        start, end = period
        try:
            values = [self.population(year, stratum)
                      for year in range(start, end + 1)]
        except DenominatorError:
            raise DenominatorError(f"no population denominator for period "
                                   f"{period_label(period)}, stratum "
                                   f"{stratum.label()}") from None
        return float(np.mean(values))


def replace_sex(stratum: StratumKey, sex: str) -> StratumKey:
    return StratumKey(sex, stratum.age_group)


def rate_per_100k(psi: float, period: Period, stratum: StratumKey,
                  pop: PopulationTable) -> float:
    """Excess deaths per 100,000 inhabitants of the stratum."""
    return 100_000.0 * psi / pop.period_denominator(period, stratum)


def sex_ratio(male: ExcessEstimate, female: ExcessEstimate) -> float:
    """Male over female excess rate; NaN when the female rate is not positive."""
    if male.period != female.period:
        raise EstimateError("sex ratio requires matching periods")
    if (male.stratum is None or female.stratum is None
            or male.stratum.age_group != female.stratum.age_group):
        raise EstimateError("sex ratio requires matching age groups")
    if male.rate_per_100k is None or female.rate_per_100k is None:
        raise EstimateError("sex ratio requires rate estimates")
    if female.rate_per_100k <= 0.0:
        return float("nan")
    return male.rate_per_100k / female.rate_per_100k


@dataclass
class WeeklyExcess:
    """Observed vs expected weekly deaths with percentage excess.

    ``pct_excess`` is NaN for weeks flagged by a non-positive expected
    count; ``flagged_weeks`` lists them.
    """

    year: int
    weeks: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    pct_excess: np.ndarray
    flagged_weeks: tuple[int, ...]


def weekly_excess_curve(series: AnnualWeeklySeries,
                        forecast: BaselineForecast) -> WeeklyExcess:
    if series.year != forecast.year:
        raise EstimateError(f"series year {series.year} != forecast year "
                            f"{forecast.year}")
    observed = np.asarray(series.counts, dtype=float)
    expected = forecast.expected
    pct = np.full(52, np.nan)
    ok = expected > 0.0
    pct[ok] = 100.0 * (observed[ok] - expected[ok]) / expected[ok]
    flagged = tuple(int(w) for w in np.nonzero(~ok)[0] + 1)
    return WeeklyExcess(series.year, np.arange(1, 53), observed, expected,
                        pct, flagged)


# ---------------------------------------------------------------------------
# Full-pipeline evaluation over a stratum and over the whole grid.
# ---------------------------------------------------------------------------

@dataclass
class StratumPipeline:
    """Everything the pipeline derives for one stratum."""

    stratum: StratumKey
    fits: dict[int, PolyFit]
    trends: dict
    bias: float
    bias_excluded: tuple[int, ...]
    forecasts: dict[int, BaselineForecast]
    yearly: dict[int, YearExcess]
    standardized_residuals: np.ndarray


def run_stratum(series_by_year: Mapping[int, AnnualWeeklySeries],
                reference_years: Sequence[int],
                forecast_years: Sequence[int],
                stratum: StratumKey,
                residual_ddof: int = 0,
                trend_inflation: bool = True) -> StratumPipeline:
    """Fit reference years, trend the parameters, forecast, and difference."""
    fits = {year: ols_fit(series_by_year[year], residual_ddof=residual_ddof)
            for year in reference_years}
    trends = fit_param_trends(list(fits.values()))
    bias = bias_factor([(series_by_year[year], fits[year])
                        for year in reference_years])

    pool = []
    for fit in fits.values():
        if fit.sigma > 0:
            pool.extend(fit.residuals / fit.sigma)
    standardized = np.asarray(pool, dtype=float)

    forecasts: dict[int, BaselineForecast] = {}
    yearly: dict[int, YearExcess] = {}
    for year in forecast_years:
        forecast = forecast_year(trends, bias.value, year, stratum=stratum)
        leverage = trends["sigma"].leverage(year) if trend_inflation else 0.0
        forecasts[year] = forecast
        yearly[year] = year_excess(series_by_year[year], forecast,
                                   trend_leverage=leverage)
    return StratumPipeline(
        stratum=stratum,
        fits=fits,
        trends=trends,
        bias=bias.value,
        bias_excluded=bias.excluded_years,
        forecasts=forecasts,
        yearly=yearly,
        standardized_residuals=standardized,
    )


def estimate_period(pipeline: StratumPipeline,
                    period: Period,
                    pop: PopulationTable | None = None,
                    level: float = 0.95,
                    ci_method: str = "normal",
                    n_boot: int = 2000,
                    rng: np.random.Generator | None = None) -> ExcessEstimate:
    """Complete (point + intervals + rate) estimate for one period."""
    start, end = period
    members = [pipeline.yearly[year] for year in range(start, end + 1)
               if year in pipeline.yearly]
    estimate = excess_period(list(pipeline.yearly.values()), period)
    sigmas = [y.sigma_forecast for y in members]
    leaps = [y.leap for y in members]
    biases = [y.bias for y in members]
    leverages = [y.trend_leverage for y in members]

    if ci_method == "normal":
        psi_ci = excess_interval(estimate.psi, sigmas, leaps, biases,
                                 level=level, trend_leverages=leverages)
    elif ci_method == "bootstrap":
        psi_ci = excess_interval_bootstrap(
            estimate.psi, pipeline.standardized_residuals, sigmas, leaps,
            biases, level=level, n_boot=n_boot, rng=rng)
    else:
        raise ConfigError(f"unknown ci_method {ci_method!r}")

    scale = estimate.expected_total / 100.0
    estimate.psi_ci = psi_ci
    estimate.delta_psi_ci = (psi_ci[0] / scale, psi_ci[1] / scale)
    if pop is not None:
        denominator = pop.period_denominator(period, pipeline.stratum)
        estimate.rate_per_100k = 100_000.0 * estimate.psi / denominator
        estimate.rate_ci = (100_000.0 * psi_ci[0] / denominator,
                            100_000.0 * psi_ci[1] / denominator)
    return estimate


def evaluate_grid(series_map: Mapping[tuple[int, StratumKey], AnnualWeeklySeries],
                  reference_years: Sequence[int],
                  forecast_years: Sequence[int],
                  strata: Sequence[StratumKey] | None = None,
                  pop: PopulationTable | None = None,
                  level: float = 0.95,
                  ci_method: str = "normal",
                  residual_ddof: int = 0,
                  trend_inflation: bool = True,
                  n_boot: int = 2000,
                  seed: int = 0,
                  ) -> tuple[list[ExcessEstimate], dict[StratumKey, StratumPipeline]]:
    """Evaluate every (period, stratum) cell with deterministic ordering.

    The default grid of 5 periods x 30 strata yields 150 estimates.
    """
    if strata is None:
        strata = full_grid()
    periods = periods_for(forecast_years)
    rng = np.random.default_rng(seed)

    pipelines: dict[StratumKey, StratumPipeline] = {}
    for stratum in strata:
        series_by_year = {year: series_map[(year, stratum)]
                          for year in list(reference_years) + list(forecast_years)}
        pipelines[stratum] = run_stratum(series_by_year, reference_years,
                                         forecast_years, stratum,
                                         residual_ddof=residual_ddof,
                                         trend_inflation=trend_inflation)

    estimates = []
    for period in periods:
        for stratum in strata:
            estimates.append(estimate_period(pipelines[stratum], period,
                                             pop=pop, level=level,
                                             ci_method=ci_method,
                                             n_boot=n_boot, rng=rng))
    return estimates, pipelines
