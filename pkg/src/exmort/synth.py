"""Synthetic death registries with known ground truth.

The generator mirrors the seasonal model read generatively: weekly
illness counts are a drifting quartic plus rounded normal noise, spread
uniformly over each week's days. Epidemic shocks are additive count
masses with exact bookkeeping, so recovery tests know the true excess.

Generation is deterministic given the seed; each year draws from its own
derived substream, so per-year generation order cannot change output.
"""

from __future__ import annotations

import calendar
import csv
import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping, Sequence

import numpy as np

from .aggregate import OVERALL, AnnualWeeklySeries, StratumKey, age_group_of
from .errors import ConfigError
from .forecast import week53_day_count

PARAM_ORDER = ("alpha", "beta1", "beta2", "beta3", "beta4", "sigma")

ILLNESS_CAUSES = ("A419", "C349", "E119", "I219", "I619",
                  "J189", "J449", "K746", "N179", "U071")
NON_ILLNESS_CAUSES = ("V892", "W748", "X599", "Y090")

RAW_COLUMNS = ("occ_year", "occ_month", "occ_day", "reg_year", "sex", "age", "cause")

_MAX_AGE = 85  # ages drawn uniformly from 0..84, covering every bracket


@dataclass(frozen=True)
class SynthConfig:
    """Generative configuration: parameter trends, shocks, and nuisances.

    ``coefficient_trends`` maps each of alpha, beta1..beta4, sigma to a
    (slope, intercept) line in the raw year variable. ``shock_years``
    maps a year to (shock_mass, (first_week, last_week)); a zero-mass
    entry materializes the year without adding deaths.
    """

    reference_years: tuple[int, int]
    coefficient_trends: Mapping[str, tuple[float, float]]
    shock_years: Mapping[int, tuple[float, tuple[int, int]]] = field(default_factory=dict)
    registration_lag_pct: float = 0.0
    non_illness_share: float = 0.0
    seed: int = 0

    def years(self) -> list[int]:
        start, end = self.reference_years
        span = set(range(start, end + 1)) | set(self.shock_years)
        return sorted(span)

    def coefficients_at(self, year: int) -> np.ndarray:
        return np.array([self._line(name, year) for name in PARAM_ORDER[:5]])

    def sigma_at(self, year: int) -> float:
        return self._line("sigma", year)

    def _line(self, name: str, year: int) -> float:
        slope, intercept = self.coefficient_trends[name]
        return slope * year + intercept

    def validate(self) -> None:
        start, end = self.reference_years
        if end < start:
            raise ConfigError(f"invalid reference_years {self.reference_years}")
        missing = set(PARAM_ORDER) - set(self.coefficient_trends)
        if missing:
            raise ConfigError(f"coefficient_trends missing {sorted(missing)}")
        if not 0.0 <= self.registration_lag_pct < 1.0:
            raise ConfigError("registration_lag_pct must be in [0, 1)")
        if not 0.0 <= self.non_illness_share < 1.0:
            raise ConfigError("non_illness_share must be in [0, 1)")
        weeks = np.arange(1, 54, dtype=float)
        powers = np.vander(weeks, 5, increasing=True)
        for year in self.years():
            if self.sigma_at(year) < 0:
                raise ConfigError(f"negative noise scale at year {year}")
            intensity = powers @ self.coefficients_at(year)
            if np.any(intensity < 0):
                bad = int(weeks[np.argmin(intensity)])
                raise ConfigError(f"negative weekly intensity at year {year}, "
                                  f"week {bad}")
        for year, (mass, (w0, w1)) in self.shock_years.items():
            if mass < 0:
                raise ConfigError(f"negative shock mass for year {year}")
            if not (1 <= w0 <= w1 <= 52):
                raise ConfigError(f"shock weeks for year {year} must satisfy "
                                  f"1 <= first <= last <= 52")


@dataclass
class YearTruth:
    coefficients: tuple[float, ...]
    sigma: float
    base_counts: tuple[int, ...]
    week53_count: int
    shock_total: int
    shock_by_stratum: dict[str, int]
    illness_total: int
    non_illness_total: int


@dataclass
class GroundTruth:
    seed: int
    years: dict[int, YearTruth]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "years": {
                str(year): {
                    "coefficients": list(t.coefficients),
                    "sigma": t.sigma,
                    "base_counts": list(t.base_counts),
                    "week53_count": t.week53_count,
                    "shock_total": t.shock_total,
                    "shock_by_stratum": t.shock_by_stratum,
                    "illness_total": t.illness_total,
                    "non_illness_total": t.non_illness_total,
                }
                for year, t in sorted(self.years.items())
            },
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def ground_truth_excess(truth: GroundTruth, period: tuple[int, int]) -> float:
    """Exact injected shock mass summed over an inclusive year range."""
    start, end = period
    return float(sum(t.shock_total for year, t in truth.years.items()
                     if start <= year <= end))


def _year_rng(seed: int, year: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(year,)))


def _shock_spread(mass: int, weeks: tuple[int, int]) -> np.ndarray:
    """Integer shock counts per week summing exactly to ``mass``."""
    w0, w1 = weeks
    add = np.zeros(52, dtype=np.int64)
    width = w1 - w0 + 1
    per, rem = divmod(mass, width)
    add[w0 - 1:w1] = per
    add[w0 - 1:w0 - 1 + rem] += 1
    return add


def _year_counts(config: SynthConfig, year: int, rng: np.random.Generator,
                 ) -> tuple[np.ndarray, int, np.ndarray]:
    """Base weekly counts, week-53 count, and shock counts for one year."""
    sigma = config.sigma_at(year)
    coef = config.coefficients_at(year)
    weeks = np.arange(1, 53, dtype=float)
    intensity = np.vander(weeks, 5, increasing=True) @ coef
    noise = rng.normal(0.0, sigma, 52) if sigma > 0 else np.zeros(52)
    base = np.maximum(0, np.rint(intensity + noise)).astype(np.int64)

    ell = week53_day_count(calendar.isleap(year))
    level53 = float(np.polynomial.polynomial.polyval(53.0, coef)) * ell / 7.0
    noise53 = (ell / 7.0) * rng.normal(0.0, sigma) if sigma > 0 else 0.0
    week53 = int(max(0, round(level53 + noise53)))

    if year in config.shock_years:
        mass, span = config.shock_years[year]
        shock = _shock_spread(int(round(mass)), span)
    else:
        shock = np.zeros(52, dtype=np.int64)
    return base, week53, shock


def weekly_counts(config: SynthConfig, year: int) -> tuple[np.ndarray, int, np.ndarray]:
    """Deterministic count layer for one year (base, week53, shock)."""
    return _year_counts(config, year, _year_rng(config.seed, year))


def synth_series(config: SynthConfig) -> tuple[dict[int, AnnualWeeklySeries], GroundTruth]:
    """Overall (both sexes, all ages) series per year plus exact ground truth.

    Shares the per-year substreams with :func:`generate_registry`, so the
    series equal what ingesting and aggregating the emitted registry
    yields for the overall stratum.
    """
    config.validate()
    series: dict[int, AnnualWeeklySeries] = {}
    years: dict[int, YearTruth] = {}
    for year in config.years():
        base, week53, shock = weekly_counts(config, year)
        total = base + shock
        series[year] = AnnualWeeklySeries(
            year=year, stratum=OVERALL, counts=total,
            week53_count=week53, leap=calendar.isleap(year))
        illness_total = int(total.sum()) + week53
        years[year] = YearTruth(
            coefficients=tuple(float(c) for c in config.coefficients_at(year)),
            sigma=float(config.sigma_at(year)),
            base_counts=tuple(int(c) for c in base),
            week53_count=week53,
            shock_total=int(shock.sum()),
            shock_by_stratum={OVERALL.label(): int(shock.sum())},
            illness_total=illness_total,
            non_illness_total=_non_illness_count(config, illness_total),
        )
    return series, GroundTruth(config.seed, years)


def _non_illness_count(config: SynthConfig, illness_total: int) -> int:
    share = config.non_illness_share
    if share <= 0.0:
        return 0
    return int(round(illness_total * share / (1.0 - share)))


def _materialize(rng: np.random.Generator, year: int, week_index: np.ndarray,
                 is_week53: np.ndarray, leap: bool) -> list[tuple]:
    """Draw (date parts, sex, age, cause index) for a batch of illness deaths."""
    n = week_index.size
    ell = week53_day_count(leap)
    day_in_week = rng.integers(0, 7, size=n)
    day53 = rng.integers(0, ell, size=n)
    doy = np.where(is_week53, 365 + day53, (week_index - 1) * 7 + 1 + day_in_week)
    sex_draw = rng.integers(0, 2, size=n)
    ages = rng.integers(0, _MAX_AGE, size=n)
    cause_idx = rng.integers(0, len(ILLNESS_CAUSES), size=n)
    start = date(year, 1, 1)
    rows = []
    for k in range(n):
        d = start + timedelta(days=int(doy[k]) - 1)
        rows.append((d, "male" if sex_draw[k] == 0 else "female",
                     int(ages[k]), ILLNESS_CAUSES[cause_idx[k]]))
    return rows


def generate_registry(config: SynthConfig, records_path,
                      truth_path=None) -> GroundTruth:
    """Write a raw registry file and return (optionally write) ground truth.

    Emits the default raw schema consumed by the ingest stage. The
    registration year is bumped by one for a ``registration_lag_pct``
    share of records, drawn uniformly over all records of the year.
    """
    config.validate()
    truth_years: dict[int, YearTruth] = {}
    with open(records_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RAW_COLUMNS)
        for year in config.years():
            truth_years[year] = _write_year(config, year, writer)
    truth = GroundTruth(config.seed, truth_years)
    if truth_path is not None:
        truth.write_json(truth_path)
    return truth


def _write_year(config: SynthConfig, year: int, writer) -> YearTruth:
    rng = _year_rng(config.seed, year)
    base, week53, shock = _year_counts(config, year, rng)
    leap = calendar.isleap(year)

    # Base illness deaths: weeks 1..52 then the week-53 remainder.
    week_index = np.repeat(np.arange(1, 53), base)
    week_index = np.concatenate([week_index, np.full(week53, 53, dtype=np.int64)])
    is53 = week_index == 53
    base_rows = _materialize(rng, year, week_index, is53, leap)

    shock_week_index = np.repeat(np.arange(1, 53), shock)
    shock_rows = _materialize(rng, year, shock_week_index,
                              np.zeros(shock_week_index.size, dtype=bool), leap)
    shock_by_stratum: dict[str, int] = {OVERALL.label(): len(shock_rows)}
    for _, sex, age, _ in shock_rows:
        for key in (StratumKey(sex, age_group_of(age)),
                    StratumKey(sex, "all"),
                    StratumKey("both", age_group_of(age))):
            label = key.label()
            shock_by_stratum[label] = shock_by_stratum.get(label, 0) + 1

    illness_total = len(base_rows) + len(shock_rows)
    n_non = _non_illness_count(config, illness_total)
    year_days = 366 if leap else 365
    non_doy = rng.integers(1, year_days + 1, size=n_non)
    non_sex = rng.integers(0, 2, size=n_non)
    non_age = rng.integers(0, _MAX_AGE, size=n_non)
    non_cause = rng.integers(0, len(NON_ILLNESS_CAUSES), size=n_non)
    start = date(year, 1, 1)
    non_rows = [(start + timedelta(days=int(non_doy[k]) - 1),
                 "male" if non_sex[k] == 0 else "female",
                 int(non_age[k]), NON_ILLNESS_CAUSES[non_cause[k]])
                for k in range(n_non)]

    all_rows = base_rows + shock_rows + non_rows
    lagged = rng.random(len(all_rows)) < config.registration_lag_pct
    for (d, sex, age, cause), lag in zip(all_rows, lagged):
        reg_year = year + 1 if lag else year
        writer.writerow((d.year, d.month, d.day, reg_year, sex, age, cause))

    return YearTruth(
        coefficients=tuple(float(c) for c in config.coefficients_at(year)),
        sigma=float(config.sigma_at(year)),
        base_counts=tuple(int(c) for c in base),
        week53_count=week53,
        shock_total=len(shock_rows),
        shock_by_stratum=shock_by_stratum,
        illness_total=illness_total,
        non_illness_total=n_non,
    )


def uniform_daily_series(years: Sequence[int], daily_mean: float, seed: int = 0,
                         poisson: bool = True) -> dict[int, AnnualWeeklySeries]:
    """Series from a flat daily death intensity (no weekly seasonality).

    With ``poisson`` false the daily count is the constant
    ``round(daily_mean)``, giving a registry with no week-53 bias at all.
    """
    rng = np.random.default_rng(seed)
    out: dict[int, AnnualWeeklySeries] = {}
    for year in years:
        leap = calendar.isleap(year)
        n_days = 366 if leap else 365
        if poisson:
            daily = rng.poisson(daily_mean, n_days)
        else:
            daily = np.full(n_days, round(daily_mean), dtype=np.int64)
        weekly = daily[:364].reshape(52, 7).sum(axis=1)
        out[year] = AnnualWeeklySeries(
            year=year, stratum=OVERALL, counts=weekly,
            week53_count=int(daily[364:].sum()), leap=leap)
    return out


def demo_config(seed: int = 20260101) -> SynthConfig:
    """A small, fast registry: 12 reference years plus 2020-2022."""
    return SynthConfig(
        reference_years=(2008, 2019),
        coefficient_trends={
            "alpha": (3.0, 260.0 - 3.0 * 2008),
            "beta1": (-0.02, -5.0 + 0.02 * 2008),
            "beta2": (0.001, 0.19 - 0.001 * 2008),
            "beta3": (-1e-5, -0.0026 + 1e-5 * 2008),
            "beta4": (8e-8, 1.3e-5 - 8e-8 * 2008),
            "sigma": (0.1, 8.0 - 0.1 * 2008),
        },
        shock_years={2020: (4000.0, (12, 30)),
                     2021: (2500.0, (5, 40)),
                     2022: (600.0, (1, 26))},
        registration_lag_pct=0.026,
        non_illness_share=0.11,
        seed=seed,
    )
