"""Aggregation of canonical records into stratified annual weekly series.

Only illness-classified records are counted. Every requested
(year, stratum) cell is materialized, zero-filled if empty, so the
fitting stage never confronts missing weeks.
"""

from __future__ import annotations

import calendar
import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .ingest import FEMALE, ILLNESS, MALE, CanonicalRecord

BOTH = "both"
STRATUM_SEXES = (BOTH, MALE, FEMALE)

ALL_AGES = "all"
AGE_GROUPS = ("0-5", "6-10", "11-19", "20-29", "30-39",
              "40-49", "50-59", "60-69", "70+")

_AGE_BOUNDS = ((0, 5), (6, 10), (11, 19), (20, 29), (30, 39),
               (40, 49), (50, 59), (60, 69), (70, None))


def age_group_of(age_years: int) -> str:
    """Bracket label for a non-negative age in whole years."""
    if age_years < 0:
        raise ValueError(f"negative age {age_years}")
    for label, (lo, hi) in zip(AGE_GROUPS, _AGE_BOUNDS):
        if age_years >= lo and (hi is None or age_years <= hi):
            return label
    raise AssertionError("age brackets must cover all non-negative ages")


@dataclass(frozen=True)
class StratumKey:
    """One (sex, age group) cell of the estimation grid."""

    sex: str
    age_group: str

    def __post_init__(self):
        if self.sex not in STRATUM_SEXES:
            raise ValueError(f"invalid stratum sex {self.sex!r}")
        if self.age_group != ALL_AGES and self.age_group not in AGE_GROUPS:
            raise ValueError(f"invalid age group {self.age_group!r}")

    def label(self) -> str:
        return f"{self.sex}:{self.age_group}"

    @classmethod
    def parse(cls, label: str) -> "StratumKey":
        sex, _, age_group = label.partition(":")
        if not age_group:
            raise ValueError(f"stratum label {label!r} must look like 'sex:age_group'")
        return cls(sex.strip(), age_group.strip())


OVERALL = StratumKey(BOTH, ALL_AGES)


def full_grid() -> tuple[StratumKey, ...]:
    """All 30 strata: 3 sex cases x (9 age brackets + all ages)."""
    return tuple(StratumKey(sex, age)
                 for sex in STRATUM_SEXES
                 for age in AGE_GROUPS + (ALL_AGES,))


@dataclass
class AnnualWeeklySeries:
    """Weekly illness-death counts for one stratum-year.

    ``counts`` holds weeks 1-52 (7 days each); ``week53_count`` holds the
    1-day (common year) or 2-day (leap year) remainder.
    """

    year: int
    stratum: StratumKey | None
    counts: np.ndarray
    week53_count: float
    leap: bool

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (52,):
            raise ValueError(f"counts must have 52 weeks, got {self.counts.shape}")
        if not np.all(np.isfinite(self.counts)) or np.any(self.counts < 0):
            raise ValueError("counts must be finite and non-negative")
        if self.week53_count < 0:
            raise ValueError("week53_count must be non-negative")


def series_total(series: AnnualWeeklySeries) -> float:
    return float(series.counts.sum() + series.week53_count)


@dataclass
class _Cell:
    counts: np.ndarray = field(default_factory=lambda: np.zeros(52, dtype=np.int64))
    week53: int = 0


def build_series(records: Iterable[CanonicalRecord],
                 years: Sequence[int],
                 strata: Sequence[StratumKey] | None = None,
                 ) -> dict[tuple[int, StratumKey], AnnualWeeklySeries]:
    """Count illness records into every requested (year, stratum) cell.

    A record contributes to its own sex and "both", and to its own age
    bracket and "all"; unknown sex or age contributes only to the
    aggregate side. Output is independent of record order.
    """
    years = sorted(set(int(y) for y in years))
    if not years:
        raise ConfigError("empty year range")
    if strata is None:
        strata = full_grid()
    wanted = set(strata)
    year_set = set(years)

    cells: dict[tuple[int, StratumKey], _Cell] = {
        (year, stratum): _Cell() for year in years for stratum in strata
    }
    # (sex, age_group) membership is resolved per record; cache by (sex, age).
    membership: dict[tuple[str, int | None], tuple[StratumKey, ...]] = {}

    for record in records:
        if record.cause_class != ILLNESS or record.year not in year_set:
            continue
        key = (record.sex, record.age_years)
        strata_of = membership.get(key)
        if strata_of is None:
            sexes = [BOTH] + ([record.sex] if record.sex in (MALE, FEMALE) else [])
            ages = [ALL_AGES] + ([age_group_of(record.age_years)]
                                 if record.age_years is not None else [])
            strata_of = tuple(StratumKey(s, a) for s in sexes for a in ages
                              if StratumKey(s, a) in wanted)
            membership[key] = strata_of
        for stratum in strata_of:
            cell = cells[(record.year, stratum)]
            if record.week == 53:
                cell.week53 += 1
            else:
                cell.counts[record.week - 1] += 1

    return {
        (year, stratum): AnnualWeeklySeries(
            year=year, stratum=stratum, counts=cell.counts,
            week53_count=cell.week53, leap=calendar.isleap(year))
        for (year, stratum), cell in cells.items()
    }


def write_series_table(series_map: Mapping[tuple[int, StratumKey], AnnualWeeklySeries],
                       path) -> None:
    """Long-format (year, stratum, week, count) table with bit-exact integers."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("year", "sex", "age_group", "week", "count"))
        for (year, stratum) in sorted(series_map, key=lambda k: (k[0], k[1].label())):
            series = series_map[(year, stratum)]
            for week in range(52):
                writer.writerow((year, stratum.sex, stratum.age_group,
                                 week + 1, int(series.counts[week])))
            writer.writerow((year, stratum.sex, stratum.age_group,
                             53, int(series.week53_count)))
