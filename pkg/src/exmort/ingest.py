"""Death-registry ingestion: parsing, cause classification, week assignment.

Raw registries are delimited text files with one row per death. Parsing
normalizes each row into a :class:`DeathRecord`, rejecting malformed rows
into an auditable log instead of dropping them. Deaths are attributed to
their occurrence year (not the registration year) and assigned a
standardized week index: weeks 1-52 are fixed 7-day blocks from January 1,
week 53 is the 1-2 day remainder of the year.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Iterator, NamedTuple, Sequence, TextIO

from .errors import ConfigError, IngestError

MALE = "male"
FEMALE = "female"
UNKNOWN = "unknown"
SEXES = (MALE, FEMALE, UNKNOWN)

ILLNESS = "illness"
NON_ILLNESS = "non_illness"

#: External-cause chapter prefixes (accidents, violence); overridable in config.
DEFAULT_NON_ILLNESS_PREFIXES = ("V", "W", "X", "Y")

#: Field name -> raw column name. Matches the canonical output of `simulate`.
DEFAULT_SCHEMA = {
    "occurrence_year": "occ_year",
    "occurrence_month": "occ_month",
    "occurrence_day": "occ_day",
    "registration_year": "reg_year",
    "sex": "sex",
    "age": "age",
    "cause": "cause",
}

_SEX_ALIASES = {
    "male": MALE, "m": MALE, "1": MALE,
    "female": FEMALE, "f": FEMALE, "2": FEMALE,
    "unknown": UNKNOWN, "u": UNKNOWN, "9": UNKNOWN, "": UNKNOWN,
}

CANONICAL_COLUMNS = ("occurrence_year", "week", "sex", "age_years", "cause_class")
REJECT_COLUMNS = ("row", "reason")


@dataclass(frozen=True)
class DeathRecord:
    """One validated registry row, attributed to its occurrence date."""

    occurrence_date: date
    registration_year: int
    sex: str
    age_years: int | None
    cause_code: str


class CanonicalRecord(NamedTuple):
    """Normalized record as written to the canonical file."""

    year: int
    week: int
    sex: str
    age_years: int | None
    cause_class: str


@dataclass
class IngestResult:
    records: list[DeathRecord]
    rejects: list[tuple[int, str]]

    @property
    def accepted(self) -> int:
        return len(self.records)

    @property
    def rejected(self) -> int:
        return len(self.rejects)


def week_of(occurrence_date: date) -> int:
    """Standardized week index of a date.

    Week w covers days 7(w-1)+1 .. 7w for w in 1..52; days 365 and 366
    both fall in week 53.
    """
    doy = occurrence_date.timetuple().tm_yday
    return (doy + 6) // 7


def classify_cause(cause_code: str,
                   non_illness_prefixes: Sequence[str] = DEFAULT_NON_ILLNESS_PREFIXES) -> str:
    """Classify a cause-of-death code as illness or non-illness.

    A code is non-illness iff it starts with one of the configured
    prefixes. Raises ValueError on an empty code (callers route that to
    the reject log).
    """
    if not cause_code:
        raise ValueError("empty cause code")
    code = cause_code.strip().upper()
    if not code:
        raise ValueError("empty cause code")
    for prefix in non_illness_prefixes:
        if code.startswith(prefix.upper()):
            return NON_ILLNESS
    return ILLNESS


def _parse_sex(raw: str) -> str:
    key = raw.strip().lower()
    if key not in _SEX_ALIASES:
        raise ValueError(f"invalid sex {raw!r}")
    return _SEX_ALIASES[key]


def _parse_age(raw: str) -> int | None:
    text = raw.strip()
    if text == "" or text.lower() == "unknown":
        return None
    try:
        age = int(text)
    except ValueError as exc:
        raise ValueError(f"invalid age {raw!r}") from exc
    if age < 0:
        raise ValueError(f"invalid age {raw!r}")
    return age


def _parse_int(raw: str, what: str) -> int:
    try:
        return int(raw.strip())
    except ValueError as exc:
        raise ValueError(f"invalid {what} {raw!r}") from exc


def parse_registry(stream: TextIO | Iterable[str],
                   schema: dict[str, str] | None = None,
                   delimiter: str = ",") -> IngestResult:
    """Parse a delimited registry stream into validated death records.

    The first row must be a header naming every column mapped by
    ``schema``; a missing mapped column raises :class:`ConfigError`.
    Malformed data rows are appended to the reject log as
    ``(row_number, reason)`` with 1-based row numbers counted from the
    header. Accepted + rejected always equals the number of data rows.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    missing = set(DEFAULT_SCHEMA) - set(schema)
    if missing:
        raise ConfigError(f"schema is missing field mappings: {sorted(missing)}")

    reader = csv.reader(stream, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("input stream is empty (no header row)") from None
    except (csv.Error, UnicodeDecodeError, OSError) as exc:
        raise IngestError(f"unreadable input stream: {exc}") from exc

    positions = {}
    for field, column in schema.items():
        try:
            positions[field] = header.index(column)
        except ValueError:
            raise ConfigError(f"mapped column {column!r} (field {field!r}) "
                              f"not found in header {header}") from None
    width = max(positions.values()) + 1

    records: list[DeathRecord] = []
    rejects: list[tuple[int, str]] = []
    row_number = 1
    try:
        for row in reader:
            row_number += 1
            if not row:
                continue
            try:
                records.append(_parse_row(row, positions, width))
            except ValueError as exc:
                rejects.append((row_number, str(exc)))
    except (csv.Error, UnicodeDecodeError, OSError) as exc:
        raise IngestError(f"unreadable input stream at row {row_number}: {exc}") from exc
    return IngestResult(records, rejects)


def _parse_row(row: list[str], pos: dict[str, int], width: int) -> DeathRecord:
    if len(row) < width:
        raise ValueError(f"short row ({len(row)} fields)")
    year = _parse_int(row[pos["occurrence_year"]], "occurrence year")
    month = _parse_int(row[pos["occurrence_month"]], "occurrence month")
    day = _parse_int(row[pos["occurrence_day"]], "occurrence day")
    try:
        occurrence = date(year, month, day)
    except ValueError:
        raise ValueError(f"invalid date {year:04d}-{month:02d}-{day:02d}") from None
    registration_year = _parse_int(row[pos["registration_year"]], "registration year")
    if registration_year < occurrence.year:
        raise ValueError(f"registration year {registration_year} precedes "
                         f"occurrence year {occurrence.year}")
    sex = _parse_sex(row[pos["sex"]])
    age = _parse_age(row[pos["age"]])
    cause = row[pos["cause"]].strip()
    if not cause:
        raise ValueError("empty cause code")
    return DeathRecord(occurrence, registration_year, sex, age, cause)


def parse_registry_file(path, schema=None, delimiter: str = ",",
                        encoding: str = "utf-8") -> IngestResult:
    try:
        handle = open(path, "r", encoding=encoding, newline="")
    except OSError as exc:
        raise IngestError(f"cannot open registry file {path}: {exc}") from exc
    with handle:
        try:
            return parse_registry(handle, schema, delimiter)
        except UnicodeDecodeError as exc:
            raise IngestError(f"cannot decode {path} as {encoding}: {exc}") from exc


def to_canonical(record: DeathRecord,
                 non_illness_prefixes: Sequence[str] = DEFAULT_NON_ILLNESS_PREFIXES,
                 ) -> CanonicalRecord:
    return CanonicalRecord(
        year=record.occurrence_date.year,
        week=week_of(record.occurrence_date),
        sex=record.sex,
        age_years=record.age_years,
        cause_class=classify_cause(record.cause_code, non_illness_prefixes),
    )


def non_illness_share_by_year(records: Sequence[DeathRecord],
                              non_illness_prefixes: Sequence[str] = DEFAULT_NON_ILLNESS_PREFIXES,
                              ) -> dict[int, float]:
    """Percentage of non-illness deaths per occurrence year.

    Years with zero deaths are omitted.
    """
    totals: dict[int, int] = {}
    non_illness: dict[int, int] = {}
    for record in records:
        year = record.occurrence_date.year
        totals[year] = totals.get(year, 0) + 1
        if classify_cause(record.cause_code, non_illness_prefixes) == NON_ILLNESS:
            non_illness[year] = non_illness.get(year, 0) + 1
    return {year: 100.0 * non_illness.get(year, 0) / count
            for year, count in sorted(totals.items())}


def write_canonical(records: Iterable[DeathRecord], path,
                    non_illness_prefixes: Sequence[str] = DEFAULT_NON_ILLNESS_PREFIXES,
                    ) -> int:
    """Write the normalized record file; returns the number of rows written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CANONICAL_COLUMNS)
        for record in records:
            row = to_canonical(record, non_illness_prefixes)
            writer.writerow((row.year, row.week, row.sex,
                             "" if row.age_years is None else row.age_years,
                             row.cause_class))
            count += 1
    return count


def read_canonical(path, encoding: str = "utf-8") -> Iterator[CanonicalRecord]:
    """Stream canonical records back from a normalized record file."""
    with open(path, "r", encoding=encoding, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != CANONICAL_COLUMNS:
            raise IngestError(f"{path} is not a canonical record file "
                              f"(header {header})")
        for row in reader:
            if not row:
                continue
            yield CanonicalRecord(int(row[0]), int(row[1]), row[2],
                                  None if row[3] == "" else int(row[3]), row[4])


def write_rejects(rejects: Sequence[tuple[int, str]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REJECT_COLUMNS)
        writer.writerows(rejects)


def parse_registry_text(text: str, schema=None, delimiter: str = ",") -> IngestResult:
    """Convenience wrapper for in-memory registries (tests, small inputs)."""
    return parse_registry(io.StringIO(text), schema, delimiter)
