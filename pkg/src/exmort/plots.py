"""SVG figure emission with sibling data tables.

Figures are written as deterministic SVG (fixed hash salt, no embedded
date) so repeated runs are byte-identical, and every figure gets a CSV
of the plotted numbers next to it so it can be audited without
rendering.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .excess import WeeklyExcess
from .seasonal import PolyFit, WEEKS, confidence_band


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "exmort"
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def _write_table(path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def fit_figure(path, counts: np.ndarray, fit: PolyFit, level: float = 0.95) -> None:
    """Observed weekly polygon, fitted curve, and residual-quantile band."""
    plt = _pyplot()
    band = confidence_band(fit, level)
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.fill_between(WEEKS, band[:, 0], band[:, 1], color="tab:green", alpha=0.25,
                    label=f"{level:.0%} band")
    ax.plot(WEEKS, fit.fitted, color="tab:green", label="fitted")
    ax.plot(WEEKS, counts, color="tab:red", lw=1.0, label="observed")
    ax.set_xlabel("week")
    ax.set_ylabel("deaths")
    title = f"{fit.year}"
    if fit.stratum is not None:
        title += f" {fit.stratum.label()}"
    ax.set_title(title)
    ax.legend()
    _save(fig, path)
    plt.close(fig)
    _write_table(Path(path).with_suffix(".csv"),
                 ("week", "observed", "fitted", "band_lo", "band_hi"),
                 ((int(w), f"{o:.6f}", f"{f:.6f}", f"{lo:.6f}", f"{hi:.6f}")
                  for w, o, f, lo, hi in zip(WEEKS, counts, fit.fitted,
                                             band[:, 0], band[:, 1])))


def weekly_excess_figure(path, curve: WeeklyExcess) -> None:
    """Observed versus expected weekly deaths for one forecast year."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(curve.weeks, curve.expected, color="tab:green", label="expected")
    ax.plot(curve.weeks, curve.observed, color="tab:red", lw=1.0, label="observed")
    ax.set_xlabel("week")
    ax.set_ylabel("deaths")
    ax.set_title(str(curve.year))
    ax.legend()
    _save(fig, path)
    plt.close(fig)
    _write_table(Path(path).with_suffix(".csv"),
                 ("week", "observed", "expected", "pct_excess"),
                 ((int(w), f"{o:.6f}", f"{e:.6f}",
                   "" if np.isnan(p) else f"{p:.6f}")
                  for w, o, e, p in zip(curve.weeks, curve.observed,
                                        curve.expected, curve.pct_excess)))


def sex_excess_figure(path, male: Sequence[WeeklyExcess],
                      female: Sequence[WeeklyExcess]) -> None:
    """Male vs female weekly percentage excess across the forecast years."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(10, 5))
    rows = []
    for label, curves, color in (("male", male, "tab:blue"),
                                 ("female", female, "tab:orange")):
        xs, ys = [], []
        for curve in sorted(curves, key=lambda c: c.year):
            xs.extend(curve.year + (curve.weeks - 1) / 52.0)
            ys.extend(curve.pct_excess)
        ax.plot(xs, ys, color=color, label=label)
        rows.extend((label, f"{x:.6f}", "" if np.isnan(y) else f"{y:.6f}")
                    for x, y in zip(xs, ys))
    ax.axhline(0.0, color="gray", lw=0.6)
    ax.set_xlabel("year")
    ax.set_ylabel("% excess")
    ax.legend()
    _save(fig, path)
    plt.close(fig)
    _write_table(Path(path).with_suffix(".csv"),
                 ("sex", "year_fraction", "pct_excess"), rows)
