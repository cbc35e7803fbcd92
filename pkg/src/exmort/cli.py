"""Command-line pipeline: ingest, fit, forecast, excess, report, simulate.

Each stage reads and writes documented files so partial re-runs are
possible; a run manifest (config echo plus input digests) makes every
emitted number recomputable from the canonical record file.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aggregate import (AGE_GROUPS, ALL_AGES, OVERALL, StratumKey,
                        build_series, full_grid, series_total,
                        write_series_table)
from .errors import ConfigError, ExmortError
from .excess import (ExcessEstimate, PopulationTable, evaluate_grid,
                     period_label, periods_for, sex_ratio,
                     weekly_excess_curve)
from .forecast import PARAMETERS, alpha_growth_rate
from .ingest import (DEFAULT_NON_ILLNESS_PREFIXES, DEFAULT_SCHEMA,
                     non_illness_share_by_year, parse_registry_file,
                     read_canonical, write_canonical)
from .seasonal import ols_fit
from .synth import SynthConfig, demo_config, generate_registry

DEFAULT_CONFIG = {
    "delimiter": ",",
    "encoding": "utf-8",
    "schema": dict(DEFAULT_SCHEMA),
    "non_illness_prefixes": list(DEFAULT_NON_ILLNESS_PREFIXES),
    "residual_ddof": 0,
    "trend_inflation": True,
    "bootstrap_reps": 2000,
}


def _fmt(value, spec: str = ".15g") -> str:
    if value is None:
        return ""
    if isinstance(value, float) and np.isnan(value):
        return "nan"
    return format(value, spec)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_config(path: str | None) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                user = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for key, value in user.items():
            if key == "schema":
                config["schema"].update(value)
            else:
                config[key] = value
    return config


def _write_manifest(out_dir: Path, command: str, config: dict,
                    inputs: list[Path], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _year_range(text: str) -> tuple[int, int]:
    try:
        start, _, end = text.partition(":")
        lo, hi = int(start), int(end)
    except ValueError:
        raise ConfigError(f"year range must look like 1998:2019, got {text!r}") from None
    if hi < lo:
        raise ConfigError(f"year range {text!r} is reversed")
    return lo, hi


def _parse_strata(text: str | None) -> tuple[StratumKey, ...]:
    if text is None:
        return full_grid()
    try:
        return tuple(StratumKey.parse(item) for item in text.split(",") if item)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _pipeline_years(args) -> tuple[list[int], list[int]]:
    reference = _year_range(args.reference_years)
    forecast_range = _year_range(args.forecast_years)
    if forecast_range[0] <= reference[1]:
        raise ConfigError(f"forecast years {args.forecast_years} must follow "
                          f"the reference years {args.reference_years}")
    return (list(range(reference[0], reference[1] + 1)),
            list(range(forecast_range[0], forecast_range[1] + 1)))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args, config: dict) -> int:
    out = _out_dir(args)
    records = []
    rejects = []
    for path in args.input:
        result = parse_registry_file(path, config["schema"],
                                     delimiter=config["delimiter"],
                                     encoding=config["encoding"])
        records.extend(result.records)
        rejects.extend((str(path), row, reason) for row, reason in result.rejects)

    canonical = out / "canonical.csv"
    written = write_canonical(records, canonical,
                              tuple(config["non_illness_prefixes"]))
    reject_path = out / "rejects.csv"
    with open(reject_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("file", "row", "reason"))
        writer.writerows(rejects)

    shares = non_illness_share_by_year(records,
                                       tuple(config["non_illness_prefixes"]))
    with open(out / "non_illness_share.csv", "w", encoding="utf-8",
              newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("year", "pct_non_illness"))
        writer.writerows((year, _fmt(pct, ".6f")) for year, pct in shares.items())

    _write_manifest(out, args.command, config, [Path(p) for p in args.input])
    print(f"ingest: accepted={written} rejected={len(rejects)} "
          f"canonical={canonical} rejects={reject_path}")
    return 0


def _load_series(args, config: dict, years: list[int],
                 strata: tuple[StratumKey, ...]):
    records = read_canonical(args.input, encoding=config["encoding"])
    return build_series(records, years, strata)


def _fit_strata(series_map, reference_years, strata, residual_ddof):
    """Diagnostics rows plus the fits, flagging empty cells instead of failing."""
    rows = []
    fits = {}
    for stratum in strata:
        for year in reference_years:
            series = series_map[(year, stratum)]
            if series_total(series) == 0:
                rows.append([year, stratum.sex, stratum.age_group, "empty"]
                            + [""] * 9)
                continue
            fit = ols_fit(series, residual_ddof=residual_ddof)
            fits[(year, stratum)] = fit
            rows.append([year, stratum.sex, stratum.age_group, "ok"]
                        + [_fmt(c) for c in fit.coefficients]
                        + [_fmt(fit.sigma), _fmt(fit.adj_r2),
                           _fmt(fit.ad_stat), _fmt(fit.ad_pvalue)])
    return rows, fits


_DIAG_HEADER = ("year", "sex", "age_group", "status", "alpha", "beta1", "beta2",
                "beta3", "beta4", "sigma", "adj_r2", "ad_stat", "ad_pvalue")


def cmd_fit(args, config: dict) -> int:
    out = _out_dir(args)
    reference = _year_range(args.reference_years)
    strata = _parse_strata(args.strata)
    years = list(range(reference[0], reference[1] + 1))
    series_map = _load_series(args, config, years, strata)
    write_series_table(series_map, out / "weekly_counts.csv")
    rows, fits = _fit_strata(series_map, years, strata, config["residual_ddof"])

    with open(out / "fit_diagnostics.csv", "w", encoding="utf-8",
              newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_DIAG_HEADER)
        writer.writerows(rows)

    if args.plots:
        from .plots import fit_figure
        for (year, stratum), fit in fits.items():
            if stratum != OVERALL and not args.all_plots:
                continue
            name = f"fit_{year}_{stratum.sex}_{stratum.age_group.replace('+', 'plus')}"
            fit_figure(out / f"{name}.svg",
                       series_map[(year, stratum)].counts, fit)

    _write_manifest(out, args.command, config, [Path(args.input)])
    print(f"fit: {len(rows)} cells "
          f"({sum(1 for r in rows if r[3] == 'empty')} empty) -> "
          f"{out / 'fit_diagnostics.csv'}")
    return 0


def cmd_forecast(args, config: dict) -> int:
    out = _out_dir(args)
    ref_years, fc_years = _pipeline_years(args)
    strata = _parse_strata(args.strata)
    series_map = _load_series(args, config, ref_years + fc_years, strata)

    _, pipelines = evaluate_grid(series_map, ref_years, fc_years, strata,
                                 residual_ddof=config["residual_ddof"],
                                 trend_inflation=config["trend_inflation"])

    with open(out / "param_trends.csv", "w", encoding="utf-8",
              newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("sex", "age_group", "parameter", "slope", "intercept",
                         "scatter"))
        for stratum in strata:
            trends = pipelines[stratum].trends
            for name in PARAMETERS:
                trend = trends[name]
                writer.writerow((stratum.sex, stratum.age_group, name,
                                 _fmt(trend.slope), _fmt(trend.intercept),
                                 _fmt(trend.scatter)))

    with open(out / "forecasts.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("year", "sex", "age_group", "alpha", "beta1", "beta2",
                         "beta3", "beta4", "sigma_forecast", "bias_factor",
                         "expected_total"))
        for stratum in strata:
            pipe = pipelines[stratum]
            for year in fc_years:
                forecast = pipe.forecasts[year]
                writer.writerow((year, stratum.sex, stratum.age_group)
                                + tuple(_fmt(c) for c in forecast.coefficients)
                                + (_fmt(forecast.sigma_forecast),
                                   _fmt(forecast.bias_factor),
                                   _fmt(forecast.expected.sum()
                                        + forecast.expected_week53)))

    summary = {}
    for stratum in strata:
        pipe = pipelines[stratum]
        summary[stratum.label()] = {
            "bias_factor": pipe.bias,
            "bias_excluded_years": list(pipe.bias_excluded),
            "alpha_growth_pct_at_last_reference":
                alpha_growth_rate(pipe.trends["alpha"], ref_years[-1]),
        }
    with open(out / "forecast_summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")

    _write_manifest(out, args.command, config, [Path(args.input)])
    print(f"forecast: {len(strata)} strata x {len(fc_years)} years -> "
          f"{out / 'forecasts.csv'}")
    return 0


_ESTIMATE_HEADER = ("period", "sex", "age_group", "psi", "psi_lo", "psi_hi",
                    "pct", "pct_lo", "pct_hi", "rate_per_100k", "rate_lo",
                    "rate_hi", "expected_total", "observed_total")


def _estimate_row(est: ExcessEstimate) -> tuple:
    rate = est.rate_per_100k
    rate_ci = est.rate_ci or (None, None)
    return (period_label(est.period), est.stratum.sex, est.stratum.age_group,
            _fmt(est.psi, ".12g"), _fmt(est.psi_ci[0], ".12g"),
            _fmt(est.psi_ci[1], ".12g"), _fmt(est.delta_psi_pct, ".12g"),
            _fmt(est.delta_psi_ci[0], ".12g"), _fmt(est.delta_psi_ci[1], ".12g"),
            _fmt(rate, ".12g"), _fmt(rate_ci[0], ".12g"), _fmt(rate_ci[1], ".12g"),
            _fmt(est.expected_total, ".12g"), _fmt(est.observed_total, ".12g"))


def _estimate_json(est: ExcessEstimate) -> dict:
    return {
        "period": period_label(est.period),
        "sex": est.stratum.sex,
        "age_group": est.stratum.age_group,
        "psi": est.psi,
        "psi_ci": list(est.psi_ci) if est.psi_ci else None,
        "delta_psi_pct": est.delta_psi_pct,
        "delta_psi_ci": list(est.delta_psi_ci) if est.delta_psi_ci else None,
        "rate_per_100k": est.rate_per_100k,
        "rate_ci": list(est.rate_ci) if est.rate_ci else None,
        "expected_total": est.expected_total,
        "observed_total": est.observed_total,
    }


def cmd_excess(args, config: dict) -> int:
    out = _out_dir(args)
    ref_years, fc_years = _pipeline_years(args)
    strata = _parse_strata(args.strata)
    series_map = _load_series(args, config, ref_years + fc_years, strata)
    pop = (PopulationTable.from_csv(args.population, encoding=config["encoding"])
           if args.population else None)

    estimates, pipelines = evaluate_grid(
        series_map, ref_years, fc_years, strata, pop=pop,
        level=args.ci_level, ci_method=args.ci_method,
        residual_ddof=config["residual_ddof"],
        trend_inflation=config["trend_inflation"],
        n_boot=config["bootstrap_reps"], seed=args.seed)

    with open(out / "estimates.csv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_ESTIMATE_HEADER)
        writer.writerows(_estimate_row(est) for est in estimates)
    with open(out / "estimates.json", "w", encoding="utf-8") as handle:
        json.dump([_estimate_json(est) for est in estimates], handle,
                  indent=2, sort_keys=True)
        handle.write("\n")

    # Paper-style layout: one table per (period, sex), age groups as rows.
    by_key = {(est.period, est.stratum.sex, est.stratum.age_group): est
              for est in estimates}
    periods = periods_for(fc_years)
    sexes = sorted({s.sex for s in strata})
    ages = [a for a in AGE_GROUPS + (ALL_AGES,)
            if any(s.age_group == a for s in strata)]
    for period in periods:
        for sex in sexes:
            rows = [by_key[(period, sex, age)] for age in ages
                    if (period, sex, age) in by_key]
            if not rows:
                continue
            name = f"table_{period_label(period)}_{sex}.csv"
            with open(out / name, "w", encoding="utf-8", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(_ESTIMATE_HEADER[2:])
                writer.writerows(_estimate_row(est)[2:] for est in rows)

    if pop is not None:
        _write_sex_ratios(out, by_key, periods, ages)

    if not args.no_plots:
        _excess_figures(out, series_map, pipelines, fc_years, strata)

    inputs = [Path(args.input)] + ([Path(args.population)] if args.population else [])
    _write_manifest(out, args.command, config, inputs,
                    extra={"periods": [period_label(p) for p in periods]})
    print(f"excess: {len(estimates)} estimates "
          f"({len(periods)} periods x {len(strata)} strata) -> "
          f"{out / 'estimates.csv'}")
    return 0


def _write_sex_ratios(out: Path, by_key, periods, ages) -> None:
    rows = []
    for period in periods:
        for age in ages:
            male = by_key.get((period, "male", age))
            female = by_key.get((period, "female", age))
            if male is None or female is None or male.rate_per_100k is None:
                continue
            ratio = sex_ratio(male, female)
            rows.append((period_label(period), age,
                         "undefined" if np.isnan(ratio) else _fmt(ratio, ".6g")))
    if rows:
        with open(out / "sex_ratios.csv", "w", encoding="utf-8",
                  newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(("period", "age_group", "male_female_rate_ratio"))
            writer.writerows(rows)


def _excess_figures(out, series_map, pipelines, fc_years, strata) -> None:
    from .plots import sex_excess_figure, weekly_excess_figure

    if OVERALL in pipelines:
        for year in fc_years:
            curve = weekly_excess_curve(series_map[(year, OVERALL)],
                                        pipelines[OVERALL].forecasts[year])
            weekly_excess_figure(out / f"weekly_excess_{year}.svg", curve)

    male_all = StratumKey("male", ALL_AGES)
    female_all = StratumKey("female", ALL_AGES)
    if male_all in pipelines and female_all in pipelines:
        male = [weekly_excess_curve(series_map[(y, male_all)],
                                    pipelines[male_all].forecasts[y])
                for y in fc_years]
        female = [weekly_excess_curve(series_map[(y, female_all)],
                                      pipelines[female_all].forecasts[y])
                  for y in fc_years]
        sex_excess_figure(out / "sex_pct_excess.svg", male, female)


def cmd_report(args, config: dict) -> int:
    status = cmd_fit(args, config)
    if status:
        return status
    status = cmd_forecast(args, config)
    if status:
        return status
    return cmd_excess(args, config)


def _synth_config(args, config: dict) -> SynthConfig:
    base = demo_config(seed=args.seed if args.seed is not None else 20260101)
    user = config.get("synth")
    if not user:
        return base
    trends = dict(base.coefficient_trends)
    for name, pair in user.get("coefficient_trends", {}).items():
        trends[name] = (float(pair[0]), float(pair[1]))
    shocks = {int(year): (float(mass), (int(w0), int(w1)))
              for year, (mass, (w0, w1)) in user.get("shock_years",
                                                     dict()).items()} \
        if "shock_years" in user else dict(base.shock_years)
    return SynthConfig(
        reference_years=tuple(user.get("reference_years",
                                       base.reference_years)),
        coefficient_trends=trends,
        shock_years=shocks,
        registration_lag_pct=user.get("registration_lag_pct",
                                      base.registration_lag_pct),
        non_illness_share=user.get("non_illness_share",
                                   base.non_illness_share),
        seed=args.seed if args.seed is not None else user.get("seed", base.seed),
    )


def cmd_simulate(args, config: dict) -> int:
    out = _out_dir(args)
    synth = _synth_config(args, config)
    registry = out / "registry.csv"
    truth = generate_registry(synth, registry, out / "ground_truth.json")
    _write_population(out / "population.csv", synth)
    _write_manifest(out, args.command, config, [],
                    extra={"seed": synth.seed,
                           "years": synth.years()})
    total = sum(t.illness_total + t.non_illness_total
                for t in truth.years.values())
    print(f"simulate: {total} records over {len(truth.years)} years -> {registry}")
    return 0


def _write_population(path, synth: SynthConfig) -> None:
    """Synthetic denominators: 1% yearly growth, fixed sex/age structure."""
    weights = np.array([6, 5, 9, 10, 10, 10, 10, 10, 15], dtype=float)
    weights /= weights.sum()
    base_year = synth.years()[0]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("year", "sex", "age_group", "population"))
        for year in synth.years():
            total = 1_000_000.0 * 1.01 ** (year - base_year)
            for sex, share in (("male", 0.49), ("female", 0.51)):
                for age, weight in zip(AGE_GROUPS, weights):
                    writer.writerow((year, sex, age,
                                     _fmt(total * share * weight, ".2f")))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exmort",
        description="Excess mortality estimation from weekly death counts.")
    parser.add_argument("--config", help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw registry files")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="fit the seasonal model per year and stratum")
    _common_pipeline_args(p, forecast=False)
    p.add_argument("--plots", action="store_true",
                   help="emit fit figures for the overall stratum")
    p.add_argument("--all-plots", action="store_true",
                   help="emit fit figures for every stratum")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="trend parameters and forecast baselines")
    _common_pipeline_args(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("excess", help="estimate excess mortality over the grid")
    _common_pipeline_args(p)
    _excess_args(p)
    p.set_defaults(func=cmd_excess)

    p = sub.add_parser("report", help="fit + forecast + excess in one run")
    _common_pipeline_args(p)
    _excess_args(p)
    p.add_argument("--plots", action="store_true")
    p.add_argument("--all-plots", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="generate a synthetic registry")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)
    return parser


def _common_pipeline_args(p, forecast: bool = True) -> None:
    p.add_argument("--input", required=True, help="canonical record file")
    p.add_argument("--out", required=True)
    p.add_argument("--reference-years", required=True, metavar="A:B")
    if forecast:
        p.add_argument("--forecast-years", required=True, metavar="A:B")
    p.add_argument("--strata", default=None,
                   help="comma-separated sex:age_group labels (default: full grid)")


def _excess_args(p) -> None:
    p.add_argument("--population", default=None, help="population table CSV")
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--ci-method", choices=("normal", "bootstrap"),
                   default="normal")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-plots", action="store_true")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except ExmortError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
