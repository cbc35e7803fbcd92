import numpy as np
import pytest

from exmort import (BaselineForecast, ConfigError, DenominatorError,
                    EstimateError, OVERALL, PopulationTable, StratumKey,
                    YearExcess, estimate_period, evaluate_grid,
                    excess_interval, excess_interval_bootstrap, excess_period,
                    excess_year, periods_for, rate_per_100k, run_stratum,
                    sex_ratio, weekly_excess_curve)
from exmort.excess import ExcessEstimate, period_label
from exmort.synth import SynthConfig, synth_series

from conftest import make_series

Z975 = 1.959963984540054


def flat_forecast(year=2020, level=100.0, week53=10.0, sigma=5.0, leap=None,
                  stratum=OVERALL, bias=1.0):
    import calendar
    if leap is None:
        leap = calendar.isleap(year)
    return BaselineForecast(
        year=year, stratum=stratum,
        coefficients=np.array([level, 0.0, 0.0, 0.0, 0.0]),
        sigma_forecast=sigma, expected=np.full(52, level),
        expected_week53=week53, bias_factor=bias, leap=leap)


# --- yearly excess -----------------------------------------------------------

def test_excess_year_null():
    forecast = flat_forecast()
    series = make_series(forecast.expected, year=2020, week53=10.0)
    psi, expected_total, observed_total = excess_year(series, forecast)
    assert psi == pytest.approx(0.0, abs=1e-9)
    assert expected_total == pytest.approx(52 * 100.0 + 10.0)
    assert observed_total == pytest.approx(expected_total)


def test_excess_year_constant_shift():
    forecast = flat_forecast()
    series = make_series(forecast.expected + 10.0, year=2020, week53=10.0)
    psi, _, _ = excess_year(series, forecast)
    assert psi == pytest.approx(520.0, abs=1e-9)


def test_excess_year_negative_excess_preserved():
    forecast = flat_forecast()
    series = make_series(forecast.expected - 5.0, year=2020, week53=10.0)
    psi, expected_total, _ = excess_year(series, forecast)
    assert psi == pytest.approx(-260.0, abs=1e-9)
    assert 100.0 * psi / expected_total < 0.0


def test_excess_year_mismatch_raises():
    forecast = flat_forecast(year=2020)
    series = make_series(forecast.expected, year=2021, week53=10.0)
    with pytest.raises(EstimateError):
        excess_year(series, forecast)
    stratum = StratumKey("male", "70+")
    series = make_series(forecast.expected, year=2020, week53=10.0,
                         stratum=stratum)
    with pytest.raises(EstimateError):
        excess_year(series, forecast)


# --- period composition ------------------------------------------------------

def _year(year, psi, expected=1000.0, sigma=5.0, leap=False):
    return YearExcess(year=year, stratum=OVERALL, psi=psi,
                      expected_total=expected, observed_total=expected + psi,
                      sigma_forecast=sigma, leap=leap, bias=1.0)


def test_period_additivity():
    yearly = [_year(2020, 100.0), _year(2021, 100.0)]
    estimate = excess_period(yearly, (2020, 2021))
    assert estimate.psi == 200.0
    assert estimate.observed_total == pytest.approx(2200.0)


def test_period_sum_is_exact_float_sum():
    yearly = [_year(2020, 0.1), _year(2021, 0.2), _year(2022, 0.3)]
    estimate = excess_period(yearly, (2020, 2022))
    assert estimate.psi == 0.1 + 0.2 + 0.3  # bitwise, same summation order


def test_period_missing_year_raises():
    with pytest.raises(EstimateError, match="2021"):
        excess_period([_year(2020, 1.0), _year(2022, 1.0)], (2020, 2022))


def test_delta_psi_consistency():
    yearly = [_year(2020, 123.4, expected=3456.0)]
    estimate = excess_period(yearly, (2020, 2020))
    assert estimate.delta_psi_pct == pytest.approx(
        100.0 * estimate.psi / estimate.expected_total, abs=1e-12)


def test_periods_for_layout():
    assert periods_for([2020]) == [(2020, 2020)]
    assert periods_for([2020, 2021, 2022]) == [
        (2020, 2020), (2021, 2021), (2022, 2022), (2020, 2021), (2020, 2022)]
    assert period_label((2020, 2020)) == "2020"
    assert period_label((2020, 2022)) == "2020-2022"


# --- intervals ---------------------------------------------------------------

def test_interval_collapses_without_noise():
    lo, hi = excess_interval(42.0, [0.0, 0.0], [False, True], [1.0, 1.0])
    assert lo == hi == 42.0


def test_interval_halfwidth_formula():
    lo, hi = excess_interval(0.0, [320.0], [False], [1.0])
    half = Z975 * 320.0 * np.sqrt(52.0 + (1.0 / 7.0) ** 2)
    assert (hi - lo) / 2.0 == pytest.approx(half, rel=1e-12)
    assert round(hi) == 4524


def test_interval_leap_and_bias_enter_week53_term():
    _, hi_common = excess_interval(0.0, [100.0], [False], [1.0])
    _, hi_leap = excess_interval(0.0, [100.0], [True], [1.0])
    _, hi_biased = excess_interval(0.0, [100.0], [True], [2.0])
    assert hi_leap > hi_common
    assert hi_biased > hi_leap
    assert hi_leap == pytest.approx(
        Z975 * 100.0 * np.sqrt(52.0 + (2.0 / 7.0) ** 2), rel=1e-12)


def test_interval_level_monotone_and_validated():
    narrow = excess_interval(10.0, [50.0], [False], [1.0], level=0.90)
    wide = excess_interval(10.0, [50.0], [False], [1.0], level=0.99)
    assert wide[0] < narrow[0] < 10.0 < narrow[1] < wide[1]
    with pytest.raises(ConfigError):
        excess_interval(10.0, [50.0], [False], [1.0], level=1.0)


def test_interval_trend_leverage_inflation():
    base = excess_interval(0.0, [100.0], [False], [1.0])
    inflated = excess_interval(0.0, [100.0], [False], [1.0],
                               trend_leverages=[0.2])
    assert inflated[1] == pytest.approx(base[1] * np.sqrt(1.2), rel=1e-12)


def test_interval_multi_year_variance_adds():
    single = excess_interval(0.0, [60.0], [False], [1.0])
    double = excess_interval(0.0, [60.0, 60.0], [False, False], [1.0, 1.0])
    assert double[1] == pytest.approx(single[1] * np.sqrt(2.0), rel=1e-12)


def test_interval_negative_sigma_rejected():
    with pytest.raises(EstimateError):
        excess_interval(0.0, [-1.0], [False], [1.0])


def test_bootstrap_interval_close_to_normal(rng):
    pool = rng.standard_normal(52 * 22)
    normal = excess_interval(100.0, [320.0], [False], [1.0])
    boot = excess_interval_bootstrap(100.0, pool, [320.0], [False], [1.0],
                                     n_boot=4000, rng=np.random.default_rng(3))
    assert boot[0] <= 100.0 <= boot[1]
    assert abs(boot[0] - normal[0]) < 0.12 * (normal[1] - normal[0])
    assert abs(boot[1] - normal[1]) < 0.12 * (normal[1] - normal[0])


def test_bootstrap_interval_deterministic_given_rng(rng):
    pool = rng.standard_normal(200)
    a = excess_interval_bootstrap(0.0, pool, [10.0], [False], [1.0],
                                  rng=np.random.default_rng(11))
    b = excess_interval_bootstrap(0.0, pool, [10.0], [False], [1.0],
                                  rng=np.random.default_rng(11))
    assert a == b


# --- rates, population, ratio ------------------------------------------------

def make_population():
    entries = {}
    for year in (2020, 2021):
        for sex in ("male", "female"):
            entries[(year, StratumKey(sex, "60-69"))] = 45_000.0
            entries[(year, StratumKey(sex, "70+"))] = 5_000.0
    return PopulationTable(entries)


def test_rate_trivial_cases():
    pop = PopulationTable({(2020, OVERALL): 100_000.0})
    assert rate_per_100k(0.0, (2020, 2020), OVERALL, pop) == 0.0
    assert rate_per_100k(281.0, (2020, 2020), OVERALL, pop) == pytest.approx(281.0)


def test_rate_period_mean_denominator():
    pop = PopulationTable({(2020, OVERALL): 90_000.0,
                           (2021, OVERALL): 110_000.0})
    assert rate_per_100k(100.0, (2020, 2021), OVERALL, pop) == pytest.approx(100.0)


def test_rate_missing_denominator_names_cell():
    pop = PopulationTable({})
    with pytest.raises(DenominatorError, match="both:all"):
        rate_per_100k(1.0, (2020, 2020), OVERALL, pop)


def test_population_aggregates_derived_by_addition():
    pop = make_population()
    assert pop.population(2020, StratumKey("both", "70+")) == 10_000.0
    assert pop.population(2020, StratumKey("both", "60-69")) == 90_000.0
    # "all" needs every bracket, which this table does not provide
    with pytest.raises(DenominatorError):
        pop.population(2020, StratumKey("male", "all"))


def test_population_from_csv(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("year,sex,age_group,population\n"
                    "2020,male,70+,1000\n2020,female,70+,1100\n")
    pop = PopulationTable.from_csv(path)
    assert pop.population(2020, StratumKey("both", "70+")) == 2100.0
    bad = tmp_path / "bad.csv"
    bad.write_text("year,sex,population\n2020,male,10\n")
    with pytest.raises(ConfigError):
        PopulationTable.from_csv(bad)


def _estimate(rate, period=(2020, 2020), sex="male", age="60-69"):
    return ExcessEstimate(period=period, stratum=StratumKey(sex, age),
                          psi=1.0, expected_total=10.0, observed_total=11.0,
                          delta_psi_pct=10.0, rate_per_100k=rate)


def test_sex_ratio_cases():
    assert sex_ratio(_estimate(50.0), _estimate(50.0, sex="female")) == 1.0
    assert sex_ratio(_estimate(100.0), _estimate(50.0, sex="female")) == 2.0
    assert np.isnan(sex_ratio(_estimate(100.0), _estimate(0.0, sex="female")))
    assert np.isnan(sex_ratio(_estimate(100.0), _estimate(-5.0, sex="female")))


def test_sex_ratio_mismatches_raise():
    with pytest.raises(EstimateError):
        sex_ratio(_estimate(1.0), _estimate(1.0, sex="female", age="70+"))
    with pytest.raises(EstimateError):
        sex_ratio(_estimate(1.0), _estimate(1.0, sex="female",
                                            period=(2021, 2021)))


# --- weekly curve ------------------------------------------------------------

def test_weekly_curve_null_and_scaled():
    forecast = flat_forecast()
    series = make_series(forecast.expected, year=2020, week53=10.0)
    curve = weekly_excess_curve(series, forecast)
    assert np.allclose(curve.pct_excess, 0.0)
    series = make_series(forecast.expected * 1.5, year=2020, week53=10.0)
    curve = weekly_excess_curve(series, forecast)
    assert np.allclose(curve.pct_excess, 50.0)
    assert curve.flagged_weeks == ()


def test_weekly_curve_flags_nonpositive_expected():
    forecast = flat_forecast()
    forecast.expected = forecast.expected.copy()
    forecast.expected[10] = 0.0
    series = make_series(np.full(52, 100.0), year=2020, week53=10.0)
    curve = weekly_excess_curve(series, forecast)
    assert curve.flagged_weeks == (11,)
    assert np.isnan(curve.pct_excess[10])
    assert np.isfinite(curve.pct_excess[[w for w in range(52) if w != 10]]).all()


def test_weekly_curve_shock_peaks_in_shock_weeks():
    config = SynthConfig(
        reference_years=(2005, 2019),
        coefficient_trends={"alpha": (0.0, 800.0), "beta1": (0.0, -8.0),
                            "beta2": (0.0, 0.3), "beta3": (0.0, -0.004),
                            "beta4": (0.0, 2e-5), "sigma": (0.0, 12.0)},
        shock_years={2020: (3000.0, (25, 35))},
        seed=99)
    series, _ = synth_series(config)
    pipeline = run_stratum(series, list(range(2005, 2020)), [2020], OVERALL)
    curve = weekly_excess_curve(series[2020], pipeline.forecasts[2020])
    peak_week = int(np.nanargmax(curve.pct_excess)) + 1
    assert 25 <= peak_week <= 35


# --- grid --------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_grid():
    strata = (OVERALL, StratumKey("male", "all"), StratumKey("female", "all"))
    config = SynthConfig(
        reference_years=(2008, 2019),
        coefficient_trends={"alpha": (2.0, 400.0 - 2.0 * 2008),
                            "beta1": (0.0, -6.0), "beta2": (0.0, 0.25),
                            "beta3": (0.0, -0.003), "beta4": (0.0, 1.5e-5),
                            "sigma": (0.0, 10.0)},
        shock_years={2020: (1500.0, (20, 36)), 2021: (0.0, (20, 36)),
                     2022: (0.0, (20, 36))},
        seed=12345)
    overall, _ = synth_series(config)
    rng = np.random.default_rng(4242)
    series_map = {}
    for year, series in overall.items():
        males = rng.binomial(series.counts.astype(int), 0.5)
        males53 = int(rng.binomial(int(series.week53_count), 0.5))
        for stratum, counts, week53 in (
                (OVERALL, series.counts, series.week53_count),
                (StratumKey("male", "all"), males, males53),
                (StratumKey("female", "all"), series.counts - males,
                 series.week53_count - males53)):
            series_map[(year, stratum)] = make_series(
                counts, year=year, week53=week53, stratum=stratum)
    pop = PopulationTable({(year, stratum): 200_000.0
                           for year in overall for stratum in strata})
    return series_map, strata, pop


def test_grid_shape_order_and_invariants(small_grid):
    series_map, strata, pop = small_grid
    estimates, pipelines = evaluate_grid(
        series_map, list(range(2008, 2020)), [2020, 2021, 2022],
        strata=strata, pop=pop)
    assert len(estimates) == 5 * len(strata)
    labels = [(period_label(e.period), e.stratum.label()) for e in estimates]
    assert labels[0] == ("2020", "both:all")
    assert labels[-1] == ("2020-2022", "female:all")
    for estimate in estimates:
        assert estimate.psi_ci[0] <= estimate.psi <= estimate.psi_ci[1]
        assert estimate.delta_psi_ci[0] <= estimate.delta_psi_pct \
            <= estimate.delta_psi_ci[1]
        assert estimate.rate_ci[0] <= estimate.rate_per_100k <= estimate.rate_ci[1]
        assert estimate.delta_psi_pct == pytest.approx(
            100.0 * estimate.psi / estimate.expected_total, abs=1e-12)


def test_grid_period_additivity_is_exact(small_grid):
    series_map, strata, pop = small_grid
    estimates, _ = evaluate_grid(series_map, list(range(2008, 2020)),
                                 [2020, 2021, 2022], strata=strata, pop=pop)
    index = {(e.period, e.stratum): e for e in estimates}
    for stratum in strata:
        singles = [index[((year, year), stratum)].psi for year in (2020, 2021, 2022)]
        assert index[((2020, 2022), stratum)].psi == sum(singles)


def test_grid_bootstrap_method(small_grid):
    series_map, strata, pop = small_grid
    estimates, _ = evaluate_grid(series_map, list(range(2008, 2020)),
                                 [2020, 2021, 2022], strata=strata, pop=pop,
                                 ci_method="bootstrap", n_boot=500, seed=9)
    normal, _ = evaluate_grid(series_map, list(range(2008, 2020)),
                              [2020, 2021, 2022], strata=strata, pop=pop)
    for boot, norm in zip(estimates, normal):
        assert boot.psi == norm.psi
        assert boot.psi_ci[0] <= boot.psi <= boot.psi_ci[1]
        width_ratio = (boot.psi_ci[1] - boot.psi_ci[0]) \
            / (norm.psi_ci[1] - norm.psi_ci[0])
        assert 0.7 < width_ratio < 1.3


def test_estimate_period_requires_known_method(small_grid):
    series_map, strata, _ = small_grid
    pipeline = run_stratum({year: series_map[(year, OVERALL)]
                            for year in range(2008, 2023)},
                           list(range(2008, 2020)), [2020], OVERALL)
    with pytest.raises(ConfigError):
        estimate_period(pipeline, (2020, 2020), ci_method="jackknife")
