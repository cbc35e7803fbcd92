import numpy as np
import pytest

from exmort import (EstimateError, TrendError, alpha_growth_rate, bias_factor,
                    fit_param_trends, forecast_year, ols_fit)
from exmort.forecast import PARAMETERS, week53_day_count

from conftest import fake_fit, make_series, quartic
from oracles import simple_line_exact

REF_YEARS = list(range(1998, 2020))


def fits_on_lines(lines, years=REF_YEARS, sigma_line=(0.0, 10.0)):
    """Fits whose parameters sit exactly on per-parameter lines (m, c)."""
    out = []
    for year in years:
        coefficients = [m * year + c for (m, c) in lines]
        sigma = sigma_line[0] * year + sigma_line[1]
        out.append(fake_fit(year, coefficients, sigma))
    return out


FLAT_LINES = [(0.0, 700.0), (0.0, -8.0), (0.0, 0.3), (0.0, -0.004),
              (0.0, 2e-5)]


# --- parameter trends --------------------------------------------------------

def test_trend_exact_line():
    lines = [(2.0, 5.0)] + FLAT_LINES[1:]
    trends = fit_param_trends(fits_on_lines(lines))
    assert trends["alpha"].slope == pytest.approx(2.0, abs=1e-9)
    assert trends["alpha"].intercept == pytest.approx(5.0, abs=1e-6)
    assert trends["alpha"].scatter == pytest.approx(0.0, abs=1e-9)


def test_trend_constant_parameter():
    trends = fit_param_trends(fits_on_lines(FLAT_LINES, sigma_line=(0.0, 25.0)))
    assert trends["beta2"].slope == pytest.approx(0.0, abs=1e-12)
    assert trends["beta2"].intercept == pytest.approx(0.3, abs=1e-9)
    assert trends["sigma"].slope == pytest.approx(0.0, abs=1e-12)
    assert trends["sigma"].intercept == pytest.approx(25.0, abs=1e-9)


def test_trend_matches_closed_form_oracle(rng):
    fits = []
    values = {}
    for year in REF_YEARS:
        coefficients = [3000.0 + 40.0 * (year - 1998) + rng.normal(0, 30),
                        -30.0 + rng.normal(0, 2),
                        1.0 + rng.normal(0, 0.1),
                        -0.02 + rng.normal(0, 0.002),
                        1e-4 + rng.normal(0, 2e-5)]
        sigma = 50.0 + 0.4 * (year - 1998) + rng.normal(0, 3)
        fits.append(fake_fit(year, coefficients, sigma))
        values[year] = coefficients + [sigma]
    trends = fit_param_trends(fits)
    for index, name in enumerate(PARAMETERS):
        series = [values[year][index] for year in REF_YEARS]
        slope, intercept = simple_line_exact(REF_YEARS, series)
        assert abs(trends[name].slope - slope) <= 1e-10 * max(1.0, abs(slope))
        assert abs(trends[name].intercept - intercept) \
            <= 1e-10 * max(1.0, abs(intercept))


def test_trend_requires_three_years():
    with pytest.raises(TrendError):
        fit_param_trends(fits_on_lines(FLAT_LINES, years=[2000, 2001]))


def test_trend_rejects_duplicate_years():
    with pytest.raises(TrendError):
        fit_param_trends(fits_on_lines(FLAT_LINES, years=[2000, 2000, 2001]))


def test_trend_leverage_closed_form():
    trends = fit_param_trends(fits_on_lines(FLAT_LINES))
    trend = trends["sigma"]
    years = np.array(REF_YEARS, dtype=float)
    expected = 1.0 / 22.0 + (2020.0 - years.mean()) ** 2 \
        / ((years - years.mean()) ** 2).sum()
    assert trend.leverage(2020) == pytest.approx(expected, rel=1e-12)


# --- alpha growth rate -------------------------------------------------------

def test_alpha_growth_flat_is_zero():
    trends = fit_param_trends(fits_on_lines(FLAT_LINES))
    assert alpha_growth_rate(trends["alpha"], 2019) == 0.0


def test_alpha_growth_arithmetic():
    lines = [(10.0, -19000.0)] + FLAT_LINES[1:]
    trends = fit_param_trends(fits_on_lines(lines, years=range(1990, 2010)))
    assert alpha_growth_rate(trends["alpha"], 2000) == pytest.approx(1.0, rel=1e-9)


def test_alpha_growth_zero_denominator():
    lines = [(1.0, -2000.0)] + FLAT_LINES[1:]
    trends = fit_param_trends(fits_on_lines(lines, years=range(1990, 2010)))
    with pytest.raises(EstimateError):
        alpha_growth_rate(trends["alpha"], 2000)


# --- bias factor -------------------------------------------------------------

def unbiased_pairs(years=REF_YEARS):
    pairs = []
    for year in years:
        counts = quartic([700.0, -8.0, 0.3, -0.004, 2e-5])
        series = make_series(counts, year=year)
        fit = ols_fit(series)
        ell = week53_day_count(series.leap)
        series.week53_count = float(fit.predict(53.0)) * ell / 7.0
        pairs.append((series, fit))
    return pairs


def test_bias_factor_unbiased_case():
    result = bias_factor(unbiased_pairs())
    assert result.value == pytest.approx(1.0, abs=1e-9)
    assert result.excluded_years == ()


def test_bias_factor_mean_of_ratios():
    pairs = unbiased_pairs(years=[2001, 2002])
    pairs[0][0].week53_count *= 0.8
    pairs[1][0].week53_count *= 1.2
    assert bias_factor(pairs).value == pytest.approx(1.0, abs=1e-9)


def test_bias_factor_excludes_nonpositive_week53_prediction():
    good = unbiased_pairs(years=[2001])
    # 530 - 10w is non-negative on weeks 1..52 but hits zero at week 53.
    counts = quartic([530.0, -10.0, 0.0, 0.0, 0.0])
    series = make_series(counts, year=2002, week53=1)
    bad_fit = ols_fit(series)
    assert bad_fit.predict(53.0) <= 1e-6
    result = bias_factor(good + [(series, bad_fit)])
    assert result.excluded_years == (2002,)
    assert result.value == pytest.approx(1.0, abs=1e-9)


def test_bias_factor_all_excluded_raises():
    counts = quartic([530.0, -10.0, 0.0, 0.0, 0.0])
    series = make_series(counts, year=2002, week53=1)
    with pytest.raises(EstimateError):
        bias_factor([(series, ols_fit(series))])


def test_bias_factor_order_free(rng):
    pairs = unbiased_pairs()
    for pair in pairs:
        pair[0].week53_count *= rng.uniform(0.8, 1.2)
    forward = bias_factor(pairs).value
    backward = bias_factor(list(reversed(pairs))).value
    assert forward == pytest.approx(backward, rel=1e-12)


def test_bias_factor_constant_daily_deaths_is_one():
    # 20 deaths/day: weekly counts 140, week 53 carries 20 per day.
    pairs = []
    for year in (2001, 2002, 2003, 2004):
        series = make_series(np.full(52, 140.0), year=year)
        series.week53_count = 20.0 * week53_day_count(series.leap)
        pairs.append((series, ols_fit(series)))
    assert bias_factor(pairs).value == pytest.approx(1.0, abs=1e-9)


# --- forecasting -------------------------------------------------------------

def test_flat_trends_reproduce_reference_curve():
    trends = fit_param_trends(fits_on_lines(FLAT_LINES))
    forecast = forecast_year(trends, 1.0, 2022)
    reference = quartic([line[1] for line in FLAT_LINES])
    assert np.allclose(forecast.expected, reference, rtol=1e-9)
    assert forecast.sigma_forecast == pytest.approx(10.0, abs=1e-9)


def test_linear_drift_reproduces_reference_year_parameters():
    lines = [(40.0, 3000.0 - 40.0 * 1998), (-0.3, -60.0 + 0.3 * 1998),
             (0.01, 2.2 - 0.01 * 1998), (-2e-4, -0.032 + 2e-4 * 1998),
             (1e-6, 1.6e-4 - 1e-6 * 1998)]
    trends = fit_param_trends(fits_on_lines(lines, sigma_line=(0.5, 60.0 - 0.5 * 1998)))
    for year in (1998, 2008, 2019):
        forecast = forecast_year(trends, 1.0, year)
        truth = np.array([m * year + c for (m, c) in lines])
        assert np.allclose(forecast.coefficients, truth, rtol=1e-9, atol=1e-12)


def test_expected_week53_leap_arithmetic():
    lines = [(0.0, 700.0)] + [(0.0, 0.0)] * 4
    trends = fit_param_trends(fits_on_lines(lines))
    leap = forecast_year(trends, 1.0, 2020, leap=True)
    common = forecast_year(trends, 1.0, 2021, leap=False)
    assert leap.expected_week53 == pytest.approx(200.0, rel=1e-9)
    assert common.expected_week53 == pytest.approx(100.0, rel=1e-9)
    assert leap.expected_week53 == pytest.approx(2.0 * common.expected_week53,
                                                 rel=1e-12)


def test_leap_default_from_calendar():
    trends = fit_param_trends(fits_on_lines(FLAT_LINES))
    assert forecast_year(trends, 1.0, 2020).leap is True
    assert forecast_year(trends, 1.0, 2021).leap is False


def test_negative_sigma_clamped_with_warning():
    trends = fit_param_trends(fits_on_lines(FLAT_LINES,
                                            sigma_line=(-1.0, 2010.0)))
    with pytest.warns(UserWarning, match="clamped"):
        forecast = forecast_year(trends, 1.0, 2020)
    assert forecast.sigma_forecast == 0.0
    assert forecast.sigma_clamped is True


def test_missing_trend_raises():
    trends = fit_param_trends(fits_on_lines(FLAT_LINES))
    del trends["sigma"]
    with pytest.raises(EstimateError):
        forecast_year(trends, 1.0, 2020)


# --- backtesting -------------------------------------------------------------

def test_backtest_recovers_held_out_year(rng):
    from exmort import backtest_year, excess_year
    lines = [(15.0, 2000.0 - 15.0 * 1998)] + FLAT_LINES[1:]
    series_by_year = {}
    for year in REF_YEARS:
        counts = quartic([lines[0][0] * year + lines[0][1]]
                         + [line[1] for line in lines[1:]])
        counts = np.maximum(counts + rng.normal(0.0, 10.0, 52), 0.0)
        series = make_series(counts, year=year)
        series.week53_count = max(0.0, counts.mean() / 7.0
                                  * week53_day_count(series.leap))
        series_by_year[year] = series
    forecast = backtest_year(series_by_year, REF_YEARS, held_out=2010)
    psi, expected_total, _ = excess_year(series_by_year[2010], forecast)
    assert abs(psi) < 0.05 * expected_total


def test_backtest_requires_reference_year():
    from exmort import backtest_year
    with pytest.raises(EstimateError):
        backtest_year({}, REF_YEARS, held_out=2030)
