import numpy as np
import pytest

from exmort import AnnualWeeklySeries, OVERALL, PolyFit

WEEKS = np.arange(1, 53, dtype=float)


def quartic(coefficients, weeks=WEEKS):
    return np.vander(np.asarray(weeks, dtype=float), 5, increasing=True) @ \
        np.asarray(coefficients, dtype=float)


def make_series(counts, year=2010, week53=0, stratum=OVERALL, leap=None):
    import calendar
    if leap is None:
        leap = calendar.isleap(year)
    return AnnualWeeklySeries(year=year, stratum=stratum,
                              counts=np.asarray(counts, dtype=float),
                              week53_count=week53, leap=leap)


def fake_fit(year, coefficients, sigma, stratum=OVERALL):
    """PolyFit carrying exact parameter values (no fitting), for trend tests."""
    coefficients = np.asarray(coefficients, dtype=float)
    fitted = quartic(coefficients)
    return PolyFit(year=year, stratum=stratum, coefficients=coefficients,
                   fitted=fitted, residuals=np.zeros(52), sigma=sigma,
                   adj_r2=1.0, ad_stat=float("nan"), ad_pvalue=float("nan"),
                   band_lo_offset=0.0, band_hi_offset=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
