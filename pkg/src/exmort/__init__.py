"""Excess mortality estimation from weekly death counts.

Pipeline: parse a death registry, aggregate illness deaths into
stratified weekly series, fit a quartic seasonal baseline per year,
extrapolate the fitted parameters along linear trends, and contrast
observed against expected deaths with point and interval estimates.
"""

__version__ = "0.1.0"

from .aggregate import (AGE_GROUPS, ALL_AGES, BOTH, OVERALL,
                        AnnualWeeklySeries, StratumKey, age_group_of,
                        build_series, full_grid, series_total)
from .errors import (ConfigError, DegenerateSampleError, DenominatorError,
                     EstimateError, ExmortError, FitError, IngestError,
                     TrendError)
from .excess import (ExcessEstimate, PopulationTable, WeeklyExcess,
                     YearExcess, estimate_period, evaluate_grid,
                     excess_interval, excess_interval_bootstrap,
                     excess_period, excess_year, periods_for, rate_per_100k,
                     run_stratum, sex_ratio, weekly_excess_curve, year_excess)
from .forecast import (BaselineForecast, BiasFactorResult, ParamTrend,
                       alpha_growth_rate, backtest_year, bias_factor,
                       fit_param_trends, forecast_year)
from .ingest import (DEFAULT_NON_ILLNESS_PREFIXES, DEFAULT_SCHEMA,
                     CanonicalRecord, DeathRecord, IngestResult,
                     classify_cause, non_illness_share_by_year,
                     parse_registry, parse_registry_file, read_canonical,
                     week_of, write_canonical)
from .seasonal import (PolyFit, adjusted_r2, anderson_darling,
                       confidence_band, design_matrix, ols_fit)
from .synth import (GroundTruth, SynthConfig, demo_config, generate_registry,
                    ground_truth_excess, synth_series, uniform_daily_series,
                    weekly_counts)
