"""Causal effects of algorithmic recommendations via approximate propensity scores."""

from .algorithms import (DecisionRule, affine_rule, by_group_rule, cares_funding,
                         cares_rule, cares_rule_and_funding, constant_rule,
                         epsilon_band_rule, eval_rule, kmeans_target_rule, quantile_band_rule,
                         rule_from_descriptor, threshold_rule, thompson_gaussian_rule,
                         tree_rule_quadrant, ucb_rule)
from .aps import (ApsConfig, ApsResult, analytic_aps_univariate_threshold, cap_fraction,
                  default_draws, half_space_aps, sample_uniform_ball, simulate_aps)
from .core import (Dataset, PotentialOutcomes, StandardizationMap, make_rng_streams,
                   rng_stream, standardize)
from . import errors
from .estimators import (EstimateReport, RegressionSpec, bandwidth_sweep, naive_ols,
                         naive_tsls, ols_balance, ols_recommendation, sweep_table, tsls_aps)
from .simulation import (DgpConfig, McSummary, OracleEstimands, fit_tau_pred, generate_sample,
                         oracle_estimands, population_estimands, propensity_weighted_effect,
                         run_monte_carlo)

__version__ = "0.1.0"

__all__ = [
    "DecisionRule",
    "affine_rule",
    "by_group_rule",
    "cares_funding",
    "cares_rule",
    "cares_rule_and_funding",
    "constant_rule",
    "epsilon_band_rule",
    "eval_rule",
    "kmeans_target_rule",
    "quantile_band_rule",
    "rule_from_descriptor",
    "threshold_rule",
    "thompson_gaussian_rule",
    "tree_rule_quadrant",
    "ucb_rule",
    "ApsConfig",
    "ApsResult",
    "analytic_aps_univariate_threshold",
    "cap_fraction",
    "default_draws",
    "half_space_aps",
    "sample_uniform_ball",
    "simulate_aps",
    "Dataset",
    "PotentialOutcomes",
    "StandardizationMap",
    "make_rng_streams",
    "rng_stream",
    "standardize",
    "EstimateReport",
    "RegressionSpec",
    "bandwidth_sweep",
    "naive_ols",
    "naive_tsls",
    "ols_balance",
    "ols_recommendation",
    "sweep_table",
    "tsls_aps",
    "DgpConfig",
    "McSummary",
    "OracleEstimands",
    "fit_tau_pred",
    "generate_sample",
    "oracle_estimands",
    "population_estimands",
    "propensity_weighted_effect",
    "run_monte_carlo",
    "errors",
]
