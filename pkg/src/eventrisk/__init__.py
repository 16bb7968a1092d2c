"""eventrisk: spatiotemporal emergency-event count modeling.

Library + CLI for turning dispatched-incident logs into per-region count
panels, fitting negative binomial (NB2) regression models with exposure
offsets, ranking predictive features, scoring predictions, and assigning
natural-breaks risk tiers.
"""

__version__ = "0.1.0"

from .classify import classify_regions, jenks_breaks
from .describe import correlation_matrix, describe, pearson, residual_ecdf
from .errors import EventriskError
from .evaluate import compare_periods, evaluate_model, mae, rmse
from .importance import ForestConfig, permutation_importance, rank_features, select_features
from .ingest import (
    EVENT_TYPES,
    EventRecord,
    FeatureTable,
    build_overpass_query,
    fetch_url_to_file,
    parse_events,
    parse_feature_table,
)
from .nb2 import (
    FitOptions,
    Nb2Model,
    estimate_alpha_ols,
    fit_nb2,
    fit_panel,
    fit_poisson,
    loglik_gradient,
    mean_mu,
    nb2_pmf,
    predict,
)
from .panel import Panel, aggregate, join_features, split, split_by_date
from .simulate import ScenarioSpec, generate, sample_nb2
from .spatial import (
    assign_region,
    overlap_matrix,
    project_to_plane,
    redistribute_features,
    voronoi,
)

__all__ = [
    "EVENT_TYPES",
    "EventRecord",
    "EventriskError",
    "FeatureTable",
    "FitOptions",
    "ForestConfig",
    "Nb2Model",
    "Panel",
    "ScenarioSpec",
    "aggregate",
    "assign_region",
    "build_overpass_query",
    "classify_regions",
    "compare_periods",
    "correlation_matrix",
    "describe",
    "estimate_alpha_ols",
    "evaluate_model",
    "fetch_url_to_file",
    "fit_nb2",
    "fit_panel",
    "fit_poisson",
    "generate",
    "jenks_breaks",
    "join_features",
    "loglik_gradient",
    "mae",
    "mean_mu",
    "nb2_pmf",
    "overlap_matrix",
    "parse_events",
    "parse_feature_table",
    "pearson",
    "permutation_importance",
    "predict",
    "project_to_plane",
    "rank_features",
    "redistribute_features",
    "residual_ecdf",
    "rmse",
    "sample_nb2",
    "select_features",
    "split",
    "split_by_date",
    "voronoi",
]
