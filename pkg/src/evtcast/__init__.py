"""Dynamic extreme value forecasting of envelope-index exceedances.

Pipeline: raw high-frequency traces -> band filtering -> analytic-signal
envelope and decibel index -> rolling covariate features -> EVT-guided
threshold selection -> logistic exceedance regression plus fixed-shape GPD
excess regression -> horizon-ahead tail probabilities.
"""

from .envelope import (AnalyticSignal, EnvelopeIndexSeries, analytic_weights, db_index,
                       dft, envelope, hilbert, idft)
from .errors import EvtcastError
from .evt import (ExceedanceDataset, GpdFit, ThresholdSelection, exceedances,
                  fit_gpd_constant, gof_pvalues, multi_event_threshold, threshold_scan)
from .features import (FeatureVector, FeatureWindow, extract_features, feature_matrix,
                       to_domain)
from .forecast import (FittedPipeline, ForecastConfig, ForecastSeries, build_dataset,
                       forecast, load_pipeline, return_level, save_pipeline, train)
from .preprocess import (CovariateMatrix, TransformSpec, apply_transform, boxcox_select,
                         fit_standardizer, prune_collinear)
from .regress import (GpdModel, LogisticModel, choose_shape, excess_survival,
                      fit_exponential_regression, fit_gpd_regression, fit_logistic,
                      predict_phi, stepwise_aic)
from .trace import BandSpec, SeismicTrace, bandpass, decimate, load_trace, write_trace

__version__ = "0.1.0"
MODEL_SCHEMA_VERSION = 1

__all__ = [
    "AnalyticSignal", "BandSpec", "CovariateMatrix", "EnvelopeIndexSeries",
    "EvtcastError", "ExceedanceDataset", "FeatureVector", "FeatureWindow",
    "FittedPipeline", "ForecastConfig", "ForecastSeries", "GpdFit", "GpdModel",
    "LogisticModel", "SeismicTrace", "ThresholdSelection", "TransformSpec",
    "analytic_weights", "apply_transform", "bandpass", "boxcox_select",
    "build_dataset", "choose_shape", "db_index", "decimate", "dft", "envelope",
    "exceedances", "excess_survival", "extract_features", "feature_matrix",
    "fit_exponential_regression", "fit_gpd_constant", "fit_gpd_regression",
    "fit_logistic", "fit_standardizer", "forecast", "gof_pvalues", "hilbert",
    "idft", "load_pipeline", "load_trace", "multi_event_threshold", "predict_phi",
    "prune_collinear", "return_level", "save_pipeline", "stepwise_aic",
    "threshold_scan", "to_domain", "train", "write_trace",
]
