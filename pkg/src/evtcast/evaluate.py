"""Model evaluation: AUC, deviance test, residual autocorrelations, QQ data.

All operations are pure computations returning plain data; rendering (CSV or
figures) happens downstream in the CLI.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats as _stats

from . import evt, regress
from .errors import MetricUndefinedError, ParameterError
from .evt import ExceedanceDataset
from .preprocess import CovariateMatrix

logger = logging.getLogger(__name__)

SWEEP_FRACTIONS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def auc(scores, labels) -> float:
    """Area under the ROC curve by midranks (ties count one half).

    Equals the probability that a random positive outscores a random
    negative.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ParameterError("scores and labels must have equal length")
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        raise MetricUndefinedError("AUC undefined: both classes must be present")
    ranks = _stats.rankdata(scores)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


class DevianceResult(NamedTuple):
    statistic: float
    df: int
    p_value: float


def deviance_test(model: regress.LogisticModel, X: CovariateMatrix,
                  indicators) -> DevianceResult:
    """Likelihood-ratio test of the fitted logistic model against intercept-only.

    The statistic is 2*(loglik_model - loglik_null) on the given (training)
    data, chi-squared with one degree of freedom per covariate.
    """
    I = np.asarray(indicators, dtype=float)
    if I.size != X.n_rows:
        raise ParameterError("indicator length must match the covariate matrix")
    n1 = I.sum()
    n0 = I.size - n1
    if n1 == 0 or n0 == 0:
        raise ParameterError("deviance test needs both classes present")
    ll_model = regress.logistic_loglik(model.linear_predictor(X), I)
    pbar = n1 / I.size
    ll_null = float(n1 * np.log(pbar) + n0 * np.log(1.0 - pbar))
    stat = max(0.0, 2.0 * (ll_model - ll_null))
    df = len(model.coefficients)
    if df == 0:
        return DevianceResult(stat, 0, 1.0)
    return DevianceResult(stat, df, float(_stats.chi2.sf(stat, df)))


# ---------------------------------------------------------------------------
# residual autocorrelations
# ---------------------------------------------------------------------------

@dataclass
class AcfResult:
    """Sample ACF with Bartlett confidence halfwidths for a white-noise null."""

    lags: np.ndarray
    values: np.ndarray
    halfwidths: np.ndarray
    n: int


def sample_acf(x: np.ndarray, max_lag: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    centered = x - x.mean()
    denom = float(np.dot(centered, centered))
    if denom == 0.0:
        raise ParameterError("zero-variance series has no autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(np.dot(centered[:-k], centered[k:]) / denom)
    return out


def _bartlett_halfwidths(acf_values: np.ndarray, n: int) -> np.ndarray:
    """1.96*sqrt((1 + 2*sum_{j<k} r_j^2)/n): exact 1.96/sqrt(n) at lag 1."""
    hw = np.zeros_like(acf_values)
    cum = 0.0
    for k in range(1, acf_values.size):
        hw[k] = 1.96 * np.sqrt((1.0 + 2.0 * cum) / n)
        cum += acf_values[k] ** 2
    return hw


def pearson_residuals(model: regress.LogisticModel, X: CovariateMatrix,
                      indicators) -> np.ndarray:
    """(I - phi_hat)/sqrt(phi_hat*(1 - phi_hat)) on the given rows."""
    I = np.asarray(indicators, dtype=float)
    phi = model.phi(X)
    return (I - phi) / np.sqrt(phi * (1.0 - phi))


def excess_residuals(model: regress.GpdModel, X: CovariateMatrix, z) -> np.ndarray:
    """Observed excesses minus the fitted conditional GPD mean nu/(1 - xi)."""
    if model.xi_fixed >= 1.0:
        raise ParameterError("GPD mean undefined for shape >= 1")
    z = np.asarray(z, dtype=float)
    if z.size != X.n_rows:
        raise ParameterError("excess length must match the covariate matrix")
    return z - model.nu(X) / (1.0 - model.xi_fixed)


def residual_acf(kind: str, model, X: CovariateMatrix, data, max_lag: int) -> AcfResult:
    """ACF of model residuals with 95% Bartlett bands.

    ``kind`` is ``pearson_logistic`` (data: exceedance indicators) or
    ``excess_gpd`` (data: positive excesses on the exceedance rows).
    """
    if kind == "pearson_logistic":
        resid = pearson_residuals(model, X, data)
    elif kind == "excess_gpd":
        resid = excess_residuals(model, X, data)
    else:
        raise ParameterError(f"unknown residual kind {kind!r}")
    if resid.size <= max_lag + 1:
        raise ParameterError(
            f"need more than {max_lag + 1} residuals for lags up to {max_lag}")
    values = sample_acf(resid, max_lag)
    return AcfResult(np.arange(max_lag + 1), values,
                     _bartlett_halfwidths(values, resid.size), resid.size)


# ---------------------------------------------------------------------------
# QQ of standardized excesses
# ---------------------------------------------------------------------------

def qq_standardised_excesses(model: regress.GpdModel, X: CovariateMatrix,
                             z) -> np.ndarray:
    """(theoretical, empirical) quantile pairs of scale-standardized excesses.

    Each excess is divided by its fitted scale, which makes it unit-scale GPD
    with the fixed shape; theoretical quantiles use plotting positions
    (i - 0.5)/n.
    """
    z = np.asarray(z, dtype=float)
    if z.size < 10:
        raise ParameterError(f"need at least 10 excesses for a QQ plot, got {z.size}")
    standardized = np.sort(z / model.nu(X))
    n = standardized.size
    p = (np.arange(1, n + 1) - 0.5) / n
    theoretical = evt.gpd_ppf(p, model.xi_fixed, 1.0)
    return np.column_stack([theoretical, standardized])


# ---------------------------------------------------------------------------
# threshold sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepEntry:
    fraction: float
    threshold: float
    auc: float  # NaN when undefined
    defined: bool


def threshold_sweep(train_fn: Callable[[float], tuple[np.ndarray, np.ndarray]],
                    u_evt: float,
                    fractions: Sequence[float] = SWEEP_FRACTIONS) -> list[SweepEntry]:
    """Training AUC after retraining the exceedance model at u*fraction.

    Fractions are applied on the dB scale.  ``train_fn(threshold)`` must
    retrain and return (scores, labels) on the training rows; fractions that
    leave a single class are flagged undefined.
    """
    out = []
    for f in fractions:
        threshold = u_evt * f
        try:
            scores, labels = train_fn(threshold)
            value = auc(scores, labels)
            out.append(SweepEntry(float(f), threshold, value, True))
        except MetricUndefinedError as exc:
            logger.warning("sweep fraction %.3g undefined: %s", f, exc)
            out.append(SweepEntry(float(f), threshold, float("nan"), False))
    return out


# ---------------------------------------------------------------------------
# aggregate report
# ---------------------------------------------------------------------------

@dataclass
class EvaluationReport:
    auc: float
    deviance: DevianceResult
    acf_pearson: AcfResult
    acf_excess: Optional[AcfResult]
    qq_points: Optional[np.ndarray]
    n_rows: int
    n_exceed: int
    threshold_db: float
    threshold_curve: list[SweepEntry] = field(default_factory=list)


def evaluate_dataset(pipeline, Xt: CovariateMatrix, dataset: ExceedanceDataset,
                     max_lag: int = 50) -> EvaluationReport:
    """Full report for a pipeline on an aligned (transformed) dataset.

    The excess-side diagnostics need enough exceedances; they are omitted
    (None) when the data cannot support them.
    """
    phi = pipeline.logistic.phi(Xt)
    value = auc(phi, dataset.indicators)
    deviance = deviance_test(pipeline.logistic, Xt, dataset.indicators)
    lag = min(max_lag, len(dataset) // 3)
    acf_p = residual_acf("pearson_logistic", pipeline.logistic, Xt,
                         dataset.indicators, lag)
    exceed = dataset.indicators == 1
    acf_e = None
    qq = None
    if dataset.n_exceed >= 10:
        X_exc = Xt.take_rows(exceed)
        z = dataset.excess_values
        lag_e = min(max_lag, z.size // 3)
        if lag_e >= 1 and z.size > lag_e + 1:
            acf_e = residual_acf("excess_gpd", pipeline.gpd, X_exc, z, lag_e)
        qq = qq_standardised_excesses(pipeline.gpd, X_exc, z)
    return EvaluationReport(value, deviance, acf_p, acf_e, qq, len(dataset),
                            dataset.n_exceed, dataset.threshold)
