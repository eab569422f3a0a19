"""End-to-end pipeline: training across events and horizon-ahead forecasting.

The conditional tail probability at each issue time factorizes as
P(Y > u + z) = phi * S(z), where phi comes from the logistic exceedance
regression and S is the GPD survival at the regression scale.  Covariates at
issue time t are computed from the trailing window [t - W, t); the response
is the index value exactly at t + horizon (point value, not a window
aggregate), so covariates carry an availability lag of one horizon.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import evaluate as _evaluate
from . import evt, regress
from .envelope import EnvelopeIndexSeries, envelope
from .errors import (AlignmentError, ConfigError, ModelFileError, ParameterError)
from .features import DOMAINS, FEATURES, SOURCES, feature_matrix
from .preprocess import (CovariateMatrix, TransformSpec, apply_transform, concat_rows,
                         fit_standardizer, prune_collinear)
from .trace import BandSpec, SeismicTrace, bandpass, fmt_float, format_utc

logger = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1

PAPER_BANDS = (BandSpec.bandpass(0.1, 1.0), BandSpec.bandpass(1.0, 5.0),
               BandSpec.bandpass(5.0, 15.0), BandSpec.bandpass(0.1, 20.0),
               BandSpec.highpass(0.01))


@dataclass
class ForecastConfig:
    """Timing, band and feature configuration shared by training and forecasting."""

    horizon_s: float = 3600.0
    window_s: float = 3600.0
    cadence_s: float = 10.0
    bands: tuple[BandSpec, ...] = PAPER_BANDS
    index_band: BandSpec = BandSpec.bandpass(1.0, 5.0)
    feature_set: tuple[str, ...] = FEATURES
    domains: tuple[str, ...] = DOMAINS
    sources: tuple[str, ...] = SOURCES
    alpha: float = 0.10

    def validate(self) -> None:
        if not self.horizon_s > 0:
            raise ConfigError(f"forecast horizon must be > 0, got {self.horizon_s}")
        if not self.window_s > 0:
            raise ConfigError(f"covariate window must be > 0, got {self.window_s}")
        if not self.cadence_s > 0:
            raise ConfigError(f"cadence must be > 0, got {self.cadence_s}")
        if self.cadence_s > self.horizon_s:
            raise ConfigError("cadence must not exceed the forecast horizon")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.bands:
            raise ConfigError("at least one band is required")

    def to_dict(self) -> dict:
        return {
            "horizon_s": self.horizon_s,
            "window_s": self.window_s,
            "cadence_s": self.cadence_s,
            "bands": [b.token for b in self.bands],
            "index_band": self.index_band.token,
            "feature_set": list(self.feature_set),
            "domains": list(self.domains),
            "sources": list(self.sources),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ForecastConfig":
        return cls(horizon_s=float(d["horizon_s"]), window_s=float(d["window_s"]),
                   cadence_s=float(d["cadence_s"]),
                   bands=tuple(BandSpec.parse(t) for t in d["bands"]),
                   index_band=BandSpec.parse(d["index_band"]),
                   feature_set=tuple(d["feature_set"]), domains=tuple(d["domains"]),
                   sources=tuple(d["sources"]), alpha=float(d["alpha"]))


def band_products(raw: SeismicTrace, config: ForecastConfig):
    """Filter the raw trace into the configured bands and compute envelopes.

    Returns (traces_by_band, envelopes_by_band, index_series).
    """
    traces = {b.token: bandpass(raw, b) for b in config.bands}
    envs = {token: envelope(tr) for token, tr in traces.items()}
    token = config.index_band.token
    if token in envs:
        index = envs[token]
    else:
        index = envelope(bandpass(raw, config.index_band))
    return traces, envs, index


def build_dataset(index: EnvelopeIndexSeries, X: CovariateMatrix, u: float,
                  config: ForecastConfig) -> tuple[evt.ExceedanceDataset, CovariateMatrix]:
    """Pair covariate rows with the response one horizon ahead.

    The response for issue time t is the index value exactly at t + horizon;
    rows whose target time falls outside the index are dropped.
    """
    if not config.horizon_s > 0:
        raise ConfigError(f"forecast horizon must be > 0, got {config.horizon_s}")
    rate = index.sample_rate_hz
    start = index.start_epoch
    pos = (X.timestamps + config.horizon_s - start) * rate
    k = np.rint(pos)
    on_grid = np.abs(pos - k) < 1e-3
    valid = on_grid & (k >= 0) & (k < len(index))
    if not valid.any():
        raise AlignmentError("no covariate row has a target observation on the index")
    if not on_grid.all():
        logger.warning("%d covariate row(s) fall off the index sample grid",
                       int((~on_grid).sum()))
    idx = k[valid].astype(int)
    y = np.asarray(index.index_db)[idx]
    indicators = (y > u).astype(np.uint8)
    excesses = np.where(indicators == 1, y - u, np.nan)
    ds = evt.ExceedanceDataset(X.timestamps[valid], indicators, excesses, float(u),
                               float(config.horizon_s))
    return ds, X.take_rows(valid)


@dataclass
class FittedPipeline:
    """Everything needed to forecast: threshold, transforms and both models."""

    config: ForecastConfig
    threshold_db: float
    lag_seconds: float
    transform: TransformSpec
    logistic: regress.LogisticModel
    gpd: regress.GpdModel
    constant_fit: Optional[evt.GpdFit] = None
    per_event_thresholds: list[float] = field(default_factory=list)
    per_event_exceedances: list[int] = field(default_factory=list)
    train_auc: Optional[float] = None

    @property
    def xi_fixed(self) -> float:
        return self.gpd.xi_fixed

    def transformed_features(self, raw: SeismicTrace) -> CovariateMatrix:
        traces, envs, _ = band_products(raw, self.config)
        X = feature_matrix(traces, envs, self.config)
        usable = [c for c in X.columns if c in self.transform.per_column]
        needed = set(self.logistic.coefficients) | set(self.gpd.coefficients)
        missing = needed - set(usable)
        if missing:
            raise AlignmentError(f"live features missing model covariates: {sorted(missing)}")
        return apply_transform(X.subset(usable), self.transform)


def train(event_traces: Sequence[SeismicTrace], config: ForecastConfig, *,
          n_boot: int = 499, seed: Optional[int] = 0, grid=None,
          min_excesses: int = evt.MIN_EXCESSES_PER_POINT) -> FittedPipeline:
    """Fit the full pipeline on one or more training events.

    Per event: envelopes, index, threshold scan.  The working threshold is
    the lowest per-event choice.  Covariate rows are pooled across events;
    transforms, pruning, the constant-GPD shape and both stepwise regressions
    are fitted on the pooled rows.
    """
    if not event_traces:
        raise ParameterError("train needs at least one event trace")
    config.validate()
    children = np.random.SeedSequence(seed).spawn(len(event_traces))

    products = []
    selections = []
    for i, raw in enumerate(event_traces):
        traces, envs, index = band_products(raw, config)
        sel = evt.threshold_scan(index, grid=grid, alpha=config.alpha, n_boot=n_boot,
                                 seed=children[i].generate_state(1)[0],
                                 min_excesses=min_excesses)
        logger.info("event %d: threshold %.6g dB", i + 1, sel.chosen)
        products.append((traces, envs, index))
        selections.append(sel)
    u = evt.multi_event_threshold(selections)
    logger.info("working threshold (lowest across events): %.6g dB", u)

    datasets = []
    matrices = []
    for traces, envs, index in products:
        X = feature_matrix(traces, envs, config)
        ds, X = build_dataset(index, X, u, config)
        datasets.append(ds)
        matrices.append(X)
    ds = evt.concat_datasets(datasets)
    X = concat_rows(matrices)
    per_event_exceedances = [d.n_exceed for d in datasets]
    logger.info("pooled %d rows, %d exceedances (per event: %s)", len(ds), ds.n_exceed,
                per_event_exceedances)

    keep = [c for c in X.columns
            if X.column(c).min() < X.column(c).max()]
    dropped = sorted(set(X.columns) - set(keep))
    if dropped:
        logger.warning("dropping %d constant covariate column(s): %s ...",
                       len(dropped), dropped[:4])
        X = X.subset(keep)
    transform = fit_standardizer(X)
    Xt = apply_transform(X, transform)

    excess_values = ds.excess_values
    constant_fit = evt.fit_gpd_constant(excess_values)
    xi = regress.choose_shape(constant_fit)
    logger.info("constant GPD: xi=%.4g (se %.3g), sigma=%.4g -> fixed shape %.4g",
                constant_fit.xi, constant_fit.se_xi, constant_fit.sigma, xi)

    kept_log = prune_collinear(Xt, ds.indicators, "logistic")
    exceed_rows = ds.indicators == 1
    Xt_exc = Xt.take_rows(exceed_rows)
    kept_gpd = prune_collinear(Xt_exc, excess_values, "gpd", xi=xi)
    logger.info("pruning kept %d/%d (logistic) and %d/%d (gpd) columns",
                len(kept_log), len(Xt.columns), len(kept_gpd), len(Xt.columns))

    sel_log, logistic = regress.stepwise_aic("logistic", Xt.subset(kept_log),
                                             ds.indicators)
    sel_gpd, gpd_model = regress.stepwise_aic("gpd", Xt_exc.subset(kept_gpd),
                                              excess_values, xi_fixed=xi)
    logger.info("stepwise selected %d logistic and %d gpd covariates",
                len(sel_log), len(sel_gpd))
    logistic.transform = transform
    gpd_model.transform = transform

    phi = logistic.phi(Xt)
    train_auc = _evaluate.auc(phi, ds.indicators)
    return FittedPipeline(config=config, threshold_db=u, lag_seconds=config.horizon_s,
                          transform=transform, logistic=logistic, gpd=gpd_model,
                          constant_fit=constant_fit,
                          per_event_thresholds=[s.chosen for s in selections],
                          per_event_exceedances=per_event_exceedances,
                          train_auc=train_auc)


# ---------------------------------------------------------------------------
# forecasting
# ---------------------------------------------------------------------------

@dataclass
class ForecastSeries:
    """Per-tick forecasts: exceedance probability, scale and requested tails."""

    issue_times: np.ndarray
    target_times: np.ndarray
    phi: np.ndarray
    nu: np.ndarray
    threshold_db: float
    tails: dict[float, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.issue_times.size


def forecast(pipeline: FittedPipeline, trace: SeismicTrace,
             z_list: Sequence[float] = ()) -> ForecastSeries:
    """Emit forecasts at every cadence tick with a full trailing window.

    ``tail(z) = phi * S(z)`` is reported for each requested excess level z
    (in dB above the threshold).  Ticks without a full window are skipped.
    """
    for z in z_list:
        if z < 0:
            raise ParameterError(f"tail levels must be >= 0, got {z}")
    try:
        Xt = pipeline.transformed_features(trace)
    except AlignmentError as exc:
        logger.warning("no forecast ticks: %s", exc)
        empty = np.array([])
        return ForecastSeries(empty, empty, empty, empty, pipeline.threshold_db,
                              {float(z): np.array([]) for z in z_list})
    phi = pipeline.logistic.phi(Xt)
    nu = pipeline.gpd.nu(Xt)
    xi = pipeline.gpd.xi_fixed
    tails = {}
    for z in z_list:
        surv = np.array([float(evt.gpd_sf(z, xi, s)) for s in nu]) if len(nu) else np.array([])
        tails[float(z)] = phi * surv
    return ForecastSeries(Xt.timestamps, Xt.timestamps + pipeline.config.horizon_s,
                          phi, nu, pipeline.threshold_db, tails)


def return_level(pipeline: FittedPipeline, x: Mapping[str, float], p: float) -> float:
    """Index level y with P(Y > y | x) = p, i.e. threshold + GPD quantile.

    Defined only below the exceedance probability: p >= phi(x) would sit at
    or below the threshold where the tail model says nothing.
    """
    if not 0.0 < p < 1.0:
        raise ParameterError(f"probability must be in (0, 1), got {p}")
    phi = regress.predict_phi(pipeline.logistic, x)
    if p >= phi:
        raise ParameterError(
            f"return level undefined: p={p:g} >= exceedance probability {phi:g}")
    eta = regress._row_predictor(pipeline.gpd.intercept, pipeline.gpd.coefficients,
                                 pipeline.gpd.transform, x)
    nu = float(np.exp(eta))
    z = float(evt.gpd_ppf(1.0 - p / phi, pipeline.gpd.xi_fixed, nu))
    return pipeline.threshold_db + z


def write_forecast_csv(series: ForecastSeries, path) -> None:
    zs = sorted(series.tails)
    header = "issue_time,target_time,phi,nu" + "".join(f",tail_{z:g}" for z in zs)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for i in range(len(series)):
            row = [format_utc(series.issue_times[i]), format_utc(series.target_times[i]),
                   fmt_float(series.phi[i]), fmt_float(series.nu[i])]
            row += [fmt_float(series.tails[z][i]) for z in zs]
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------

def save_pipeline(pipeline: FittedPipeline, path) -> None:
    """Serialize to a self-describing JSON model file.

    Floats survive the JSON round trip exactly, so a loaded pipeline
    reproduces predictions bit-for-bit.
    """
    cf = pipeline.constant_fit
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "config": pipeline.config.to_dict(),
        "threshold_db": pipeline.threshold_db,
        "lag_seconds": pipeline.lag_seconds,
        "xi_fixed": pipeline.gpd.xi_fixed,
        "logistic": {"intercept": pipeline.logistic.intercept,
                     "coefficients": dict(sorted(pipeline.logistic.coefficients.items())),
                     "loglik": pipeline.logistic.diagnostics.loglik,
                     "aic": pipeline.logistic.diagnostics.aic},
        "gpd": {"intercept": pipeline.gpd.intercept,
                "coefficients": dict(sorted(pipeline.gpd.coefficients.items())),
                "loglik": pipeline.gpd.diagnostics.loglik,
                "aic": pipeline.gpd.diagnostics.aic},
        "transform": pipeline.transform.to_dict(),
        "constant_fit": None if cf is None else {
            "xi": cf.xi, "sigma": cf.sigma, "se_xi": cf.se_xi,
            "se_sigma": cf.se_sigma, "n": cf.n, "loglik": cf.loglik},
        "per_event_thresholds": list(pipeline.per_event_thresholds),
        "per_event_exceedances": list(pipeline.per_event_exceedances),
        "train_auc": pipeline.train_auc,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pipeline(path) -> FittedPipeline:
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ModelFileError(
            f"model file schema {version!r} does not match supported {MODEL_SCHEMA_VERSION}")
    try:
        config = ForecastConfig.from_dict(doc["config"])
        transform = TransformSpec.from_dict(doc["transform"])
        lg = doc["logistic"]
        logistic = regress.LogisticModel(
            float(lg["intercept"]), {k: float(v) for k, v in lg["coefficients"].items()},
            transform, regress.FitDiagnostics(lg["loglik"], lg["aic"], 0, True))
        gp = doc["gpd"]
        gpd_model = regress.GpdModel(
            float(doc["xi_fixed"]), float(gp["intercept"]),
            {k: float(v) for k, v in gp["coefficients"].items()},
            transform, regress.FitDiagnostics(gp["loglik"], gp["aic"], 0, True))
        cf = doc.get("constant_fit")
        constant_fit = None if cf is None else evt.GpdFit(
            cf["xi"], cf["sigma"], cf["se_xi"], cf["se_sigma"], cf["n"], cf["loglik"])
        return FittedPipeline(
            config=config, threshold_db=float(doc["threshold_db"]),
            lag_seconds=float(doc["lag_seconds"]), transform=transform,
            logistic=logistic, gpd=gpd_model, constant_fit=constant_fit,
            per_event_thresholds=list(doc.get("per_event_thresholds", [])),
            per_event_exceedances=list(doc.get("per_event_exceedances", [])),
            train_auc=doc.get("train_auc"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file {path}: {exc}") from exc
