"""Dynamic regressions: logistic exceedance model and fixed-shape GPD excess model.

Both likelihoods are maximized with a damped second-order ascent (Newton with
step-halving line search).  The GPD regression keeps the shape fixed at the
constant-fit estimate and models the scale log-linearly; rows outside the
shape-implied support contribute -infinity, so the optimizer is initialized
and line-searched to keep every training excess inside support.  When the
constant-fit shape is not significantly different from zero the exponential
(shape-zero) regression is used instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import evt
from .errors import (FitError, ParameterError, SchemaError, SeparationError)
from .preprocess import CovariateMatrix, TransformSpec

logger = logging.getLogger(__name__)

MAX_ITER = 200
SCORE_TOL = 1e-8
LOGLIK_RTOL = 1e-12
AIC_TOL = 1e-9


@dataclass
class FitDiagnostics:
    loglik: float
    aic: float
    n_iter: int
    converged: bool
    loglik_path: list[float] = field(default_factory=list)
    se: dict[str, float] = field(default_factory=dict)


def _design(X: CovariateMatrix, names: Sequence[str]) -> np.ndarray:
    cols = [np.ones(X.n_rows)]
    for name in names:
        cols.append(X.column(name))
    return np.column_stack(cols)


def _row_predictor(intercept: float, coefficients: Mapping[str, float],
                   transform: Optional[TransformSpec], x: Mapping[str, float]) -> float:
    eta = intercept
    for name, coef in coefficients.items():
        if name not in x:
            raise SchemaError(f"covariate row is missing {name!r}")
        value = float(x[name])
        if transform is not None:
            value = transform.apply_value(name, value)
        eta += coef * value
    return eta


@dataclass
class LogisticModel:
    """Fitted logistic exceedance regression."""

    intercept: float
    coefficients: dict[str, float]
    transform: Optional[TransformSpec]
    diagnostics: FitDiagnostics

    def linear_predictor(self, X: CovariateMatrix) -> np.ndarray:
        """Linear predictor on a matrix of already-transformed covariates."""
        eta = np.full(X.n_rows, self.intercept)
        for name, coef in self.coefficients.items():
            eta = eta + coef * X.column(name)
        return eta

    def phi(self, X: CovariateMatrix) -> np.ndarray:
        return _sigmoid(self.linear_predictor(X))


@dataclass
class GpdModel:
    """Fitted GPD (or exponential, xi_fixed = 0) excess regression."""

    xi_fixed: float
    intercept: float
    coefficients: dict[str, float]
    transform: Optional[TransformSpec]
    diagnostics: FitDiagnostics

    def linear_predictor(self, X: CovariateMatrix) -> np.ndarray:
        eta = np.full(X.n_rows, self.intercept)
        for name, coef in self.coefficients.items():
            eta = eta + coef * X.column(name)
        return eta

    def nu(self, X: CovariateMatrix) -> np.ndarray:
        """Scale parameter per row, exp of the linear predictor."""
        return np.exp(self.linear_predictor(X))


def _sigmoid(eta):
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logistic_loglik(eta: np.ndarray, indicators: np.ndarray) -> float:
    return float(np.sum(indicators * eta - np.logaddexp(0.0, eta)))


def fit_logistic(X: CovariateMatrix, indicators, *, max_iter: int = MAX_ITER) -> LogisticModel:
    """Maximum-likelihood logistic regression via damped Newton ascent.

    Converges when the score drops below 1e-8 in absolute value or the
    relative log-likelihood change falls below 1e-12.  Complete separation is
    reported with the offending covariate direction.
    """
    I = np.asarray(indicators, dtype=float)
    if I.size != X.n_rows:
        raise ParameterError("indicator length must match the covariate matrix")
    if not np.isin(I, (0.0, 1.0)).all():
        raise ParameterError("indicators must be 0/1")
    n_pos = int(I.sum())
    if n_pos == 0 or n_pos == I.size:
        raise ParameterError("logistic fit needs at least one 0 and one 1")

    names = list(X.columns)
    A = _design(X, names)
    k = A.shape[1]
    pbar = n_pos / I.size
    beta = np.zeros(k)
    beta[0] = np.log(pbar / (1.0 - pbar))

    eta = A @ beta
    ll = logistic_loglik(eta, I)
    path = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        phi = _sigmoid(eta)
        score = A.T @ (I - phi)
        if np.max(np.abs(score)) < SCORE_TOL:
            converged = True
            break
        w = phi * (1.0 - phi)
        hess = A.T @ (A * w[:, None])
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(hess, score, rcond=None)
        lam, moved = 1.0, False
        while lam > 1e-12:
            beta_new = beta + lam * step
            eta_new = A @ beta_new
            ll_new = logistic_loglik(eta_new, I)
            if ll_new >= ll:
                beta, eta, ll = beta_new, eta_new, ll_new
                moved = True
                break
            lam /= 2.0
        path.append(ll)
        if not moved:
            break
        if len(path) > 1 and abs(path[-1] - path[-2]) < LOGLIK_RTOL * max(1.0, abs(ll)):
            converged = True
            break

    if not converged:
        phi = _sigmoid(eta)
        separated = (eta[I == 1].min(initial=np.inf) >
                     eta[I == 0].max(initial=-np.inf)) and np.max(np.abs(eta)) > 20
        if separated or np.max(np.abs(beta[1:], initial=0.0)) > 1e4:
            j = int(np.argmax(np.abs(beta[1:]))) if k > 1 else 0
            direction = names[j] if names else "(intercept)"
            raise SeparationError(
                f"complete separation along {direction!r}: coefficients diverge",
                direction=direction)
        raise FitError(f"logistic fit did not converge in {max_iter} iterations "
                       f"(max |score| = {np.max(np.abs(A.T @ (I - _sigmoid(eta)))):.3g})")

    phi = _sigmoid(eta)
    w = phi * (1.0 - phi)
    se: dict[str, float] = {}
    try:
        cov = np.linalg.inv(A.T @ (A * w[:, None]))
        labels = ["(intercept)"] + names
        se = {lab: float(np.sqrt(max(cov[i, i], 0.0))) for i, lab in enumerate(labels)}
    except np.linalg.LinAlgError:
        logger.warning("singular information matrix; standard errors unavailable")
    diag = FitDiagnostics(ll, 2.0 * k - 2.0 * ll, it, converged, path, se)
    return LogisticModel(float(beta[0]), dict(zip(names, map(float, beta[1:]))), None, diag)


# ---------------------------------------------------------------------------
# GPD / exponential regression at fixed shape
# ---------------------------------------------------------------------------

def gpd_regression_loglik(eta: np.ndarray, z: np.ndarray, xi: float) -> float:
    """Log-likelihood of excesses with scale exp(eta) and fixed shape.

    Rows violating the upper support bound (shape < 0) contribute -infinity,
    matching the clipped likelihood.
    """
    a = z * np.exp(-eta)
    if xi == 0.0:
        return float(np.sum(-eta - a))
    t = xi * a
    if np.any(t <= -1.0):
        return -np.inf
    return float(np.sum(-eta - (1.0 / xi + 1.0) * np.log1p(t)))


def fit_gpd_regression(X: CovariateMatrix, z, xi_fixed: float, *,
                       max_iter: int = MAX_ITER) -> GpdModel:
    """GPD regression: scale nu = exp(kappa0 + sum kappa_i x_i), shape held fixed.

    For negative shapes the intercept is initialized at
    log(max(z) * |xi| * 1.05) so every training excess starts inside support;
    infeasible line-search steps are rejected by the -infinity barrier.
    """
    z = np.asarray(z, dtype=float)
    if z.size != X.n_rows:
        raise ParameterError("excess length must match the covariate matrix")
    if z.size == 0:
        raise ParameterError("no excesses to fit")
    if not np.isfinite(z).all() or z.min() <= 0.0:
        raise ParameterError("excesses must be finite and strictly positive")
    if xi_fixed <= -1.0:
        raise ParameterError(f"fixed shape must be > -1, got {xi_fixed}")

    names = list(X.columns)
    A = _design(X, names)
    k = A.shape[1]
    kappa = np.zeros(k)
    if xi_fixed < 0.0:
        kappa[0] = np.log(z.max() * abs(xi_fixed) * 1.05)
    else:
        kappa[0] = np.log(z.mean())

    eta = A @ kappa
    ll = gpd_regression_loglik(eta, z, xi_fixed)
    if not np.isfinite(ll):
        raise FitError("no feasible starting point: an excess violates the "
                       "support bound implied by the fixed shape")
    path = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        a = z * np.exp(-eta)
        t = xi_fixed * a
        r = (1.0 + xi_fixed) * a / (1.0 + t) - 1.0
        d = (1.0 + xi_fixed) * a / (1.0 + t) ** 2
        score = A.T @ r
        if np.max(np.abs(score)) < SCORE_TOL:
            converged = True
            break
        hess = A.T @ (A * d[:, None])
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(hess, score, rcond=None)
        lam, moved = 1.0, False
        while lam > 1e-12:
            kappa_new = kappa + lam * step
            eta_new = A @ kappa_new
            ll_new = gpd_regression_loglik(eta_new, z, xi_fixed)
            if np.isfinite(ll_new) and ll_new >= ll:
                kappa, eta, ll = kappa_new, eta_new, ll_new
                moved = True
                break
            lam /= 2.0
        path.append(ll)
        if not moved:
            break
        if len(path) > 1 and abs(path[-1] - path[-2]) < LOGLIK_RTOL * max(1.0, abs(ll)):
            converged = True
            break

    a = z * np.exp(-eta)
    score = A.T @ ((1.0 + xi_fixed) * a / (1.0 + xi_fixed * a) - 1.0)
    if not converged:
        raise FitError(f"GPD regression did not converge in {max_iter} iterations "
                       f"(max |score| = {np.max(np.abs(score)):.3g})")
    if xi_fixed < 0.0 and np.any(1.0 + xi_fixed * a <= 1e-12):
        raise FitError("an excess sits on the support boundary at the optimum")

    d = (1.0 + xi_fixed) * a / (1.0 + xi_fixed * a) ** 2
    se: dict[str, float] = {}
    try:
        cov = np.linalg.inv(A.T @ (A * d[:, None]))
        labels = ["(intercept)"] + names
        se = {lab: float(np.sqrt(max(cov[i, i], 0.0))) for i, lab in enumerate(labels)}
    except np.linalg.LinAlgError:
        logger.warning("singular information matrix; standard errors unavailable")
    diag = FitDiagnostics(ll, 2.0 * k - 2.0 * ll, it, converged, path, se)
    return GpdModel(float(xi_fixed), float(kappa[0]),
                    dict(zip(names, map(float, kappa[1:]))), None, diag)


def fit_exponential_regression(X: CovariateMatrix, z, *,
                               max_iter: int = MAX_ITER) -> GpdModel:
    """Shape-zero limit of the GPD regression (log-scale exponential likelihood)."""
    return fit_gpd_regression(X, z, 0.0, max_iter=max_iter)


def choose_shape(fit: evt.GpdFit) -> float:
    """Fixed shape for the excess regression.

    Returns 0.0 (the zero flag: use exponential regression) when the 95%
    interval xi_hat +/- 1.96*se covers zero, otherwise the estimate itself.
    """
    lo, hi = fit.xi_ci95
    if lo <= 0.0 <= hi:
        return 0.0
    return fit.xi


# ---------------------------------------------------------------------------
# stepwise AIC selection
# ---------------------------------------------------------------------------

def stepwise_aic(task: str, X: CovariateMatrix, response, direction: Optional[str] = None,
                 *, xi_fixed: float = 0.0):
    """Greedy stepwise selection by AIC with two sequential phases.

    ``backward_then_forward`` (the logistic default) starts from the full
    model; ``forward_then_backward`` (the GPD default) starts from the
    intercept-only model.  Each step refits every single-move candidate and
    accepts the lowest AIC; a phase ends when no move improves AIC by more
    than 1e-9.  The intercept is never dropped.  Ties break lexicographically
    on the covariate name.

    Returns ``(selected_names, fitted_model)``.
    """
    if task not in ("logistic", "gpd"):
        raise ParameterError(f"unknown stepwise task {task!r}")
    if direction is None:
        direction = "backward_then_forward" if task == "logistic" else "forward_then_backward"
    if direction not in ("backward_then_forward", "forward_then_backward"):
        raise ParameterError(f"unknown stepwise direction {direction!r}")

    def fit(names: Sequence[str]):
        sub = X.subset(names)
        if task == "logistic":
            return fit_logistic(sub, response)
        return fit_gpd_regression(sub, response, xi_fixed)

    def try_fit(names):
        try:
            return fit(names)
        except Exception as exc:
            logger.warning("stepwise %s move %s skipped: %s", task, sorted(names), exc)
            return None

    all_names = sorted(X.columns)
    current = list(all_names) if direction.startswith("backward") else []
    model = try_fit(current)
    if model is None:
        # a failing full model must not sink backward selection; restart empty
        current = []
        model = try_fit(current)
        if model is None:
            raise FitError(f"stepwise {task}: even the intercept-only model fails")
    aic = model.diagnostics.aic

    phases = (("backward", "forward") if direction == "backward_then_forward"
              else ("forward", "backward"))
    for phase in phases:
        while True:
            candidates = []
            if phase == "backward":
                for name in sorted(current):
                    trial = [c for c in current if c != name]
                    m = try_fit(trial)
                    if m is not None:
                        candidates.append((m.diagnostics.aic, name, trial, m))
            else:
                for name in (n for n in all_names if n not in current):
                    trial = sorted(current + [name])
                    m = try_fit(trial)
                    if m is not None:
                        candidates.append((m.diagnostics.aic, name, trial, m))
            if not candidates:
                break
            candidates.sort(key=lambda c: (c[0], c[1]))
            best_aic, _, best_set, best_model = candidates[0]
            if aic - best_aic > AIC_TOL:
                current, model, aic = best_set, best_model, best_aic
            else:
                break
    return list(current), model


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def predict_phi(model: LogisticModel, x: Mapping[str, float]) -> float:
    """Exceedance probability for one covariate row.

    Raw covariates are transformed with the model's training spec when one is
    attached; otherwise the row is taken as already transformed.
    """
    eta = _row_predictor(model.intercept, model.coefficients, model.transform, x)
    return float(_sigmoid(eta))


def excess_survival(model: GpdModel, x: Mapping[str, float], z: float) -> float:
    """P(excess > z | exceedance, x) under the fitted scale regression.

    Zero beyond the upper endpoint for negative shapes; exponential decay for
    the zero-flag shape.
    """
    if z < 0:
        raise ParameterError(f"excess level must be >= 0, got {z}")
    eta = _row_predictor(model.intercept, model.coefficients, model.transform, x)
    return float(evt.gpd_sf(z, model.xi_fixed, float(np.exp(eta))))
