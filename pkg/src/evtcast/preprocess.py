"""Covariate preprocessing: power transforms, standardization, collinearity pruning.

Each covariate gets a Box-Cox power picked from a fixed grid (0 encodes log),
after an automatic positivity shift, then is standardized by its training
mean and standard deviation.  Multicollinearity is handled by ranking columns
on univariate-model AIC and greedily dropping anything correlated above the
cutoff with an already-kept, more informative column.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats as _stats

from .errors import ParameterError, SchemaError, TransformError
from .trace import fmt_float, format_utc

logger = logging.getLogger(__name__)

BOXCOX_GRID = (-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)
BOXCOX_MIN_N = 20
CORRELATION_CUTOFF = 0.6
_POSITIVITY_EPS = 1e-6
_APPLY_FLOOR = 1e-12


@dataclass
class CovariateMatrix:
    """Covariate rows aligned to forecast issue times."""

    timestamps: np.ndarray
    columns: list[str]
    values: np.ndarray
    transform: Optional["TransformSpec"] = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.columns = list(self.columns)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ParameterError("covariate values must be 2-D")
        if self.values.shape != (self.timestamps.size, len(self.columns)):
            raise ParameterError("covariate matrix shape mismatch")
        if len(set(self.columns)) != len(self.columns):
            raise ParameterError("covariate columns must be unique")
        if not np.isfinite(self.values).all():
            raise ParameterError("covariate matrix contains non-finite cells")

    @property
    def n_rows(self) -> int:
        return self.timestamps.size

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise SchemaError(f"unknown covariate column {name!r}") from None
        return self.values[:, j]

    def subset(self, names: Sequence[str]) -> "CovariateMatrix":
        idx = [self.columns.index(n) if n in self.columns else -1 for n in names]
        if -1 in idx:
            missing = [n for n, j in zip(names, idx) if j == -1]
            raise SchemaError(f"unknown covariate column(s) {missing}")
        return CovariateMatrix(self.timestamps, list(names), self.values[:, idx],
                               self.transform)

    def take_rows(self, mask_or_index) -> "CovariateMatrix":
        return CovariateMatrix(self.timestamps[mask_or_index], self.columns,
                               self.values[mask_or_index], self.transform)

    def row_mapping(self, i: int) -> dict[str, float]:
        return dict(zip(self.columns, self.values[i]))

    def write_csv(self, path) -> None:
        """First column ``timestamp``, remaining columns in canonical order."""
        order = np.argsort(self.columns)
        with open(path, "w", encoding="ascii") as fh:
            fh.write("timestamp," + ",".join(self.columns[j] for j in order) + "\n")
            for i in range(self.n_rows):
                cells = ",".join(fmt_float(self.values[i, j]) for j in order)
                fh.write(f"{format_utc(self.timestamps[i])},{cells}\n")


def concat_rows(matrices: Sequence[CovariateMatrix]) -> CovariateMatrix:
    """Stack matrices with identical columns (pooling rows across events)."""
    if not matrices:
        raise ParameterError("nothing to concatenate")
    cols = matrices[0].columns
    for m in matrices[1:]:
        if m.columns != cols:
            raise SchemaError("cannot pool covariate matrices with different columns")
    return CovariateMatrix(np.concatenate([m.timestamps for m in matrices]), cols,
                           np.vstack([m.values for m in matrices]))


# ---------------------------------------------------------------------------
# Box-Cox selection and standardization
# ---------------------------------------------------------------------------

def _boxcox(y: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0.0:
        return np.log(y)
    return (y ** lam - 1.0) / lam


def positivity_shift(values: np.ndarray) -> float:
    """Shift making all values strictly positive: max(0, -min + 1e-6*range)."""
    lo, hi = values.min(), values.max()
    return max(0.0, -lo + _POSITIVITY_EPS * (hi - lo))


def boxcox_select(values, grid: Sequence[float] = BOXCOX_GRID) -> float:
    """Pick the grid power maximizing the Box-Cox profile log-likelihood.

    The input is shifted positive first; a constant input has no transform
    and raises.
    """
    y = np.asarray(values, dtype=float)
    if y.size < BOXCOX_MIN_N:
        raise ParameterError(f"boxcox_select needs >= {BOXCOX_MIN_N} values, got {y.size}")
    if y.min() == y.max():
        raise TransformError("cannot select a Box-Cox power for a constant input")
    shifted = y + positivity_shift(y)
    best_lam, best_llf = None, -np.inf
    for lam in grid:
        llf = float(_stats.boxcox_llf(lam, shifted))
        if np.isfinite(llf) and llf > best_llf:
            best_lam, best_llf = lam, llf
    if best_lam is None:
        raise TransformError("Box-Cox profile likelihood is undefined on the whole grid")
    return best_lam


@dataclass(frozen=True)
class ColumnTransform:
    lam: float
    shift: float
    mean: float
    sd: float

    def apply(self, values) -> np.ndarray:
        # out-of-training values may fall at or below -shift; clamp the
        # transform argument to a small positive floor to stay total
        y = np.maximum(np.asarray(values, dtype=float) + self.shift, _APPLY_FLOOR)
        return (_boxcox(y, self.lam) - self.mean) / self.sd


@dataclass
class TransformSpec:
    """Per-covariate Box-Cox power, positivity shift, and training mean/sd."""

    per_column: dict[str, ColumnTransform] = field(default_factory=dict)

    def apply_value(self, name: str, value: float) -> float:
        if name not in self.per_column:
            raise SchemaError(f"no transform fitted for covariate {name!r}")
        return float(self.per_column[name].apply(value))

    def to_dict(self) -> dict:
        return {name: {"lam": ct.lam, "shift": ct.shift, "mean": ct.mean, "sd": ct.sd}
                for name, ct in sorted(self.per_column.items())}

    @classmethod
    def from_dict(cls, data: Mapping) -> "TransformSpec":
        return cls({name: ColumnTransform(d["lam"], d["shift"], d["mean"], d["sd"])
                    for name, d in data.items()})


def fit_standardizer(matrix: CovariateMatrix,
                     grid: Sequence[float] = BOXCOX_GRID) -> TransformSpec:
    """Fit per-column transforms on training data.

    Columns shorter than the Box-Cox minimum keep the identity power (lam=1);
    constant columns cannot be standardized and raise.
    """
    per: dict[str, ColumnTransform] = {}
    for name in matrix.columns:
        col = matrix.column(name)
        if col.min() == col.max():
            raise TransformError(f"column {name!r} is constant on the training data")
        shift = positivity_shift(col)
        if col.size >= BOXCOX_MIN_N:
            lam = boxcox_select(col, grid)
        else:
            lam = 1.0
        transformed = _boxcox(col + shift, lam)
        mean = transformed.mean()
        sd = transformed.std(ddof=1)
        if not sd > 0:
            raise TransformError(f"column {name!r} has zero variance after transform")
        per[name] = ColumnTransform(lam, shift, float(mean), float(sd))
    return TransformSpec(per)


def apply_transform(matrix: CovariateMatrix, spec: TransformSpec) -> CovariateMatrix:
    """Apply a fitted spec to a matrix (training or new data alike).

    Unseen column names are a schema error.  Applying twice is not the same
    as applying once: the spec belongs to raw covariates.
    """
    out = np.empty_like(matrix.values)
    for j, name in enumerate(matrix.columns):
        if name not in spec.per_column:
            raise SchemaError(f"no transform fitted for covariate {name!r}")
        out[:, j] = spec.per_column[name].apply(matrix.values[:, j])
    return CovariateMatrix(matrix.timestamps, matrix.columns, out, spec)


# ---------------------------------------------------------------------------
# collinearity pruning
# ---------------------------------------------------------------------------

def _univariate_aic(matrix: CovariateMatrix, response: np.ndarray, task: str,
                    xi: float) -> dict[str, float]:
    from . import regress  # deferred: regress imports this module

    aics: dict[str, float] = {}
    for name in matrix.columns:
        sub = matrix.subset([name])
        try:
            if task == "logistic":
                model = regress.fit_logistic(sub, response)
            else:
                model = regress.fit_gpd_regression(sub, response, xi)
            aics[name] = model.diagnostics.aic
        except Exception as exc:  # ranked last, not fatal
            logger.warning("univariate %s fit failed for %s: %s", task, name, exc)
            aics[name] = np.inf
    return aics


def prune_collinear(matrix: CovariateMatrix, response, task: str,
                    cutoff: float = CORRELATION_CUTOFF, xi: float = 0.0) -> list[str]:
    """Greedy correlation screen ordered by univariate AIC.

    Columns are sorted by ascending AIC of their univariate model for the
    task (``logistic`` on exceedance indicators, ``gpd`` on excesses with the
    shape fixed at ``xi``); a column is kept iff its absolute Pearson
    correlation with every already-kept column is <= cutoff.  Ties in AIC
    break lexicographically, so the result does not depend on input order.
    """
    if task not in ("logistic", "gpd"):
        raise ParameterError(f"unknown pruning task {task!r}")
    response = np.asarray(response, dtype=float)
    if response.size != matrix.n_rows:
        raise ParameterError("response length must match the covariate matrix")
    aics = _univariate_aic(matrix, response, task, xi)
    order = sorted(matrix.columns, key=lambda name: (aics[name], name))

    kept: list[str] = []
    kept_values: list[np.ndarray] = []
    for name in order:
        col = matrix.column(name)
        ok = True
        for other in kept_values:
            denom = col.std() * other.std()
            rho = 0.0 if denom == 0 else float(np.corrcoef(col, other)[0, 1])
            if abs(rho) > cutoff:
                ok = False
                break
        if ok:
            kept.append(name)
            kept_values.append(col)
    return kept
