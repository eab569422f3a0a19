"""Constant GPD fitting, bootstrap goodness-of-fit tests and threshold selection.

The two-parameter GPD MLE is found by profiling the likelihood over
theta = shape/scale (the shape has a closed form given theta), then polished
with a damped Newton step on the full likelihood.  Goodness-of-fit p-values
for the Anderson-Darling and Cramer-von Mises statistics come from a
parametric bootstrap with a refit on every simulated sample: with estimated
parameters the tabulated null distributions do not apply.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize as _optimize

from .envelope import EnvelopeIndexSeries
from .errors import FitError, ParameterError, SampleSizeError, SelectionError
from .trace import fmt_float

logger = logging.getLogger(__name__)

MIN_EXCESSES_PER_POINT = 30
_XI_LOWER = -1.0 + 1e-9
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# GPD primitives (scale sigma > 0, shape xi > -1, support z > 0)
# ---------------------------------------------------------------------------

def gpd_loglik(z: np.ndarray, xi: float, sigma: float) -> float:
    z = np.asarray(z, dtype=float)
    n = z.size
    if sigma <= 0 or xi <= -1.0:
        return -np.inf
    if xi == 0.0:
        return -n * np.log(sigma) - z.sum() / sigma
    t = xi * z / sigma
    if np.any(t <= -1.0):
        return -np.inf
    return float(-n * np.log(sigma) - (1.0 + 1.0 / xi) * np.log1p(t).sum())


def gpd_score(z: np.ndarray, xi: float, sigma: float) -> np.ndarray:
    """Analytic gradient of the log-likelihood, (d/dxi, d/dsigma)."""
    z = np.asarray(z, dtype=float)
    n = z.size
    u = z / sigma
    if abs(xi) < 1e-6:
        # series expansion around xi = 0 avoids cancellation in 1/xi terms
        d_xi = float(np.sum(u ** 2 / 2.0 - u) + xi * np.sum(u ** 2 - 2.0 * u ** 3 / 3.0))
        d_sigma = float((-n + np.sum(u * (1.0 - xi * u))) / sigma)
        return np.array([d_xi, d_sigma])
    t = xi * u
    if np.any(t <= -1.0):
        raise ParameterError("score evaluated outside the GPD support")
    frac = u / (1.0 + t)
    d_xi = float(np.log1p(t).sum() / xi ** 2 - (1.0 + 1.0 / xi) * frac.sum())
    d_sigma = float((-n + (1.0 + xi) * frac.sum()) / sigma)
    return np.array([d_xi, d_sigma])


def gpd_sf(z, xi: float, sigma: float):
    """Survival function P(Z > z); zero beyond the upper endpoint when xi < 0."""
    z = np.asarray(z, dtype=float)
    if xi == 0.0:
        out = np.exp(-z / sigma)
    else:
        arg = 1.0 + xi * z / sigma
        with np.errstate(invalid="ignore"):
            out = np.where(arg > 0.0, np.maximum(arg, 1e-300) ** (-1.0 / xi), 0.0)
    return np.where(z <= 0.0, 1.0, out)


def gpd_cdf(z, xi: float, sigma: float):
    return 1.0 - gpd_sf(z, xi, sigma)


def gpd_ppf(p, xi: float, sigma: float):
    """Quantile function; p in [0, 1)."""
    p = np.asarray(p, dtype=float)
    if xi == 0.0:
        return -sigma * np.log1p(-p)
    return sigma * ((1.0 - p) ** (-xi) - 1.0) / xi


def sample_gpd(rng: np.random.Generator, size, xi: float, sigma: float) -> np.ndarray:
    """Inverse-survival sampling: z = sigma*(U^(-xi) - 1)/xi with U ~ Uniform(0, 1]."""
    u = 1.0 - rng.random(size)
    if xi == 0.0:
        return -sigma * np.log(u)
    return sigma * (u ** (-xi) - 1.0) / xi


# ---------------------------------------------------------------------------
# maximum likelihood fit
# ---------------------------------------------------------------------------

@dataclass
class GpdFit:
    """Constant-GPD MLE with standard errors from the observed information."""

    xi: float
    sigma: float
    se_xi: float
    se_sigma: float
    n: int
    loglik: float

    @property
    def xi_ci95(self) -> tuple[float, float]:
        return (self.xi - 1.96 * self.se_xi, self.xi + 1.96 * self.se_xi)


def _c_grid() -> np.ndarray:
    """Grid over c = theta*max(z) in (-1, inf), denser near the -1 boundary."""
    neg = -1.0 + np.geomspace(1e-8, 1.0, 60, endpoint=False)
    mid = np.linspace(-0.3, -1e-4, 25)
    pos = np.geomspace(1e-6, 1e4, 60)
    return np.unique(np.concatenate([neg, mid, pos]))


def _profile(z: np.ndarray, theta: float):
    """Profile (xi, sigma, loglik) at theta = xi/sigma; theta = 0 is exponential."""
    n = z.size
    if theta == 0.0:
        mean = float(z.mean())
        return 0.0, mean, -n * (np.log(mean) + 1.0)
    xi = float(np.log1p(theta * z).mean())
    if xi <= _XI_LOWER or abs(xi) < 1e-12:
        return xi, np.nan, -np.inf
    sigma = xi / theta
    return xi, sigma, float(-n * (np.log(abs(xi)) - np.log(abs(theta)) + xi + 1.0))


def _observed_information(z: np.ndarray, xi: float, sigma: float) -> np.ndarray:
    """Negative Hessian of the log-likelihood via central differences of the score."""
    h_xi = 1e-6 * max(1.0, abs(xi))
    h_sigma = 1e-6 * sigma
    d_xi = (gpd_score(z, xi + h_xi, sigma) - gpd_score(z, xi - h_xi, sigma)) / (2 * h_xi)
    d_sig = (gpd_score(z, xi, sigma + h_sigma) - gpd_score(z, xi, sigma - h_sigma)) / (2 * h_sigma)
    hess = np.column_stack([d_xi, d_sig])
    return -(hess + hess.T) / 2.0


def fit_gpd_constant(excesses, min_n: int = 10) -> GpdFit:
    """Two-parameter GPD MLE on positive excesses.

    The optimizer is restricted to xi > -1 with sigma > 0; standard errors
    come from the inverse observed information at the optimum.
    """
    z = np.asarray(excesses, dtype=float)
    if z.ndim != 1:
        raise ParameterError("excesses must be a 1-D sequence")
    if z.size < min_n:
        raise SampleSizeError(f"need at least {min_n} excesses, got {z.size}")
    if not np.isfinite(z).all() or z.min() <= 0.0:
        raise ParameterError("excesses must be finite and strictly positive")
    if z.max() - z.min() < 1e-12 * max(1.0, z.max()):
        raise FitError("degenerate excesses (all equal): no interior optimum")

    m = z.max()
    cs = _c_grid()
    lls = np.array([_profile(z, c / m)[2] for c in cs])
    best = int(np.argmax(lls))
    candidates = [(_profile(z, 0.0)[2], 0.0)]
    if np.isfinite(lls[best]):
        candidates.append((lls[best], cs[best]))
        lo = cs[best - 1] if best > 0 else cs[best] * 1.5
        hi = cs[best + 1] if best < cs.size - 1 else cs[best] * 1.5
        res = _optimize.minimize_scalar(lambda c: -_profile(z, c / m)[2],
                                        bounds=(min(lo, hi), max(lo, hi)), method="bounded",
                                        options={"xatol": 1e-13})
        candidates.append((-float(res.fun), float(res.x)))
    _, c_best = max(candidates, key=lambda t: t[0])
    xi, sigma, ll = _profile(z, c_best / m if c_best != 0.0 else 0.0)
    if not np.isfinite(ll) or not np.isfinite(sigma):
        raise FitError("GPD profile likelihood has no finite optimum")

    # Newton polish on (xi, log sigma) with step halving
    for _ in range(40):
        score = gpd_score(z, xi, sigma)
        grad = np.array([score[0], score[1] * sigma])  # chain rule for log sigma
        if np.max(np.abs(grad)) < 1e-9 * max(1.0, z.size):
            break
        info = _observed_information(z, xi, sigma)
        jac = np.diag([1.0, sigma])
        try:
            step = np.linalg.solve(jac @ info @ jac, grad)
        except np.linalg.LinAlgError:
            break
        lam, moved = 1.0, False
        while lam > 1e-10:
            xi_new = xi + lam * step[0]
            sigma_new = sigma * float(np.exp(lam * step[1]))
            ll_new = gpd_loglik(z, xi_new, sigma_new)
            if xi_new > _XI_LOWER and ll_new >= ll:
                xi, sigma, ll = xi_new, sigma_new, ll_new
                moved = True
                break
            lam /= 2.0
        if not moved:
            break

    # the constrained MLE may sit on the xi > -1 boundary (short-tailed small
    # samples); the score need not vanish there
    at_boundary = xi <= -1.0 + 1e-5
    score = gpd_score(z, xi, sigma)
    if not at_boundary and np.linalg.norm(score) >= 1e-4 * z.size:
        raise FitError(
            f"GPD fit did not converge: score norm {np.linalg.norm(score):.3g} "
            f"at xi={xi:.4g}, sigma={sigma:.4g}, n={z.size}")
    info = _observed_information(z, xi, sigma)
    try:
        cov = np.linalg.inv(info)
        se_xi = float(np.sqrt(max(cov[0, 0], 0.0)))
        se_sigma = float(np.sqrt(max(cov[1, 1], 0.0)))
    except np.linalg.LinAlgError as exc:
        if not at_boundary:
            raise FitError(f"observed information is singular at the optimum: {exc}") from exc
        se_xi = se_sigma = np.inf
    return GpdFit(float(xi), float(sigma), se_xi, se_sigma, int(z.size),
                  gpd_loglik(z, xi, sigma))


# ---------------------------------------------------------------------------
# batched refits for the parametric bootstrap
# ---------------------------------------------------------------------------

def _profile_batch(Z: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Profile log-likelihood rowwise at a per-row theta vector."""
    n = Z.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.log1p(theta[:, None] * Z).mean(axis=1)
        ll = -n * (np.log(np.abs(xi) / np.abs(theta)) + xi + 1.0)
    valid = (xi > _XI_LOWER) & (np.abs(xi) > 1e-12) & (theta != 0.0) & np.isfinite(ll)
    return np.where(valid, ll, -np.inf), xi


def _fit_gpd_batch(Z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Profile-likelihood MLE for every row of Z (coarse grid + golden section).

    Returns (xi, sigma, ok); rows where no finite optimum was found have
    ok = False.
    """
    B, n = Z.shape
    m = Z.max(axis=1)
    cs = _c_grid()
    best_ll = np.full(B, -np.inf)
    best_idx = np.zeros(B, dtype=int)
    for i, c in enumerate(cs):
        ll, _ = _profile_batch(Z, np.full(B, c) / m)
        better = ll > best_ll
        best_ll = np.where(better, ll, best_ll)
        best_idx = np.where(better, i, best_idx)

    # golden-section refinement (vectorized; one profile eval per iteration)
    a = cs[np.maximum(best_idx - 1, 0)] / m
    b = cs[np.minimum(best_idx + 1, cs.size - 1)] / m
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, _ = _profile_batch(Z, x1)
    f2, _ = _profile_batch(Z, x2)
    for _ in range(45):
        left = f1 > f2
        old_x1, old_f1 = x1, f1
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        x1 = np.where(left, b - _GOLDEN * (b - a), x2)
        x2 = np.where(left, old_x1, a + _GOLDEN * (b - a))
        probe = np.where(left, x1, x2)
        f_probe, _ = _profile_batch(Z, probe)
        f1 = np.where(left, f_probe, f2)
        f2 = np.where(left, old_f1, f_probe)
    theta_ref = (a + b) / 2.0
    ll_ref, _ = _profile_batch(Z, theta_ref)

    ll_exp = -n * (np.log(Z.mean(axis=1)) + 1.0)
    theta_grid = cs[best_idx] / m
    stack_ll = np.stack([ll_exp, best_ll, ll_ref])
    choice = np.argmax(stack_ll, axis=0)
    theta = np.where(choice == 1, theta_grid, theta_ref)

    ll_fin, xi = _profile_batch(Z, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = np.where(choice == 0, Z.mean(axis=1), xi / theta)
    xi = np.where(choice == 0, 0.0, xi)
    ok = np.where(choice == 0, np.isfinite(ll_exp), np.isfinite(ll_fin) & (sigma > 0))
    return xi, sigma, ok


# ---------------------------------------------------------------------------
# goodness-of-fit statistics and bootstrap p-values
# ---------------------------------------------------------------------------

def cvm_statistic(w_sorted: np.ndarray) -> np.ndarray:
    """Cramer-von Mises statistic from sorted probability integral transforms.

    Accepts a vector or a (B, n) matrix (rowwise statistics).
    """
    w = np.atleast_2d(w_sorted)
    n = w.shape[1]
    i = np.arange(1, n + 1)
    stat = ((w - (2 * i - 1) / (2 * n)) ** 2).sum(axis=1) + 1.0 / (12 * n)
    return stat if w_sorted.ndim > 1 else stat[0]


def ad_statistic(w_sorted: np.ndarray) -> np.ndarray:
    """Anderson-Darling statistic from sorted probability integral transforms."""
    w = np.clip(np.atleast_2d(w_sorted), 1e-15, 1 - 1e-15)
    n = w.shape[1]
    i = np.arange(1, n + 1)
    stat = -n - ((2 * i - 1) * (np.log(w) + np.log1p(-w[:, ::-1]))).sum(axis=1) / n
    return stat if w_sorted.ndim > 1 else stat[0]


def gof_pvalues(excesses, fit: GpdFit, n_boot: int = 999,
                seed: Optional[int] = None) -> tuple[float, float]:
    """Parametric-bootstrap p-values for the AD and CVM tests of a GPD fit.

    Each bootstrap replicate is simulated from the fitted GPD and refitted
    before its statistics are computed; p = (1 + #{boot >= observed}) /
    (#kept + 1).  Replicates whose refit fails are dropped with a warning as
    long as they stay under 5% of the total.
    """
    if n_boot < 1:
        raise ParameterError(f"n_boot must be >= 1, got {n_boot}")
    z = np.asarray(excesses, dtype=float)
    n = z.size
    w_obs = np.sort(gpd_cdf(z, fit.xi, fit.sigma))
    obs_ad = float(ad_statistic(w_obs))
    obs_cvm = float(cvm_statistic(w_obs))

    rng = np.random.default_rng(seed)
    Z = sample_gpd(rng, (n_boot, n), fit.xi, fit.sigma)
    xi_b, sigma_b, ok = _fit_gpd_batch(Z)
    n_bad = int((~ok).sum())
    if n_bad:
        if n_bad > 0.05 * n_boot:
            raise FitError(f"{n_bad}/{n_boot} bootstrap refits failed")
        logger.warning("dropping %d/%d failed bootstrap refits", n_bad, n_boot)
        Z, xi_b, sigma_b = Z[ok], xi_b[ok], sigma_b[ok]
    W = np.empty_like(Z)
    zero = xi_b == 0.0
    if zero.any():
        W[zero] = 1.0 - np.exp(-Z[zero] / sigma_b[zero, None])
    if (~zero).any():
        nz = ~zero
        arg = 1.0 + xi_b[nz, None] * Z[nz] / sigma_b[nz, None]
        W[nz] = 1.0 - np.where(arg > 0.0, np.maximum(arg, 1e-300), 1e-300) \
            ** (-1.0 / xi_b[nz, None])
    W.sort(axis=1)
    boot_ad = ad_statistic(W)
    boot_cvm = cvm_statistic(W)
    kept = W.shape[0]
    p_ad = (1.0 + int((boot_ad >= obs_ad - 1e-12).sum())) / (kept + 1.0)
    p_cvm = (1.0 + int((boot_cvm >= obs_cvm - 1e-12).sum())) / (kept + 1.0)
    return p_ad, p_cvm


# ---------------------------------------------------------------------------
# threshold selection
# ---------------------------------------------------------------------------

@dataclass
class ThresholdSelection:
    """Result of a goodness-of-fit threshold scan over an ascending grid.

    p-values are NaN at grid points that were skipped (too few excesses) or
    not visited (the downward scan stops at the first failing point).
    """

    grid: np.ndarray
    n_exceed: np.ndarray
    p_ad: np.ndarray
    p_cvm: np.ndarray
    alpha: float
    chosen: float
    xi: np.ndarray
    sigma: np.ndarray


def default_grid(index_db: np.ndarray) -> np.ndarray:
    """Integer-dB thresholds from the 50th to the 99.9th percentile of the index."""
    lo = float(np.percentile(index_db, 50.0))
    hi = float(np.percentile(index_db, 99.9))
    grid = np.arange(np.ceil(lo), np.floor(hi) + 1.0)
    if grid.size == 0:
        raise SelectionError("index spread too small for the default threshold grid")
    return grid


def threshold_scan(index: EnvelopeIndexSeries, grid=None, alpha: float = 0.10,
                   n_boot: int = 999, seed: Optional[int] = None,
                   min_excesses: int = MIN_EXCESSES_PER_POINT,
                   full: bool = False) -> ThresholdSelection:
    """Pick the lowest threshold whose excesses look GPD all the way up.

    Scanning downward from the highest admissible grid point, the chosen
    threshold is the lowest one such that both bootstrap p-values are >= alpha
    there and at every higher admissible point; the scan stops at the first
    failure (pass ``full=True`` to keep computing p-values below it, e.g. for
    plots -- the choice is unaffected).
    """
    y = np.asarray(index.index_db, dtype=float)
    if grid is None:
        grid = default_grid(y)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ParameterError("threshold grid must be non-empty and strictly ascending")

    n_exceed = np.array([(y > u).sum() for u in grid])
    feasible = n_exceed >= min_excesses
    skipped = int((~feasible).sum())
    if skipped:
        logger.warning("skipping %d grid point(s) with fewer than %d excesses",
                       skipped, min_excesses)
    if not feasible.any():
        raise SelectionError(
            f"no grid point leaves at least {min_excesses} excesses")

    p_ad = np.full(grid.size, np.nan)
    p_cvm = np.full(grid.size, np.nan)
    xi = np.full(grid.size, np.nan)
    sigma = np.full(grid.size, np.nan)
    children = np.random.SeedSequence(seed).spawn(grid.size)

    chosen = None
    blocked = False
    for i in np.nonzero(feasible)[0][::-1]:
        u = grid[i]
        excesses = y[y > u] - u
        try:
            fit = fit_gpd_constant(excesses)
        except FitError as exc:
            logger.warning("GPD fit failed at threshold %.6g: %s", u, exc)
            blocked = True
            if not full:
                break
            continue
        pa, pc = gof_pvalues(excesses, fit, n_boot=n_boot,
                             seed=children[i].generate_state(1)[0])
        p_ad[i], p_cvm[i] = pa, pc
        xi[i], sigma[i] = fit.xi, fit.sigma
        if min(pa, pc) < alpha:
            blocked = True
            if not full:
                break
        elif not blocked:
            chosen = float(u)
    if chosen is None:
        visited = ~np.isnan(p_ad)
        detail = ", ".join(
            f"{grid[i]:g}: ad={p_ad[i]:.3f} cvm={p_cvm[i]:.3f}"
            for i in np.nonzero(visited)[0])
        raise SelectionError(
            f"no threshold passes both tests at alpha={alpha:g} ({detail or 'none visited'})")
    return ThresholdSelection(grid, n_exceed, p_ad, p_cvm, alpha, chosen, xi, sigma)


def write_scan_csv(selection: ThresholdSelection, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("threshold,n_exceed,p_ad,p_cvm,chosen_flag\n")
        for i, u in enumerate(selection.grid):
            flag = 1 if u == selection.chosen else 0
            fh.write(f"{fmt_float(u)},{int(selection.n_exceed[i])},"
                     f"{fmt_float(selection.p_ad[i])},{fmt_float(selection.p_cvm[i])},{flag}\n")


def multi_event_threshold(selections: Sequence[Union[ThresholdSelection, float]]) -> float:
    """Lowest per-event chosen threshold (the multi-event rule)."""
    if not selections:
        raise ParameterError("multi_event_threshold needs at least one event")
    values = [s.chosen if isinstance(s, ThresholdSelection) else float(s)
              for s in selections]
    return float(min(values))


# ---------------------------------------------------------------------------
# exceedance datasets
# ---------------------------------------------------------------------------

@dataclass
class ExceedanceDataset:
    """Indicators and excesses of an index over a threshold.

    ``excesses`` is aligned with ``timestamps`` and holds NaN wherever the
    indicator is zero; ``lag_seconds`` records the availability lag of the
    covariates paired with each response.
    """

    timestamps: np.ndarray
    indicators: np.ndarray
    excesses: np.ndarray
    threshold: float
    lag_seconds: float = 0.0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.indicators = np.asarray(self.indicators, dtype=np.uint8)
        self.excesses = np.asarray(self.excesses, dtype=float)
        if not (self.timestamps.shape == self.indicators.shape == self.excesses.shape):
            raise ParameterError("exceedance dataset arrays must share one shape")

    def __len__(self) -> int:
        return self.timestamps.size

    @property
    def n_exceed(self) -> int:
        return int(self.indicators.sum())

    @property
    def excess_values(self) -> np.ndarray:
        return self.excesses[self.indicators == 1]


def exceedances(index: EnvelopeIndexSeries, u: float,
                lag_seconds: float = 0.0) -> ExceedanceDataset:
    """Strict exceedances of the index: I = 1{Y > u}, z = Y - u where I = 1."""
    y = np.asarray(index.index_db, dtype=float)
    ind = y > u
    z = np.where(ind, y - u, np.nan)
    return ExceedanceDataset(index.timestamps, ind.astype(np.uint8), z, float(u),
                             float(lag_seconds))


def concat_datasets(datasets: Sequence[ExceedanceDataset]) -> ExceedanceDataset:
    """Pool datasets across events (same threshold and lag required)."""
    if not datasets:
        raise ParameterError("nothing to concatenate")
    u = datasets[0].threshold
    lag = datasets[0].lag_seconds
    for d in datasets[1:]:
        if d.threshold != u or d.lag_seconds != lag:
            raise ParameterError("cannot pool datasets with different threshold or lag")
    return ExceedanceDataset(np.concatenate([d.timestamps for d in datasets]),
                             np.concatenate([d.indicators for d in datasets]),
                             np.concatenate([d.excesses for d in datasets]), u, lag)
