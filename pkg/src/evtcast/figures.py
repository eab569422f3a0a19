"""Matplotlib figure builders for the CLI report path.

Figures are constructed directly on `matplotlib.figure.Figure` (no pyplot, no
global state) and rendered to files with the Agg canvas, so the library works
headless and output bytes depend only on the data.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .envelope import EnvelopeIndexSeries
from .evaluate import AcfResult, SweepEntry
from .evt import ThresholdSelection
from .forecast import ForecastSeries


def save_figure(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120)


def _offset_hours(timestamps: np.ndarray) -> np.ndarray:
    return (timestamps - timestamps[0]) / 3600.0


def threshold_scan_figure(sel: ThresholdSelection) -> Figure:
    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot(111)
    ax.plot(sel.grid, sel.p_ad, "o-", ms=3, label="AD")
    ax.plot(sel.grid, sel.p_cvm, "s--", ms=3, label="CVM")
    ax.axhline(sel.alpha, color="grey", lw=0.8)
    ax.axvline(sel.chosen, color="tab:red", lw=0.8, ls=":",
               label=f"chosen {sel.chosen:g} dB")
    ax.set_xlabel("threshold (dB)")
    ax.set_ylabel("bootstrap p-value")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig


def envelope_index_figure(series: EnvelopeIndexSeries, max_points: int = 4000) -> Figure:
    k = max(1, len(series) // max_points)
    times = _offset_hours(series.timestamps[::k])
    fig = Figure(figsize=(7.0, 3.2))
    ax = fig.add_subplot(111)
    ax.plot(times, series.index_db[::k], lw=0.5, color="tab:blue")
    ax.set_xlabel("hours from start")
    ax.set_ylabel("index (dB)")
    if series.band is not None:
        ax.set_title(series.band.token, fontsize=9)
    fig.tight_layout()
    return fig


def forecast_probability_figure(fs: ForecastSeries) -> Figure:
    fig = Figure(figsize=(7.0, 3.2))
    ax = fig.add_subplot(111)
    if len(fs):
        ax.plot(_offset_hours(fs.issue_times), fs.phi, lw=0.8, color="black")
    ax.set_xlabel("issue time (hours from start)")
    ax.set_ylabel("exceedance probability")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"threshold {fs.threshold_db:g} dB", fontsize=9)
    fig.tight_layout()
    return fig


def acf_figure(acf: AcfResult, title: str) -> Figure:
    fig = Figure(figsize=(5.0, 3.2))
    ax = fig.add_subplot(111)
    ax.vlines(acf.lags, 0, acf.values, color="black", lw=1.0)
    lags = acf.lags[1:]
    ax.plot(lags, acf.halfwidths[1:], color="tab:blue", ls="--", lw=0.8)
    ax.plot(lags, -acf.halfwidths[1:], color="tab:blue", ls="--", lw=0.8)
    ax.axhline(0, color="grey", lw=0.5)
    ax.set_xlabel("lag")
    ax.set_ylabel("ACF")
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    return fig


def qq_figure(points: np.ndarray) -> Figure:
    fig = Figure(figsize=(4.2, 4.2))
    ax = fig.add_subplot(111)
    ax.plot(points[:, 0], points[:, 1], "o", ms=2.5, alpha=0.7)
    lim = (min(points.min(), 0.0), points.max() * 1.02)
    ax.plot(lim, lim, color="grey", lw=0.8)
    ax.set_xlabel("theoretical quantile")
    ax.set_ylabel("empirical quantile")
    ax.set_title("standardized excesses", fontsize=9)
    fig.tight_layout()
    return fig


def auc_sweep_figure(entries: list[SweepEntry]) -> Figure:
    fig = Figure(figsize=(5.0, 3.2))
    ax = fig.add_subplot(111)
    fracs = [e.fraction for e in entries]
    aucs = [e.auc for e in entries]
    ax.plot(fracs, aucs, "o-", ms=4)
    ax.set_xlabel("fraction of the EVT threshold")
    ax.set_ylabel("training AUC")
    fig.tight_layout()
    return fig
