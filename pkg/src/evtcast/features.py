"""Rolling-window covariate features over temporal, frequency and cepstral domains.

Features are computed from both the band-filtered signals and their linear
envelopes.  Column names are ``<feature>_<domain>_<source>_<band>`` and the
exported matrix orders columns lexicographically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .envelope import EnvelopeIndexSeries
from .errors import AlignmentError, ParameterError
from .preprocess import CovariateMatrix
from .trace import BandSpec, SeismicTrace

logger = logging.getLogger(__name__)

DOMAINS = ("temporal", "frequency", "cepstral")
SOURCES = ("signal", "envelope")

FEATURES = (
    "energy",
    "ioce",
    "kurtosis",
    "max",
    "mean",
    "mean_kurtosis",
    "min",
    "ratio_mom",
    "rms_bandwidth",
    "roa",
    "rod",
    "sd",
    "shannon_entropy",
    "skewness",
)

ENTROPY_BINS = 64
MEAN_KURTOSIS_BLOCKS = 16
_CEPSTRAL_LOG_GUARD = 1e-12


@dataclass
class FeatureWindow:
    """One window of values in a given domain of representation."""

    values: np.ndarray
    domain: str
    source: str = "signal"
    band: BandSpec = field(default_factory=BandSpec.raw)
    window_end: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.domain not in DOMAINS:
            raise ParameterError(f"unknown domain {self.domain!r}")
        if self.source not in SOURCES:
            raise ParameterError(f"unknown source {self.source!r}")
        if self.values.ndim != 1 or self.values.size < 8:
            raise ParameterError("feature window needs >= 8 values (4th-moment stability)")
        if not np.isfinite(self.values).all():
            raise ParameterError("feature window contains non-finite values")


@dataclass
class FeatureVector:
    """Named feature values for one window.

    ``degenerate`` lists features whose defining formula was undefined for the
    window (zero variance, zero energy, zero mean); those entries carry the
    documented conventional values so downstream stays total.
    """

    values: dict[str, float]
    window_end: float = 0.0
    degenerate: set[str] = field(default_factory=set)


def to_domain(window, domain: str, *, source: str = "signal",
              band: Optional[BandSpec] = None, window_end: float = 0.0) -> FeatureWindow:
    """Map raw temporal values into one of the three representation domains.

    temporal: identity.  frequency: modulus of the DFT, first half including
    DC.  cepstral: modulus of the DFT of the log-magnitude spectrum (the
    transform applied twice), first half; the log argument is guarded by a
    small constant to stay finite.
    """
    x = np.asarray(window, dtype=float)
    if domain not in DOMAINS:
        raise ParameterError(f"unknown domain {domain!r}")
    if domain == "temporal":
        values = x
    else:
        spectrum = np.abs(np.fft.fft(x))
        half = x.size // 2 + 1
        if domain == "frequency":
            values = spectrum[:half]
        else:
            log_spectrum = np.log(spectrum + _CEPSTRAL_LOG_GUARD)
            values = np.abs(np.fft.fft(log_spectrum))[:half]
    return FeatureWindow(values, domain, source=source,
                         band=band if band is not None else BandSpec.raw(),
                         window_end=window_end)


def _moments(x: np.ndarray):
    mean = x.mean()
    centered = x - mean
    m2 = np.mean(centered ** 2)
    m3 = np.mean(centered ** 3)
    m4 = np.mean(centered ** 4)
    return mean, m2, m3, m4


def _skew_kurt(x: np.ndarray):
    """Standardized 3rd/4th central moments; (0, 3) convention on zero variance."""
    _, m2, m3, m4 = _moments(x)
    if m2 <= 0.0:
        return 0.0, 3.0, True
    return m3 / m2 ** 1.5, m4 / m2 ** 2, False


def _shannon_entropy(x: np.ndarray) -> float:
    lo, hi = x.min(), x.max()
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(x, bins=ENTROPY_BINS, range=(lo, hi))
    p = counts[counts > 0] / x.size
    return float(-(p * np.log(p)).sum())


def extract_features(window: FeatureWindow,
                     feature_set: Optional[Sequence[str]] = None) -> FeatureVector:
    """Compute the configured features of one window.

    Rate of attack/decay are the max/min consecutive difference divided by the
    window length n; energy is the sum of squares; ioce is the energy centroid
    along the domain axis; rms_bandwidth the square-rooted second central
    moment of the normalized energy distribution; Shannon entropy (nats) uses
    64 equal-width bins framed by the window min/max; mean_kurtosis is the
    kurtosis of 16 non-overlapping sub-block means.
    """
    names = tuple(feature_set) if feature_set is not None else FEATURES
    unknown = set(names) - set(FEATURES)
    if unknown:
        raise ParameterError(f"unknown feature(s): {sorted(unknown)}")

    x = window.values
    n = x.size
    out: dict[str, float] = {}
    degenerate: set[str] = set()

    mean = x.mean()
    skew, kurt, moments_degenerate = _skew_kurt(x)
    energy = float(np.dot(x, x))
    diffs = np.diff(x)

    for name in names:
        if name == "mean":
            value = mean
        elif name == "sd":
            value = x.std(ddof=1)
        elif name == "skewness":
            value = skew
            if moments_degenerate:
                degenerate.add(name)
        elif name == "kurtosis":
            value = kurt
            if moments_degenerate:
                degenerate.add(name)
        elif name == "mean_kurtosis":
            blocks = np.array_split(x, min(MEAN_KURTOSIS_BLOCKS, n))
            block_means = np.array([b.mean() for b in blocks])
            _, value, block_degenerate = _skew_kurt(block_means)
            if block_degenerate:
                degenerate.add(name)
        elif name == "energy":
            value = energy
        elif name == "max":
            value = x.max()
        elif name == "min":
            value = x.min()
        elif name == "ratio_mom":
            if mean == 0.0:
                value = 0.0
                degenerate.add(name)
            else:
                value = x.max() / mean
        elif name == "ioce":
            if energy == 0.0:
                value = 0.0
                degenerate.add(name)
            else:
                value = float(np.dot(np.arange(n), x ** 2) / energy)
        elif name == "rms_bandwidth":
            if energy == 0.0:
                value = 0.0
                degenerate.add(name)
            else:
                centroid = np.dot(np.arange(n), x ** 2) / energy
                value = float(np.sqrt(np.dot((np.arange(n) - centroid) ** 2, x ** 2) / energy))
        elif name == "shannon_entropy":
            value = _shannon_entropy(x)
        elif name == "roa":
            value = diffs.max() / n
        elif name == "rod":
            value = diffs.min() / n
        out[name] = float(value)

    return FeatureVector(out, window_end=window.window_end, degenerate=degenerate)


def column_name(feature: str, domain: str, source: str, band: BandSpec) -> str:
    return f"{feature}_{domain}_{source}_{band.token}"


def feature_matrix(traces_by_band: Mapping[str, SeismicTrace],
                   envelopes_by_band: Mapping[str, EnvelopeIndexSeries],
                   config,
                   feature_set: Optional[Sequence[str]] = None) -> CovariateMatrix:
    """Covariate matrix over the issue-time grid.

    One row per issue time ``start + k*cadence`` (grid anchored to the trace
    start), using data from ``[t - W, t)``; the first row is the first grid
    point with a full window.  Columns are named
    ``<feature>_<domain>_<source>_<band>`` and sorted lexicographically.
    """
    if not traces_by_band:
        raise ParameterError("feature_matrix needs at least one band")
    names = tuple(feature_set) if feature_set is not None else tuple(config.feature_set)
    domains = tuple(config.domains)
    sources = tuple(config.sources)

    tokens = sorted(traces_by_band)
    ref = traces_by_band[tokens[0]]
    rate = ref.sample_rate_hz
    length = len(ref)
    for token in tokens:
        tr = traces_by_band[token]
        if abs(tr.start_epoch - ref.start_epoch) > 1e-6 or tr.sample_rate_hz != rate \
                or len(tr) != length:
            raise AlignmentError("bands must share start time, rate and length")
        if "envelope" in sources:
            if token not in envelopes_by_band:
                raise AlignmentError(f"missing envelope for band {token}")
            if len(envelopes_by_band[token]) != length:
                raise AlignmentError(f"envelope/trace length mismatch for band {token}")

    window_n = int(round(config.window_s * rate))
    if window_n < 8:
        raise ParameterError("window too short for feature extraction")
    step = config.cadence_s
    # issue times t = k*step (offsets from start) with [t-W, t) inside the data
    k_first = int(np.ceil(config.window_s / step - 1e-9))
    k_last = int(np.floor(length / rate / step + 1e-9))
    if k_first > k_last:
        raise AlignmentError("not enough history for a single covariate window")

    source_arrays: dict[tuple[str, str], np.ndarray] = {}
    for token in tokens:
        source_arrays[("signal", token)] = traces_by_band[token].samples
        if "envelope" in sources:
            source_arrays[("envelope", token)] = envelopes_by_band[token].envelope

    columns = sorted(
        column_name(f, d, s, traces_by_band[token].band)
        for f in names for d in domains for s in sources for token in tokens
    )
    col_index = {c: j for j, c in enumerate(columns)}

    issue_offsets = np.arange(k_first, k_last + 1) * step
    values = np.empty((issue_offsets.size, len(columns)))
    start_epoch = ref.start_epoch

    for i, off in enumerate(issue_offsets):
        end_idx = int(round(off * rate))
        begin_idx = end_idx - window_n
        window_end = start_epoch + off
        for source in sources:
            for token in tokens:
                raw = source_arrays[(source, token)][begin_idx:end_idx]
                for domain in domains:
                    fw = to_domain(raw, domain, source=source,
                                   band=traces_by_band[token].band, window_end=window_end)
                    vec = extract_features(fw, names)
                    if vec.degenerate:
                        logger.debug("degenerate features at %s: %s", window_end,
                                     sorted(vec.degenerate))
                    for fname, fval in vec.values.items():
                        values[i, col_index[column_name(fname, domain, source,
                                                        traces_by_band[token].band)]] = fval

    return CovariateMatrix(start_epoch + issue_offsets, columns, values)
