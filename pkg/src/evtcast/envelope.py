"""Analytic signal, trace envelope and the decibel index.

The envelope is the modulus of the analytic extension of the trace, built in
the frequency domain: transform, reweight so that negative frequencies vanish,
inverse-transform.  The index is the envelope in decibels,
``index_db = 20*log10(envelope)``, clamped at a configurable floor so the
series stays finite for silent input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

import numpy as np

from .errors import ParameterError, TraceFormatError
from .trace import BandSpec, SeismicTrace, fmt_float, format_utc, parse_utc, to_epoch

DB_FLOOR_DEFAULT = -300.0


def dft(series) -> np.ndarray:
    """Discrete Fourier transform, f_t = sum_k s_k exp(-2*pi*i*k*t/T).

    Computed at the exact input length (no power-of-two padding): the parity
    rule for the analytic-signal weights depends on the true T.
    """
    x = np.asarray(series)
    if x.ndim != 1 or x.size < 1:
        raise ParameterError("dft requires a non-empty 1-D sequence")
    return np.fft.fft(x)


def idft(series) -> np.ndarray:
    """Unnormalized inverse transform, sum_k f_k exp(+2*pi*i*k*t/T).

    ``idft(dft(s)) / T`` reconstructs ``s``.
    """
    x = np.asarray(series)
    if x.ndim != 1 or x.size < 1:
        raise ParameterError("idft requires a non-empty 1-D sequence")
    return np.fft.ifft(x) * x.size


def analytic_weights(n: int) -> np.ndarray:
    """Frequency weights h turning a spectrum into an analytic-signal spectrum.

    DC keeps weight 1, positive frequencies are doubled, negative frequencies
    are zeroed; for even n the Nyquist bin keeps weight 1.  E.g. n=6 gives
    (1, 2, 2, 1, 0, 0) and n=5 gives (1, 2, 2, 0, 0).
    """
    if n < 2:
        raise ParameterError("analytic weights need length >= 2")
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[1:n // 2] = 2.0
        h[n // 2] = 1.0
    else:
        h[1:(n + 1) // 2] = 2.0
    return h


@dataclass
class AnalyticSignal:
    """Complex analytic extension of a real sequence."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)


def hilbert(series) -> AnalyticSignal:
    """Analytic signal via the frequency-domain construction.

    The real part equals the input (to rounding) and the imaginary part is
    its Hilbert transform.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ParameterError("hilbert requires a real 1-D sequence of length >= 2")
    spectrum = np.fft.fft(x) * analytic_weights(x.size)
    return AnalyticSignal(np.fft.ifft(spectrum))


def db_index(env_value: float, floor_db: float = DB_FLOOR_DEFAULT) -> float:
    """Decibel index of a single envelope value, 20*log10, clamped at the floor."""
    if env_value < 0:
        raise ParameterError(f"envelope value must be >= 0, got {env_value}")
    floor_amp = 10.0 ** (floor_db / 20.0)
    return 20.0 * np.log10(max(env_value, floor_amp))


def _db_array(env: np.ndarray, floor_db: float) -> np.ndarray:
    floor_amp = 10.0 ** (floor_db / 20.0)
    return 20.0 * np.log10(np.maximum(env, floor_amp))


@dataclass
class EnvelopeIndexSeries:
    """Trace envelope (linear amplitude) and its decibel index on a uniform grid."""

    envelope: np.ndarray
    index_db: np.ndarray
    start_time: datetime
    sample_rate_hz: float
    band: Optional[BandSpec] = None
    floor_db: float = DB_FLOOR_DEFAULT

    def __post_init__(self):
        self.envelope = np.asarray(self.envelope, dtype=float)
        self.index_db = np.asarray(self.index_db, dtype=float)
        if self.envelope.shape != self.index_db.shape:
            raise ParameterError("envelope and index_db must have equal length")
        if (self.envelope < 0).any():
            raise ParameterError("envelope values must be non-negative")

    def __len__(self) -> int:
        return self.envelope.size

    @property
    def start_epoch(self) -> float:
        return to_epoch(self.start_time)

    @property
    def timestamps(self) -> np.ndarray:
        """Epoch seconds (UTC) of each value."""
        return self.start_epoch + np.arange(self.envelope.size) / self.sample_rate_hz

    @classmethod
    def from_index(cls, index_db, start_time: datetime, sample_rate_hz: float,
                   band: Optional[BandSpec] = None,
                   floor_db: float = DB_FLOOR_DEFAULT) -> "EnvelopeIndexSeries":
        """Build a series from decibel values alone (envelope derived as 10^(dB/20))."""
        index_db = np.asarray(index_db, dtype=float)
        env = 10.0 ** (index_db / 20.0)
        return cls(env, index_db, start_time, sample_rate_hz, band, floor_db)


def envelope(trace: SeismicTrace, floor_db: float = DB_FLOOR_DEFAULT) -> EnvelopeIndexSeries:
    """Envelope and decibel index of a trace.

    Computed over the whole contiguous trace (the construction is global in
    the frequency domain); no smoothing is applied.
    """
    analytic = hilbert(trace.samples)
    env = np.abs(analytic.values)
    return EnvelopeIndexSeries(env, _db_array(env, floor_db), trace.start_time,
                               trace.sample_rate_hz, trace.band, floor_db)


def write_envelope_csv(series: EnvelopeIndexSeries, path) -> None:
    """Export as ``timestamp,envelope,index_db`` rows with a header line."""
    times = series.timestamps
    with open(path, "w", encoding="ascii") as fh:
        fh.write("timestamp,envelope,index_db\n")
        for t, e, y in zip(times, series.envelope, series.index_db):
            fh.write(f"{format_utc(t)},{fmt_float(e)},{fmt_float(y)}\n")


def load_envelope_csv(path, band: Optional[BandSpec] = None) -> EnvelopeIndexSeries:
    """Read a series written by :func:`write_envelope_csv`.

    The grid must be uniform; the rate is recovered from the first two rows.
    """
    times: list[float] = []
    env: list[float] = []
    idx: list[float] = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "timestamp,envelope,index_db":
            raise TraceFormatError(f"{path}: unexpected envelope CSV header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            ts, e, y = line.split(",")
            times.append(to_epoch(parse_utc(ts)))
            env.append(float(e))
            idx.append(float(y))
    if len(times) < 2:
        raise TraceFormatError(f"{path}: envelope CSV needs at least 2 rows")
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-6):
        raise TraceFormatError(f"{path}: envelope CSV grid is not uniform")
    rate = 1.0 / steps[0]
    return EnvelopeIndexSeries(np.array(env), np.array(idx), parse_utc(format_utc(times[0])),
                               rate, band)
