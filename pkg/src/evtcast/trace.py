"""Signal traces: loading, validation, band filtering and decimation.

A trace is a uniformly sampled real-valued signal (sensor counts) with a
sample rate, a UTC start time and a band label.  The on-disk format is a
small CSV dialect: ``#``-prefixed ``key=value`` header lines followed by one
sample per line (see :func:`load_trace` / :func:`write_trace`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Optional

import numpy as np
from scipy import signal as _signal

from .errors import ParameterError, TraceDataError, TraceFormatError

FILTER_ORDER = 4

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# time helpers
# ---------------------------------------------------------------------------

def parse_utc(text: str) -> datetime:
    """Parse an ISO-8601 UTC timestamp (trailing ``Z`` or explicit offset)."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise TraceFormatError(f"unparsable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_utc(when: datetime | float) -> str:
    """Format a UTC instant as ISO-8601 with fixed microsecond precision."""
    if isinstance(when, (int, float, np.floating)):
        when = from_epoch(float(when))
    when = when.astimezone(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"


def to_epoch(when: datetime) -> float:
    return (when.astimezone(timezone.utc) - _EPOCH).total_seconds()


def from_epoch(seconds: float) -> datetime:
    # round to whole microseconds so formatting round-trips
    return _EPOCH + timedelta(microseconds=round(seconds * 1e6))


def fmt_float(x: float) -> str:
    """Shortest decimal representation that round-trips a float64."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# band specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandSpec:
    """Frequency band: raw (unfiltered), bandpass or highpass."""

    kind: str = "raw"
    lo_hz: Optional[float] = None
    hi_hz: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("raw", "bandpass", "highpass"):
            raise ParameterError(f"unknown band kind {self.kind!r}")
        if self.kind == "bandpass":
            if self.lo_hz is None or self.hi_hz is None:
                raise ParameterError("bandpass needs lo_hz and hi_hz")
            if not (0.0 < self.lo_hz < self.hi_hz):
                raise ParameterError(
                    f"bandpass corners must satisfy 0 < lo < hi, got ({self.lo_hz}, {self.hi_hz})")
        if self.kind == "highpass":
            if self.lo_hz is None:
                raise ParameterError("highpass needs lo_hz")
            if self.lo_hz <= 0.0:
                raise ParameterError(f"highpass corner must be positive, got {self.lo_hz}")

    @classmethod
    def raw(cls) -> "BandSpec":
        return cls("raw")

    @classmethod
    def bandpass(cls, lo_hz: float, hi_hz: float) -> "BandSpec":
        return cls("bandpass", float(lo_hz), float(hi_hz))

    @classmethod
    def highpass(cls, lo_hz: float) -> "BandSpec":
        return cls("highpass", float(lo_hz))

    @property
    def token(self) -> str:
        """Short name used in column names, headers and CLI flags."""
        if self.kind == "raw":
            return "raw"
        if self.kind == "bandpass":
            return f"{self.lo_hz:g}-{self.hi_hz:g}Hz"
        return f"hp{self.lo_hz:g}Hz"

    @classmethod
    def parse(cls, token: str) -> "BandSpec":
        t = token.strip()
        if t.lower() == "raw":
            return cls.raw()
        body = t[:-2] if t.endswith(("Hz", "hz")) else t
        if body.startswith("hp"):
            try:
                return cls.highpass(float(body[2:]))
            except ValueError as exc:
                raise ParameterError(f"unparsable band token {token!r}") from exc
        if "-" in body:
            lo, _, hi = body.partition("-")
            try:
                return cls.bandpass(float(lo), float(hi))
            except ValueError as exc:
                raise ParameterError(f"unparsable band token {token!r}") from exc
        raise ParameterError(f"unparsable band token {token!r}")

    def validate_for_rate(self, sample_rate_hz: float) -> None:
        nyquist = sample_rate_hz / 2.0
        if self.kind == "bandpass" and not self.hi_hz < nyquist:
            raise ParameterError(
                f"band {self.token} exceeds Nyquist {nyquist:g} Hz")
        if self.kind == "highpass" and not self.lo_hz < nyquist:
            raise ParameterError(
                f"band {self.token} exceeds Nyquist {nyquist:g} Hz")


# ---------------------------------------------------------------------------
# trace container
# ---------------------------------------------------------------------------

@dataclass
class SeismicTrace:
    """Uniformly sampled signal with metadata.

    Immutable by convention: operations return new traces and never modify
    ``samples`` in place, so instances are safe to share across threads.
    """

    samples: np.ndarray
    sample_rate_hz: float
    start_time: datetime
    band: BandSpec = field(default_factory=BandSpec.raw)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise TraceDataError("trace must be a 1-D sequence of length >= 2")
        if not self.sample_rate_hz > 0:
            raise TraceDataError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.isfinite(self.samples).all():
            raise TraceDataError("trace contains non-finite samples")
        if self.start_time.tzinfo is None:
            self.start_time = self.start_time.replace(tzinfo=timezone.utc)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def start_epoch(self) -> float:
        return to_epoch(self.start_time)

    def time_offsets(self) -> np.ndarray:
        """Seconds of each sample relative to start_time."""
        return np.arange(self.samples.size) / self.sample_rate_hz


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def load_trace(path, expected_rate: Optional[float] = None) -> SeismicTrace:
    """Load a trace CSV.

    Header lines begin with ``#`` and carry ``sample_rate_hz=<real>`` and
    ``start_time=<ISO-8601 UTC>`` (plus an optional ``band=<token>``), then
    one sample value per line.
    """
    header: dict[str, str] = {}
    data_lines: list[str] = []
    try:
        with open(path, "r", encoding="ascii") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line.lstrip("#").strip()
                    key, sep, value = body.partition("=")
                    if sep:
                        header[key.strip()] = value.strip()
                else:
                    data_lines.append(line)
    except OSError as exc:
        raise TraceFormatError(f"cannot read trace file {path}: {exc}") from exc

    if "sample_rate_hz" not in header:
        raise TraceFormatError(f"{path}: missing sample_rate_hz header")
    if "start_time" not in header:
        raise TraceFormatError(f"{path}: missing start_time header")
    try:
        rate = float(header["sample_rate_hz"])
    except ValueError as exc:
        raise TraceFormatError(f"{path}: unparsable sample_rate_hz") from exc
    start = parse_utc(header["start_time"])
    band = BandSpec.parse(header["band"]) if "band" in header else BandSpec.raw()

    try:
        samples = np.array([float(v) for v in data_lines], dtype=float)
    except ValueError as exc:
        raise TraceFormatError(f"{path}: unparsable sample value") from exc
    if samples.size and not np.isfinite(samples).all():
        raise TraceDataError(f"{path}: non-finite sample value")
    if expected_rate is not None and not math.isclose(rate, expected_rate, rel_tol=1e-9):
        raise TraceDataError(
            f"{path}: sample rate {rate:g} does not match expected {expected_rate:g}")
    return SeismicTrace(samples, rate, start, band)


def write_trace(trace: SeismicTrace, path) -> None:
    """Write a trace CSV.  Sample values are emitted with 9 significant digits."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# sample_rate_hz={trace.sample_rate_hz:.9g}\n")
        fh.write(f"# start_time={format_utc(trace.start_time)}\n")
        fh.write(f"# band={trace.band.token}\n")
        np.savetxt(fh, trace.samples, fmt="%.9g")


def bandpass(trace: SeismicTrace, band: BandSpec) -> SeismicTrace:
    """Zero-phase Butterworth filtering into the requested band.

    A 4th-order filter is applied forward then backward (no group delay, so
    event timing is preserved), with reflect padding of three times the
    realized filter order to suppress startup transients.
    """
    if band.kind == "raw":
        return replace(trace, band=band)
    band.validate_for_rate(trace.sample_rate_hz)
    if band.kind == "bandpass":
        sos = _signal.butter(FILTER_ORDER, [band.lo_hz, band.hi_hz], btype="bandpass",
                             fs=trace.sample_rate_hz, output="sos")
        npoles = 2 * FILTER_ORDER
    else:
        sos = _signal.butter(FILTER_ORDER, band.lo_hz, btype="highpass",
                             fs=trace.sample_rate_hz, output="sos")
        npoles = FILTER_ORDER
    padlen = min(3 * npoles, trace.samples.size - 1)
    filtered = _signal.sosfiltfilt(sos, trace.samples, padtype="even", padlen=padlen)
    return replace(trace, samples=filtered, band=band)


def decimate(trace: SeismicTrace, k: int) -> SeismicTrace:
    """Keep every k-th sample and divide the rate by k.

    Display/plumbing only; never applied before envelope or feature
    computation (plain subsampling, no anti-alias filter).
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ParameterError(f"decimation factor must be a positive integer, got {k!r}")
    if k == 1:
        return replace(trace)
    return replace(trace, samples=trace.samples[::k].copy(),
                   sample_rate_hz=trace.sample_rate_hz / k)
