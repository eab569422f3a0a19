"""Seeded synthetic monitoring scenarios with ground-truth phase labels.

Statistical phenomenology only: white noise whose amplitude program rises
through crisis, swarm, lull and eruption phases (integer sensor counts), plus
a direct index-level generator that grafts an exact GPD tail onto a Gaussian
bulk for threshold-selection experiments.

All randomness comes from numpy's PCG64 generator seeded explicitly, so every
scenario is bit-reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from .envelope import EnvelopeIndexSeries
from .errors import ParameterError
from .evt import sample_gpd
from .trace import BandSpec, SeismicTrace, bandpass, format_utc

PHASES = ("background", "crisis", "swarm", "lull", "eruption")

_DEFAULT_START = datetime(2010, 1, 1, tzinfo=timezone.utc)


@dataclass
class ScenarioSpec:
    """Timing and amplitude program of one synthetic monitoring scenario.

    Amplitudes are decibel gains over the background; the precursor gains
    (crisis, swarm, lull) scale with ``link_strength`` so the covariate link
    can be switched off, while the eruption gain does not.  The eruption
    amplitude ramps from the lull level to its full gain over
    ``eruption_ramp_frac`` of the eruption span (0 = instantaneous tremor
    onset), then holds.
    """

    duration_s: float = 1800.0
    sample_rate_hz: float = 40.0
    background_db: float = 40.0
    crisis_start_s: float = 900.0
    swarm_start_s: float = 1020.0
    swarm_end_s: float = 1200.0
    eruption_onset_s: float = 1320.0
    link_strength: float = 1.0
    seed: int = 0
    crisis_gain_db: float = 10.0
    swarm_gain_db: float = 18.0
    lull_gain_db: float = 6.0
    eruption_gain_db: float = 30.0
    eruption_settle_db: Optional[float] = None
    eruption_plateau_s: float = 0.0
    ramp_s: float = 20.0
    start_time: datetime = _DEFAULT_START

    def validate(self) -> None:
        if not (self.duration_s > 0 and self.sample_rate_hz > 0):
            raise ParameterError("duration and sample rate must be positive")
        order = (self.crisis_start_s, self.swarm_start_s, self.swarm_end_s,
                 self.eruption_onset_s)
        if not (order[0] <= order[1] < order[2] <= order[3]):
            raise ParameterError(
                f"phase times must satisfy crisis <= swarm_start < swarm_end <= eruption, got {order}")

    @classmethod
    def quiet(cls, duration_s: float = 1800.0, sample_rate_hz: float = 40.0,
              background_db: float = 40.0, seed: int = 0) -> "ScenarioSpec":
        """A scenario with no events: flat amplitude program throughout.

        The phase timestamps all sit at/after the end of the record, so every
        sample is labelled background.
        """
        return cls(duration_s=duration_s, sample_rate_hz=sample_rate_hz,
                   background_db=background_db, crisis_start_s=duration_s,
                   swarm_start_s=duration_s, swarm_end_s=duration_s + 1.0,
                   eruption_onset_s=duration_s + 1.0, link_strength=0.0,
                   eruption_gain_db=0.0, seed=seed)


def _phase_labels(spec: ScenarioSpec, t: np.ndarray) -> np.ndarray:
    labels = np.full(t.size, "background", dtype=object)
    labels[(t >= spec.crisis_start_s) & (t < spec.swarm_start_s)] = "crisis"
    labels[(t >= spec.swarm_start_s) & (t < spec.swarm_end_s)] = "swarm"
    labels[(t >= spec.swarm_end_s) & (t < spec.eruption_onset_s)] = "lull"
    labels[t >= spec.eruption_onset_s] = "eruption"
    return labels.astype(str)


def generate(spec: ScenarioSpec,
             bands: Sequence[BandSpec] = ()) -> tuple[dict[str, SeismicTrace], np.ndarray]:
    """Generate one scenario: band traces plus a per-sample phase label series.

    The returned mapping always contains the raw trace under key ``"raw"``;
    each requested band adds its filtered version.  Samples are integer
    counts, so written trace CSVs round-trip exactly.
    """
    spec.validate()
    rate = spec.sample_rate_hz
    n = int(round(spec.duration_s * rate))
    t = np.arange(n) / rate
    labels = _phase_labels(spec, t)

    link = spec.link_strength
    crisis = spec.crisis_gain_db * link
    swarm = spec.swarm_gain_db * link
    lull = spec.lull_gain_db * link
    ramp = spec.ramp_s
    settle = (spec.eruption_gain_db if spec.eruption_settle_db is None
              else spec.eruption_settle_db)
    # the swarm ramps linearly from the crisis level to its full gain
    # (accelerating precursor), the eruption bursts to its peak and decays
    breaks = [(0.0, 0.0), (spec.crisis_start_s, 0.0),
              (spec.crisis_start_s + ramp, crisis),
              (spec.swarm_start_s, crisis),
              (spec.swarm_end_s, swarm), (spec.swarm_end_s + ramp, lull),
              (spec.eruption_onset_s, lull),
              (spec.eruption_onset_s + ramp, spec.eruption_gain_db),
              (spec.eruption_onset_s + ramp + spec.eruption_plateau_s,
               spec.eruption_gain_db),
              (spec.duration_s, settle)]
    xs, ys = [], []
    for x, yv in breaks:  # np.interp needs strictly increasing knots
        if xs and x <= xs[-1]:
            x = xs[-1] + 1e-9
        xs.append(x)
        ys.append(yv)
    gain_db = np.interp(t, xs, ys)
    amplitude = 10.0 ** ((spec.background_db + gain_db) / 20.0)

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    samples = np.rint(amplitude * rng.standard_normal(n))
    raw = SeismicTrace(samples, rate, spec.start_time, BandSpec.raw())
    traces = {"raw": raw}
    for band in bands:
        if band.kind == "raw":
            continue
        traces[band.token] = bandpass(raw, band)
    return traces, labels


def write_truth_csv(spec: ScenarioSpec, labels: np.ndarray, path) -> None:
    """Ground-truth export: ``timestamp,phase`` per sample."""
    from .trace import to_epoch

    start = to_epoch(spec.start_time)
    rate = spec.sample_rate_hz
    with open(path, "w", encoding="ascii") as fh:
        fh.write("timestamp,phase\n")
        for i, lab in enumerate(labels):
            fh.write(f"{format_utc(start + i / rate)},{lab}\n")


def grafted_index(n: int, *, bulk_mean_db: float = 50.0, bulk_sd_db: float = 8.0,
                  tail_threshold_db: float = 70.0, tail_prob: float = 0.05,
                  tail_count: Optional[int] = None, tail_xi: float = -0.1,
                  tail_sigma: float = 4.0, seed: Optional[int] = 0,
                  cadence_s: float = 10.0,
                  start_time: datetime = _DEFAULT_START) -> EnvelopeIndexSeries:
    """Index series with an exact GPD tail grafted above a known threshold.

    With probability ``tail_prob`` a value is ``tail_threshold_db`` plus a
    GPD(tail_xi, tail_sigma) draw; otherwise it comes from the Gaussian bulk
    conditioned below the threshold.  Excesses above the threshold are
    therefore exactly GPD, while lower thresholds see bulk contamination —
    the construction a goodness-of-fit threshold scan is meant to detect.
    ``tail_count`` pins the number of tail values exactly (positions drawn at
    random) instead of Bernoulli mixing.
    """
    if n < 2:
        raise ParameterError("grafted index needs at least 2 values")
    if not (0.0 < tail_prob < 1.0):
        raise ParameterError(f"tail probability must be in (0, 1), got {tail_prob}")
    rng = np.random.Generator(np.random.PCG64(seed))
    if tail_count is not None:
        if not 0 < tail_count < n:
            raise ParameterError(f"tail_count must be in (0, {n}), got {tail_count}")
        is_tail = np.zeros(n, dtype=bool)
        is_tail[rng.permutation(n)[:tail_count]] = True
    else:
        is_tail = rng.random(n) < tail_prob
    values = np.empty(n)
    n_bulk = int((~is_tail).sum())
    bulk = bulk_mean_db + bulk_sd_db * rng.standard_normal(n_bulk)
    # resample the (rare) bulk draws that stray above the graft point
    for _ in range(100):
        bad = bulk >= tail_threshold_db
        if not bad.any():
            break
        bulk[bad] = bulk_mean_db + bulk_sd_db * rng.standard_normal(int(bad.sum()))
    values[~is_tail] = bulk
    values[is_tail] = tail_threshold_db + sample_gpd(rng, int(is_tail.sum()),
                                                     tail_xi, tail_sigma)
    return EnvelopeIndexSeries.from_index(values, start_time, 1.0 / cadence_s)
