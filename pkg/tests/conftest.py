"""Shared fixtures: a small synthetic monitoring scenario bed and one trained pipeline.

The scenario has a crisis, an accelerating swarm that runs into the eruption
onset, and a tremor burst that decays; training events differ in eruption
strength so the lowest-threshold rule across events is exercised the way it
is meant to be.
"""

import logging

import numpy as np
import pytest

from evtcast.forecast import ForecastConfig, train
from evtcast.synth import ScenarioSpec, generate
from evtcast.trace import BandSpec

logging.getLogger("evtcast").setLevel(logging.WARNING)

SCENARIO_BANDS = (BandSpec.bandpass(0.5, 2.0), BandSpec.bandpass(2.0, 8.0),
                  BandSpec.highpass(0.2))
TRAIN_PEAKS = (48.0, 56.0, 64.0)
TEST_PEAKS = (54.0, 58.0, 62.0, 66.0)
CRISIS_START = 1560.0
ERUPTION_ONSET = 1920.0


def scenario_config() -> ForecastConfig:
    return ForecastConfig(
        horizon_s=240.0, window_s=240.0, cadence_s=10.0,
        bands=SCENARIO_BANDS, index_band=BandSpec.bandpass(2.0, 8.0),
        feature_set=("energy", "mean", "sd", "max", "roa", "kurtosis", "ratio_mom"),
        domains=("temporal", "frequency"), sources=("signal", "envelope"))


def scenario_spec(seed: int, peak_db: float = 56.0) -> ScenarioSpec:
    return ScenarioSpec(duration_s=2400.0, sample_rate_hz=25.0, background_db=40.0,
                        crisis_start_s=CRISIS_START, swarm_start_s=1680.0,
                        swarm_end_s=ERUPTION_ONSET, eruption_onset_s=ERUPTION_ONSET,
                        crisis_gain_db=4.0, swarm_gain_db=30.0, lull_gain_db=30.0,
                        eruption_gain_db=peak_db, eruption_settle_db=16.0,
                        eruption_plateau_s=240.0, seed=seed)


def scenario_trace(seed: int, peak_db: float = 56.0):
    return generate(scenario_spec(seed, peak_db))[0]["raw"]


@pytest.fixture(scope="session")
def pipeline():
    """One pipeline trained on three heterogeneous events (seeds 1-3)."""
    events = [scenario_trace(s, pk) for s, pk in zip((1, 2, 3), TRAIN_PEAKS)]
    return train(events, scenario_config(), n_boot=199, seed=42)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
