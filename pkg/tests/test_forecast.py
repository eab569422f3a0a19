"""Dataset assembly, training across events, forecasting and return levels."""

import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from conftest import scenario_config, scenario_trace
from evtcast.envelope import EnvelopeIndexSeries
from evtcast.errors import AlignmentError, ConfigError, ParameterError
from evtcast.evt import gpd_sf
from evtcast.forecast import (FittedPipeline, ForecastConfig, build_dataset, forecast,
                              load_pipeline, return_level, save_pipeline, train,
                              write_forecast_csv)
from evtcast.preprocess import CovariateMatrix, TransformSpec, apply_transform
from evtcast.regress import FitDiagnostics, GpdModel, LogisticModel
from evtcast.trace import BandSpec

UTC0 = datetime(2010, 1, 2, tzinfo=timezone.utc)
EPOCH0 = (UTC0 - datetime(1970, 1, 1, tzinfo=timezone.utc)).total_seconds()


def index_series(values, rate=1.0, start=UTC0):
    return EnvelopeIndexSeries.from_index(np.asarray(values, dtype=float), start, rate)


def covariates(timestamps, name="x", values=None):
    timestamps = np.asarray(timestamps, dtype=float)
    if values is None:
        values = np.zeros_like(timestamps)
    return CovariateMatrix(timestamps, [name], np.asarray(values, dtype=float)[:, None])


def simple_config(**kw):
    base = dict(horizon_s=3600.0, window_s=3600.0, cadence_s=10.0,
                bands=(BandSpec.bandpass(1.0, 5.0),),
                index_band=BandSpec.bandpass(1.0, 5.0))
    base.update(kw)
    return ForecastConfig(**base)


class TestBuildDataset:
    def test_two_hours_gives_361_rows(self):
        # 2 h of index at 1 Hz; covariate rows every 10 s; horizon 1 h
        index = index_series(50.0 + np.zeros(7201))
        X = covariates(EPOCH0 + np.arange(0.0, 7201.0, 10.0))
        ds, Xa = build_dataset(index, X, 60.0, simple_config())
        assert len(ds) == 361
        assert Xa.n_rows == 361
        assert ds.timestamps[0] == EPOCH0
        assert ds.timestamps[-1] == EPOCH0 + 3600.0
        assert ds.lag_seconds == 3600.0

    def test_zero_horizon_forbidden(self):
        with pytest.raises(ConfigError):
            ForecastConfig(horizon_s=0.0).validate()
        index = index_series(np.zeros(100))
        X = covariates(EPOCH0 + np.arange(0.0, 100.0, 10.0))
        with pytest.raises(ConfigError):
            build_dataset(index, X, 60.0, simple_config(horizon_s=0.0))

    def test_clock_shift_invariance(self):
        values = 50.0 + np.arange(7201.0) % 7.0
        X_ts = np.arange(0.0, 7201.0, 10.0)
        a, _ = build_dataset(index_series(values), covariates(EPOCH0 + X_ts), 53.0,
                             simple_config())
        delta = 86400.0
        b, _ = build_dataset(index_series(values, start=UTC0 + timedelta(days=1)),
                             covariates(EPOCH0 + delta + X_ts), 53.0, simple_config())
        assert np.array_equal(a.indicators, b.indicators)
        assert np.allclose(b.timestamps - a.timestamps, delta)

    def test_empty_intersection(self):
        index = index_series(np.zeros(100))
        X = covariates(EPOCH0 + np.array([1e6, 2e6]))
        with pytest.raises(AlignmentError):
            build_dataset(index, X, 60.0, simple_config())

    def test_responses_use_target_time_point_value(self):
        values = np.full(7201, 50.0)
        values[3600 + 100] = 90.0  # one spike at t = 3700 s
        index = index_series(values)
        X = covariates(EPOCH0 + np.arange(0.0, 3601.0, 10.0))
        ds, _ = build_dataset(index, X, 80.0, simple_config())
        hits = np.nonzero(ds.indicators)[0]
        assert hits.tolist() == [10]  # issue time 100 s -> target 3700 s
        assert ds.excess_values.tolist() == [10.0]


class TestEngineeredCounts:
    def test_multi_event_counts_match_construction(self):
        # three events engineered to give 282/1033/423 exceedances of 85 dB
        rng = np.random.default_rng(80)
        counts = (282, 1033, 423)
        datasets = []
        for k, count in enumerate(counts):
            n = 4000
            values = np.full(n, 60.0)
            hot = rng.choice(np.arange(400, n), size=count, replace=False)
            values[hot] = 90.0
            index = index_series(values, rate=0.1,
                                 start=UTC0 + timedelta(days=10 * k))
            start = index.timestamps[0]
            X = covariates(start + np.arange(0.0, (n - 360) * 10.0, 10.0))
            config = simple_config(horizon_s=3600.0, window_s=3600.0)
            ds, _ = build_dataset(index, X, 85.0, config)
            datasets.append(ds)
        got = tuple(ds.n_exceed for ds in datasets)
        # targets cover index positions 360..n-1; hot samples were placed there
        assert got == counts


class TestTrain:
    def test_threshold_is_lowest_across_events(self, pipeline):
        assert pipeline.threshold_db == min(pipeline.per_event_thresholds)
        assert len(pipeline.per_event_thresholds) == 3

    def test_training_determinism(self):
        events = [scenario_trace(7, 52.0)]
        config = scenario_config()
        a = train(events, config, n_boot=99, seed=5)
        b = train(events, config, n_boot=99, seed=5)
        assert a.threshold_db == b.threshold_db
        assert a.logistic.intercept == b.logistic.intercept
        assert a.logistic.coefficients == b.logistic.coefficients
        assert a.gpd.coefficients == b.gpd.coefficients

    def test_needs_events(self):
        with pytest.raises(ParameterError):
            train([], scenario_config())


class TestForecast:
    def test_tail_at_zero_equals_phi(self, pipeline):
        fs = forecast(pipeline, scenario_trace(101, 58.0), z_list=(0.0, 2.0))
        assert np.array_equal(fs.tails[0.0], fs.phi)

    def test_tail_nonincreasing_and_bounded(self, pipeline):
        fs = forecast(pipeline, scenario_trace(102, 58.0), z_list=(0.0, 1.0, 3.0, 8.0))
        zs = sorted(fs.tails)
        for lo, hi in zip(zs, zs[1:]):
            assert (fs.tails[hi] <= fs.tails[lo] + 1e-15).all()
        for z in zs:
            assert (fs.tails[z] <= fs.phi + 1e-15).all()

    def test_tail_beyond_endpoint_is_zero(self, pipeline):
        if pipeline.xi_fixed >= 0:
            pytest.skip("finite endpoint requires a negative shape")
        fs = forecast(pipeline, scenario_trace(103, 58.0), z_list=(1e6,))
        assert np.allclose(fs.tails[1e6], 0.0)

    def test_negative_tail_level_rejected(self, pipeline):
        with pytest.raises(ParameterError):
            forecast(pipeline, scenario_trace(103, 58.0), z_list=(-1.0,))

    def test_streaming_grid_alignment(self, pipeline):
        # ticks of a prefix chunk form a subset of the whole trace's ticks on
        # the same epoch-anchored grid
        whole = scenario_trace(104, 58.0)
        n_half = len(whole) // 2
        from dataclasses import replace
        prefix = replace(whole, samples=whole.samples[:n_half].copy())
        fs_whole = forecast(pipeline, whole)
        fs_prefix = forecast(pipeline, prefix)
        assert set(np.round(fs_prefix.issue_times, 6)) <= set(
            np.round(fs_whole.issue_times, 6))


def toy_pipeline(phi=0.5, xi=-0.125, nu=2.0, u=85.0):
    logistic = LogisticModel(np.log(phi / (1 - phi)), {}, None,
                             FitDiagnostics(0, 0, 0, True))
    gpd = GpdModel(xi, np.log(nu), {}, None, FitDiagnostics(0, 0, 0, True))
    return FittedPipeline(config=ForecastConfig(), threshold_db=u, lag_seconds=3600.0,
                          transform=TransformSpec({}), logistic=logistic, gpd=gpd)


class TestReturnLevel:
    def test_boundary_returns_threshold(self):
        pipe = toy_pipeline()
        assert return_level(pipe, {}, 0.5) == pytest.approx(85.0, abs=1e-12)

    def test_closed_form_value(self):
        # phi=0.5, xi=-0.125, nu=2, p=0.25: z = 16*(1 - 0.5^0.125)
        pipe = toy_pipeline()
        expected_z = 16.0 * (1.0 - 0.5 ** 0.125)
        assert return_level(pipe, {}, 0.25) == pytest.approx(85.0 + expected_z, abs=1e-4)
        assert expected_z == pytest.approx(1.3279357, abs=1e-7)

    def test_root_finding_oracle(self):
        # invert tail(z) = phi*S(z) numerically and compare
        from scipy import optimize
        pipe = toy_pipeline()
        p = 0.25

        def tail_minus_p(z):
            return 0.5 * float(gpd_sf(z, -0.125, 2.0)) - p

        z_root = optimize.brentq(tail_minus_p, 0.0, 15.9, xtol=1e-12)
        assert return_level(pipe, {}, p) == pytest.approx(85.0 + z_root, abs=1e-8)

    def test_monotone(self):
        pipe = toy_pipeline()
        r1 = return_level(pipe, {}, 0.1)
        r2 = return_level(pipe, {}, 0.3)
        assert r1 > r2

    def test_above_phi_rejected(self):
        pipe = toy_pipeline()
        with pytest.raises(ParameterError):
            return_level(pipe, {}, 0.7)

    def test_mutual_inverse_with_tail(self):
        pipe = toy_pipeline()
        for p in (0.05, 0.2, 0.4):
            y = return_level(pipe, {}, p)
            z = y - pipe.threshold_db
            tail = 0.5 * float(gpd_sf(z, -0.125, 2.0))
            assert tail == pytest.approx(p, abs=1e-8)


class TestModelFile:
    def test_round_trip_reproduces_predictions(self, pipeline, tmp_path):
        path = tmp_path / "model.json"
        save_pipeline(pipeline, path)
        loaded = load_pipeline(path)
        trace = scenario_trace(105, 58.0)
        a = forecast(pipeline, trace, z_list=(1.0,))
        b = forecast(loaded, trace, z_list=(1.0,))
        assert np.array_equal(a.phi, b.phi)
        assert np.array_equal(a.nu, b.nu)
        assert np.array_equal(a.tails[1.0], b.tails[1.0])

    def test_schema_version_checked(self, pipeline, tmp_path):
        from evtcast.errors import ModelFileError
        path = tmp_path / "model.json"
        save_pipeline(pipeline, path)
        doc = json.loads(path.read_text())
        doc["schema_version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFileError):
            load_pipeline(path)

    def test_forecast_csv_headers(self, pipeline, tmp_path):
        fs = forecast(pipeline, scenario_trace(106, 58.0), z_list=(0.0, 2.5))
        path = tmp_path / "forecast.csv"
        write_forecast_csv(fs, path)
        header = path.read_text().splitlines()[0]
        assert header == "issue_time,target_time,phi,nu,tail_0,tail_2.5"
