"""Transform, analytic signal and decibel index."""

from datetime import datetime, timezone

import numpy as np
import pytest

from evtcast.envelope import (analytic_weights, db_index, dft, envelope, hilbert, idft,
                              load_envelope_csv, write_envelope_csv)
from evtcast.errors import ParameterError
from evtcast.trace import BandSpec, SeismicTrace

UTC0 = datetime(2010, 1, 2, tzinfo=timezone.utc)


def naive_dft(x):
    """O(T^2) oracle: f_t = sum_k x_k exp(-2*pi*i*k*t/T)."""
    x = np.asarray(x, dtype=complex)
    n = x.size
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


class TestDft:
    def test_constant_sequence(self):
        c = 2.75
        out = dft(np.full(16, c))
        expected = np.zeros(16, dtype=complex)
        expected[0] = 16 * c
        assert np.abs(out - expected).max() < 1e-9

    def test_unit_impulse(self):
        x = np.zeros(12)
        x[0] = 1.0
        assert np.abs(dft(x) - 1.0).max() < 1e-12

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal(257)
        assert np.abs(dft(x) - naive_dft(x)).max() < 1e-9

    def test_empty_input(self):
        with pytest.raises(ParameterError):
            dft([])

    def test_round_trip(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(301)
        back = idft(dft(x)) / x.size
        assert np.abs(back - x).max() < 1e-9

    def test_parseval(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal(400)
        lhs = np.sum(np.abs(x) ** 2)
        rhs = np.sum(np.abs(dft(x)) ** 2) / x.size
        assert abs(lhs - rhs) < 1e-9 * lhs


class TestHilbert:
    def test_cosine_gives_sine_quadrature(self):
        n = 512
        t = np.arange(n)
        x = np.cos(2 * np.pi * 5 * t / n)
        h = hilbert(x)
        assert np.abs(h.values.real - x).max() < 1e-9
        assert np.abs(h.values.imag - np.sin(2 * np.pi * 5 * t / n)).max() < 1e-6

    def test_constant_has_no_quadrature(self):
        h = hilbert(np.full(100, 3.0))
        assert np.abs(h.values.imag).max() < 1e-9

    def test_weights(self):
        # positive frequencies doubled, negative zeroed; Nyquist kept at even T
        assert np.array_equal(analytic_weights(6), [1, 2, 2, 1, 0, 0])
        assert np.array_equal(analytic_weights(5), [1, 2, 2, 0, 0])

    def test_weights_sum(self):
        # total weight equals T for any parity (DC + doubled positives)
        for n in (6, 7, 64, 65):
            assert analytic_weights(n).sum() == n


class TestEnvelope:
    def test_tone_amplitude(self):
        rate, amp = 100.0, 3.5
        t = np.arange(4000) / rate
        tr = SeismicTrace(amp * np.cos(2 * np.pi * 5.0 * t), rate, UTC0)
        series = envelope(tr)
        interior = slice(200, -200)
        assert np.abs(series.envelope[interior] - amp).max() < 0.01 * amp

    def test_zero_trace_clamped_at_floor(self):
        tr = SeismicTrace(np.zeros(64), 100.0, UTC0)
        series = envelope(tr)
        assert np.array_equal(series.envelope, np.zeros(64))
        assert np.allclose(series.index_db, -300.0)

    def test_positive_scaling(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(1000)
        c = 7.25
        e1 = envelope(SeismicTrace(x, 50.0, UTC0)).envelope
        e2 = envelope(SeismicTrace(c * x, 50.0, UTC0)).envelope
        assert np.abs(e2 - c * e1).max() < 1e-9 * c * np.abs(e1).max()

    def test_envelope_bounds_rectified_tone(self):
        rate = 100.0
        t = np.arange(2000) / rate
        x = 2.0 * np.cos(2 * np.pi * 4.0 * t)
        series = envelope(SeismicTrace(x, rate, UTC0))
        interior = slice(100, -100)
        eps = 1e-6 * np.abs(x).max()
        assert (series.envelope[interior] >= np.abs(x)[interior] - eps).all()

    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        tr = SeismicTrace(rng.standard_normal(128), 10.0, UTC0, BandSpec.bandpass(1, 4))
        series = envelope(tr)
        path = tmp_path / "env.csv"
        write_envelope_csv(series, path)
        back = load_envelope_csv(path)
        assert np.allclose(back.envelope, series.envelope, rtol=1e-12, atol=0)
        assert np.allclose(back.index_db, series.index_db, rtol=1e-12, atol=0)
        assert abs(back.sample_rate_hz - series.sample_rate_hz) < 1e-6 * series.sample_rate_hz


class TestDbIndex:
    def test_unity(self):
        assert db_index(1.0) == 0.0

    def test_ten(self):
        assert abs(db_index(10.0) - 20.0) < 1e-12

    def test_zero_clamped(self):
        assert db_index(0.0) == -300.0

    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            db_index(-0.5)
