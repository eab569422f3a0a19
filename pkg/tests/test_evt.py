"""Constant GPD fitting, bootstrap GoF tests and threshold selection."""

from datetime import datetime, timezone

import numpy as np
import pytest

from evtcast.envelope import EnvelopeIndexSeries
from evtcast.errors import (FitError, ParameterError, SampleSizeError, SelectionError)
from evtcast.evt import (ExceedanceDataset, concat_datasets, exceedances,
                         fit_gpd_constant, gof_pvalues, gpd_loglik, gpd_score, gpd_sf,
                         multi_event_threshold, sample_gpd, threshold_scan,
                         write_scan_csv)
from evtcast.synth import grafted_index

UTC0 = datetime(2010, 1, 2, tzinfo=timezone.utc)


def index_from(values, cadence_s=10.0):
    return EnvelopeIndexSeries.from_index(np.asarray(values, dtype=float), UTC0,
                                          1.0 / cadence_s)


class TestSampler:
    def test_sampler_matches_survival_function(self):
        # empirical survival of the inverse-CDF sampler vs the analytic one
        rng = np.random.default_rng(40)
        xi, sigma = -0.125, 2.0
        z = sample_gpd(rng, 50_000, xi, sigma)
        for q in (0.5, 1.0, 2.0, 5.0, 10.0):
            emp = (z > q).mean()
            assert emp == pytest.approx(float(gpd_sf(q, xi, sigma)), abs=0.01)


class TestFitGpdConstant:
    def test_exponential_data(self):
        rng = np.random.default_rng(41)
        z = rng.exponential(2.0, size=5000)
        fit = fit_gpd_constant(z)
        assert abs(fit.xi - 0.0) < 3 * fit.se_xi
        assert abs(fit.sigma - 2.0) < 3 * fit.se_sigma

    def test_negative_shape_recovery(self):
        rng = np.random.default_rng(42)
        z = sample_gpd(rng, 5000, -0.125, 2.0)
        fit = fit_gpd_constant(z)
        assert abs(fit.xi - (-0.125)) < 3 * fit.se_xi
        assert abs(fit.sigma - 2.0) < 3 * fit.se_sigma

    def test_degenerate_excesses(self):
        with pytest.raises(FitError):
            fit_gpd_constant(np.full(50, 1.5))

    def test_sample_size(self):
        with pytest.raises(SampleSizeError):
            fit_gpd_constant(np.arange(1.0, 9.0))

    def test_optimum_dominates_perturbations(self):
        rng = np.random.default_rng(43)
        z = sample_gpd(rng, 2000, -0.2, 1.5)
        fit = fit_gpd_constant(z)
        best = gpd_loglik(z, fit.xi, fit.sigma)
        for dxi in (-0.01, 0.01):
            for fsig in (0.99, 1.01):
                assert best >= gpd_loglik(z, fit.xi + dxi, fit.sigma * fsig)

    def test_score_small_at_optimum(self):
        rng = np.random.default_rng(44)
        z = sample_gpd(rng, 3000, -0.1, 3.0)
        fit = fit_gpd_constant(z)
        assert np.linalg.norm(gpd_score(z, fit.xi, fit.sigma)) < 1e-4 * z.size

    def test_analytic_score_matches_finite_differences(self):
        rng = np.random.default_rng(45)
        z = sample_gpd(rng, 500, -0.15, 2.0)
        h = 1e-6
        for xi, sigma in ((-0.3, 1.5), (-0.05, 2.5), (0.2, 1.0), (0.0, 2.0)):
            s = gpd_score(z, xi, sigma)
            fd_xi = (gpd_loglik(z, xi + h, sigma) - gpd_loglik(z, xi - h, sigma)) / (2 * h)
            fd_sig = (gpd_loglik(z, xi, sigma + h) - gpd_loglik(z, xi, sigma - h)) / (2 * h)
            assert s[0] == pytest.approx(fd_xi, rel=1e-5, abs=1e-4)
            assert s[1] == pytest.approx(fd_sig, rel=1e-5, abs=1e-4)


class TestGofPvalues:
    def test_null_data_passes(self):
        rng = np.random.default_rng(46)
        z = sample_gpd(rng, 500, -0.125, 2.0)
        fit = fit_gpd_constant(z)
        pa, pc = gof_pvalues(z, fit, n_boot=199, seed=0)
        assert pa >= 0.10 and pc >= 0.10

    def test_power_against_gross_misfit(self):
        # uniform mixture with a point mass is nothing like a GPD
        rng = np.random.default_rng(47)
        z = np.concatenate([rng.uniform(0.0, 1.0, 250), np.full(250, 2.0)])
        fit = fit_gpd_constant(z + 1e-6 * rng.random(500))
        pa, pc = gof_pvalues(z, fit, n_boot=999, seed=1)
        assert pa < 0.01 and pc < 0.01

    def test_zero_bootstrap_rejected(self):
        rng = np.random.default_rng(48)
        z = sample_gpd(rng, 100, -0.1, 1.0)
        fit = fit_gpd_constant(z)
        with pytest.raises(ParameterError):
            gof_pvalues(z, fit, n_boot=0)


class TestThresholdScan:
    def test_pure_gpd_chooses_lowest_feasible(self):
        rng = np.random.default_rng(49)
        values = 50.0 + sample_gpd(rng, 4000, -0.05, 8.0)
        index = index_from(values)
        grid = np.arange(52.0, 70.0)
        sel = threshold_scan(index, grid=grid, n_boot=199, seed=5)
        feasible = grid[np.array([(values > u).sum() for u in grid]) >= 30]
        assert sel.chosen == feasible[0]

    def test_grafted_tail_localized(self):
        index = grafted_index(3000, bulk_sd_db=3.0, tail_count=34, tail_sigma=4.0, seed=12)
        sel = threshold_scan(index, n_boot=199, seed=12)
        assert abs(sel.chosen - 70.0) <= 1.0
        assert min(sel.p_ad[sel.grid == sel.chosen][0],
                   sel.p_cvm[sel.grid == sel.chosen][0]) >= 0.10

    def test_all_points_short(self):
        rng = np.random.default_rng(50)
        index = index_from(50.0 + rng.standard_normal(100))
        with pytest.raises(SelectionError):
            threshold_scan(index, grid=np.array([54.0, 55.0]), n_boot=99, seed=0)

    def test_chosen_nondecreasing_in_alpha(self):
        # a stricter level can only stop the downward scan earlier
        index = grafted_index(3000, bulk_sd_db=3.0, tail_count=34, tail_sigma=4.0, seed=13)
        lo = threshold_scan(index, alpha=0.02, n_boot=199, seed=3, full=True)
        hi = threshold_scan(index, alpha=0.3, n_boot=199, seed=3, full=True)
        assert lo.chosen <= hi.chosen

    def test_scan_csv(self, tmp_path):
        index = grafted_index(3000, bulk_sd_db=3.0, tail_count=34, tail_sigma=4.0, seed=14)
        sel = threshold_scan(index, n_boot=199, seed=4)
        path = tmp_path / "scan.csv"
        write_scan_csv(sel, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "threshold,n_exceed,p_ad,p_cvm,chosen_flag"
        flags = [line.split(",")[-1] for line in lines[1:]]
        assert flags.count("1") == 1
        chosen_row = lines[1 + int(np.nonzero(sel.grid == sel.chosen)[0][0])]
        assert chosen_row.endswith(",1")


class TestMultiEventRule:
    def test_three_events(self):
        assert multi_event_threshold([89.0, 96.0, 85.0]) == 85.0

    def test_single_event(self):
        assert multi_event_threshold([85.0]) == 85.0

    def test_duplicates(self):
        assert multi_event_threshold([70.5, 70.5]) == 70.5

    def test_empty(self):
        with pytest.raises(ParameterError):
            multi_event_threshold([])


class TestExceedances:
    def test_direct_definition(self):
        ds = exceedances(index_from([84.0, 86.0, 85.0]), 85.0)
        assert np.array_equal(ds.indicators, [0, 1, 0])
        assert ds.excess_values.tolist() == [1.0]
        assert np.isnan(ds.excesses[0]) and np.isnan(ds.excesses[2])

    def test_threshold_above_max(self):
        ds = exceedances(index_from([84.0, 86.0, 85.0]), 90.0)
        assert ds.n_exceed == 0

    def test_boundary_is_strict(self):
        ds = exceedances(index_from([85.0, 85.0]), 85.0)
        assert ds.n_exceed == 0

    def test_concat_counts(self):
        a = exceedances(index_from([84.0, 86.0]), 85.0)
        b = exceedances(index_from([87.0, 88.0]), 85.0)
        pooled = concat_datasets([a, b])
        assert pooled.n_exceed == 3
        assert len(pooled) == 4
