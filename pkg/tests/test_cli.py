"""Command-line workflows: formats, exit codes, determinism."""

import json
import os

import numpy as np
import pytest

from conftest import TRAIN_PEAKS, scenario_config, scenario_trace
from evtcast.cli import main
from evtcast.envelope import load_envelope_csv
from evtcast.evt import threshold_scan
from evtcast.forecast import forecast, load_pipeline
from evtcast.trace import load_trace, write_trace

TRAIN_FLAGS = ["--bands", "0.5-2Hz,2-8Hz,hp0.2Hz", "--index-band", "2-8Hz",
               "--window", "240", "--horizon", "240", "--cadence", "10",
               "--features", "energy,mean,sd,max,roa,kurtosis,ratio_mom",
               "--domains", "temporal,frequency"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One full CLI workflow: traces -> model -> forecasts -> evaluation."""
    root = tmp_path_factory.mktemp("cli")
    trace_paths = []
    for i, (seed, peak) in enumerate(zip((1, 2, 3), TRAIN_PEAKS)):
        path = root / f"event{i}.csv"
        write_trace(scenario_trace(seed, peak), path)
        trace_paths.append(str(path))
    test_path = root / "test_event.csv"
    write_trace(scenario_trace(100, 58.0), test_path)

    model = root / "model.json"
    rc = main(["train", "--traces", *trace_paths, "--model", str(model),
               "--n-boot", "199", "--seed", "42", *TRAIN_FLAGS])
    assert rc == 0

    forecast_csv = root / "forecast.csv"
    rc = main(["forecast", "--model", str(model), "--trace", str(test_path),
               "--out", str(forecast_csv), "--tail-z", "0,2"])
    assert rc == 0

    eval_dir = root / "report"
    rc = main(["evaluate", "--model", str(model), "--trace", str(test_path),
               "--out-dir", str(eval_dir)])
    assert rc == 0
    return {"root": root, "traces": trace_paths, "test": str(test_path),
            "model": str(model), "forecast": str(forecast_csv),
            "eval": str(eval_dir)}


class TestSynthAndThreshold:
    def test_grafted_threshold_matches_library_oracle(self, tmp_path):
        out = tmp_path / "synth"
        rc = main(["synth", "--out-dir", str(out), "--kind", "grafted-index",
                   "--seed", "12", "--n", "3000"])
        assert rc == 0
        index_csv = out / "index.csv"
        report = tmp_path / "scan.csv"
        rc = main(["threshold", "--envelope", str(index_csv), "--seed", "3",
                   "--n-boot", "199", "--out", str(report)])
        assert rc == 0

        series = load_envelope_csv(index_csv)
        oracle = threshold_scan(series, n_boot=199, seed=3)
        rows = report.read_text().strip().splitlines()[1:]
        chosen_rows = [r for r in rows if r.endswith(",1")]
        assert len(chosen_rows) == 1
        assert float(chosen_rows[0].split(",")[0]) == oracle.chosen

    def test_scenario_files(self, tmp_path):
        out = tmp_path / "scn"
        rc = main(["synth", "--out-dir", str(out), "--seed", "4",
                   "--bands", "1-5Hz", "--duration", "600", "--rate", "25",
                   "--crisis-start", "200", "--swarm-start", "250",
                   "--swarm-end", "350", "--eruption-onset", "400"])
        assert rc == 0
        assert (out / "raw.csv").exists()
        assert (out / "1-5Hz.csv").exists()
        truth = (out / "truth.csv").read_text().splitlines()
        assert truth[0] == "timestamp,phase"
        tr = load_trace(out / "raw.csv")
        assert len(tr) == 600 * 25

    def test_envelope_command(self, tmp_path):
        out = tmp_path / "scn"
        main(["synth", "--out-dir", str(out), "--seed", "5", "--duration", "300",
              "--rate", "25", "--crisis-start", "100", "--swarm-start", "120",
              "--swarm-end", "180", "--eruption-onset", "200"])
        env_csv = tmp_path / "env.csv"
        rc = main(["envelope", "--trace", str(out / "raw.csv"), "--band", "2-8Hz",
                   "--out", str(env_csv)])
        assert rc == 0
        series = load_envelope_csv(env_csv)
        assert len(series) == 300 * 25

    def test_features_command(self, tmp_path):
        out = tmp_path / "scn"
        main(["synth", "--out-dir", str(out), "--seed", "6", "--duration", "300",
              "--rate", "25", "--crisis-start", "100", "--swarm-start", "120",
              "--swarm-end", "180", "--eruption-onset", "200"])
        feat_csv = tmp_path / "features.csv"
        rc = main(["features", "--trace", str(out / "raw.csv"),
                   "--bands", "2-8Hz", "--window", "60", "--cadence", "10",
                   "--features", "energy,mean", "--domains", "temporal",
                   "--sources", "signal", "--out", str(feat_csv)])
        assert rc == 0
        lines = feat_csv.read_text().splitlines()
        assert lines[0] == "timestamp,energy_temporal_signal_2-8Hz,mean_temporal_signal_2-8Hz"
        assert len(lines) == 1 + (300 - 60) // 10 + 1


class TestTrainForecastEvaluate:
    def test_forecast_matches_in_process_pipeline(self, workdir):
        pipeline = load_pipeline(workdir["model"])
        trace = load_trace(workdir["test"])
        fs = forecast(pipeline, trace, z_list=(0.0, 2.0))
        lines = open(workdir["forecast"]).read().strip().splitlines()
        assert len(lines) == len(fs) + 1
        phi_csv = np.array([float(line.split(",")[2]) for line in lines[1:]])
        assert np.array_equal(phi_csv, fs.phi)

    def test_model_file_contents(self, workdir):
        doc = json.loads(open(workdir["model"]).read())
        assert doc["schema_version"] == 1
        assert doc["threshold_db"] == min(doc["per_event_thresholds"])
        assert set(doc["logistic"]["coefficients"]) <= set(doc["transform"])
        assert set(doc["gpd"]["coefficients"]) <= set(doc["transform"])

    def test_evaluate_report_files(self, workdir):
        names = os.listdir(workdir["eval"])
        assert "summary.txt" in names
        assert "acf_pearson.csv" in names
        assert "acf_pearson.png" in names
        assert "forecast_probability.png" in names
        summary = open(os.path.join(workdir["eval"], "summary.txt")).read()
        assert "auc = " in summary
        assert "deviance_p = " in summary

    def test_evaluate_no_figures(self, workdir, tmp_path):
        out = tmp_path / "nofig"
        rc = main(["evaluate", "--model", workdir["model"], "--trace", workdir["test"],
                   "--out-dir", str(out), "--no-figures"])
        assert rc == 0
        assert not any(n.endswith(".png") for n in os.listdir(out))

    def test_evaluate_single_class_exits_2(self, workdir, tmp_path):
        quiet_path = tmp_path / "quiet.csv"
        from evtcast.synth import ScenarioSpec, generate
        spec = ScenarioSpec.quiet(duration_s=2400.0, sample_rate_hz=25.0,
                                  background_db=40.0, seed=9)
        write_trace(generate(spec)[0]["raw"], quiet_path)
        rc = main(["evaluate", "--model", workdir["model"], "--trace", str(quiet_path),
                   "--out-dir", str(tmp_path / "q")])
        assert rc == 2


class TestDeterminism:
    def test_repeat_runs_byte_identical(self, workdir, tmp_path):
        model2 = tmp_path / "model2.json"
        rc = main(["train", "--traces", *workdir["traces"], "--model", str(model2),
                   "--n-boot", "199", "--seed", "42", *TRAIN_FLAGS])
        assert rc == 0
        assert open(model2, "rb").read() == open(workdir["model"], "rb").read()

        out2 = tmp_path / "forecast2.csv"
        rc = main(["forecast", "--model", str(model2), "--trace", workdir["test"],
                   "--out", str(out2), "--tail-z", "0,2"])
        assert rc == 0
        assert open(out2, "rb").read() == open(workdir["forecast"], "rb").read()

    def test_synth_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rc = main(["synth", "--out-dir", str(out), "--kind", "grafted-index",
                       "--seed", "77", "--n", "500"])
            assert rc == 0
        assert (a / "index.csv").read_bytes() == (b / "index.csv").read_bytes()


class TestUsage:
    def test_unknown_flag_suggestion(self, capsys):
        rc = main(["threshold", "--envelope", "x.csv", "--seed", "1",
                   "--out", "y.csv", "--n-bots", "99"])
        assert rc == 1
        err = capsys.readouterr().err
        assert "--n-boot" in err

    def test_missing_seed_is_usage_error(self, tmp_path, capsys):
        rc = main(["synth", "--out-dir", str(tmp_path / "x")])
        assert rc == 1
        assert "--seed" in capsys.readouterr().err

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "evtcast 0.1.0" in out
        assert "schema 1" in out

    def test_missing_model_file_exits_2(self, tmp_path):
        rc = main(["forecast", "--model", str(tmp_path / "nope.json"),
                   "--trace", str(tmp_path / "nope.csv"), "--out",
                   str(tmp_path / "o.csv")])
        assert rc == 2

    def test_config_file_defaults_and_flag_override(self, tmp_path):
        out = tmp_path / "synth"
        ini = tmp_path / "run.ini"
        ini.write_text("[synth]\nkind = grafted-index\nn = 400\nseed = 8\n")
        rc = main(["synth", "--config", str(ini), "--out-dir", str(out)])
        assert rc == 0
        assert sum(1 for _ in open(out / "index.csv")) == 401

        out2 = tmp_path / "synth2"
        rc = main(["synth", "--config", str(ini), "--out-dir", str(out2), "--n", "200"])
        assert rc == 0
        assert sum(1 for _ in open(out2 / "index.csv")) == 201
