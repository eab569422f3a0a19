"""Command-line front end wiring the library into reproducible batch workflows.

Subcommands: synth, envelope, features, threshold, train, forecast, evaluate.
Parameters come from flags or from an INI config file with one section per
command (flag names match config keys 1:1); flags override the file.  Logs go
to stderr, data only to files.  Exit codes: 0 success, 1 usage error,
2 data/model error.
"""

from __future__ import annotations

import argparse
import configparser
import difflib
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__, evaluate as _evaluate, evt, figures, synth
from .envelope import envelope, load_envelope_csv, write_envelope_csv
from .errors import EvtcastError, MetricUndefinedError, ParameterError
from .features import DOMAINS, FEATURES, SOURCES, feature_matrix
from .forecast import (ForecastConfig, MODEL_SCHEMA_VERSION, band_products, build_dataset,
                       forecast as run_forecast, load_pipeline, save_pipeline, train,
                       write_forecast_csv)
from .preprocess import apply_transform
from .trace import BandSpec, fmt_float, load_trace, write_trace

logger = logging.getLogger("evtcast")

_DEFAULT_BANDS = "0.1-1Hz,1-5Hz,5-15Hz,0.1-20Hz,hp0.01Hz"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, with flag suggestions."""

    all_options: set[str] = set()

    def error(self, message):
        if "unrecognized arguments" in message:
            unknown = [tok for tok in message.split(":", 1)[1].split()
                       if tok.startswith("--")]
            hints = []
            for tok in unknown:
                close = difflib.get_close_matches(tok, sorted(self.all_options), n=1)
                if close:
                    hints.append(f"did you mean {close[0]}?")
            if hints:
                message += " (" + " ".join(hints) + ")"
        raise UsageError(f"{self.prog}: {message}")


def _bands_arg(text: str) -> tuple[BandSpec, ...]:
    return tuple(BandSpec.parse(tok) for tok in text.split(",") if tok.strip())


def _floats_arg(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _names_arg(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def _bool_arg(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def _build_parser():
    parser = _Parser(prog="evtcast", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"evtcast {__version__} (model-file schema {MODEL_SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    parsers = {}

    def cmd(name, help_text):
        p = sub.add_parser(name, help=help_text, prog=f"evtcast {name}")
        p.add_argument("--config", help="INI config file; section name matches the command")
        parsers[name] = p
        return p

    p = cmd("synth", "generate a synthetic scenario or grafted-tail index")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kind", choices=["scenario", "grafted-index"], default="scenario")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bands", type=_bands_arg, default=())
    p.add_argument("--duration", type=float, default=1800.0)
    p.add_argument("--rate", type=float, default=40.0)
    p.add_argument("--background-db", type=float, default=40.0)
    p.add_argument("--crisis-start", type=float, default=900.0)
    p.add_argument("--swarm-start", type=float, default=1020.0)
    p.add_argument("--swarm-end", type=float, default=1200.0)
    p.add_argument("--eruption-onset", type=float, default=1320.0)
    p.add_argument("--link", type=float, default=1.0)
    p.add_argument("--eruption-gain-db", type=float, default=30.0)
    p.add_argument("--quiet-scenario", type=_bool_arg, nargs="?", const=True, default=False)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--bulk-mean", type=float, default=50.0)
    p.add_argument("--bulk-sd", type=float, default=8.0)
    p.add_argument("--tail-threshold", type=float, default=70.0)
    p.add_argument("--tail-prob", type=float, default=0.05)
    p.add_argument("--tail-xi", type=float, default=-0.1)
    p.add_argument("--tail-sigma", type=float, default=4.0)
    p.add_argument("--cadence", type=float, default=10.0)

    p = cmd("envelope", "compute the envelope index of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--band", type=BandSpec.parse, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", default=None)

    p = cmd("features", "compute the covariate feature matrix of a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--bands", type=_bands_arg, default=_bands_arg(_DEFAULT_BANDS))
    p.add_argument("--window", type=float, default=3600.0)
    p.add_argument("--cadence", type=float, default=10.0)
    p.add_argument("--horizon", type=float, default=3600.0)
    p.add_argument("--features", type=_names_arg, default=FEATURES)
    p.add_argument("--domains", type=_names_arg, default=DOMAINS)
    p.add_argument("--sources", type=_names_arg, default=SOURCES)
    p.add_argument("--out", required=True)

    p = cmd("threshold", "EVT threshold selection on an envelope index CSV")
    p.add_argument("--envelope", required=True)
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--n-boot", type=int, default=999)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--min-excesses", type=int, default=evt.MIN_EXCESSES_PER_POINT)
    p.add_argument("--grid-lo", type=float, default=None)
    p.add_argument("--grid-hi", type=float, default=None)
    p.add_argument("--grid-step", type=float, default=1.0)
    p.add_argument("--full-scan", type=_bool_arg, nargs="?", const=True, default=False)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", default=None)

    p = cmd("train", "fit the forecasting pipeline on one or more event traces")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-boot", type=int, default=499)
    p.add_argument("--horizon", type=float, default=3600.0)
    p.add_argument("--window", type=float, default=3600.0)
    p.add_argument("--cadence", type=float, default=10.0)
    p.add_argument("--bands", type=_bands_arg, default=_bands_arg(_DEFAULT_BANDS))
    p.add_argument("--index-band", type=BandSpec.parse, default=BandSpec.parse("1-5Hz"))
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--features", type=_names_arg, default=FEATURES)
    p.add_argument("--domains", type=_names_arg, default=DOMAINS)
    p.add_argument("--sources", type=_names_arg, default=SOURCES)
    p.add_argument("--min-excesses", type=int, default=evt.MIN_EXCESSES_PER_POINT)

    p = cmd("forecast", "emit horizon-ahead forecasts from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tail-z", type=_floats_arg, default=())
    p.add_argument("--figures", default=None)

    p = cmd("evaluate", "evaluate a trained model on an event trace")
    p.add_argument("--model", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--max-lag", type=int, default=50)
    p.add_argument("--sweep", type=_bool_arg, nargs="?", const=True, default=False)
    p.add_argument("--sweep-n-boot", type=int, default=199)
    p.add_argument("--no-figures", type=_bool_arg, nargs="?", const=True, default=False)

    _Parser.all_options = {opt for sp in parsers.values()
                           for a in sp._actions for opt in a.option_strings}
    return parser, parsers


def _apply_config(parsers, command: str, path: str) -> None:
    ini = configparser.ConfigParser(interpolation=None)
    read = ini.read(path)
    if not read:
        raise UsageError(f"config file {path} not found")
    if command not in ini:
        return
    sp = parsers[command]
    by_flag = {}
    for action in sp._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_flag[opt[2:]] = action
    for key, raw in ini[command].items():
        if key == "config":
            continue
        if key not in by_flag:
            raise UsageError(f"unknown config key {key!r} in section [{command}]")
        action = by_flag[key]
        if action.nargs == "+":
            value = raw.split()
        elif action.type is not None:
            value = action.type(raw)
        else:
            value = raw
        sp.set_defaults(**{action.dest: value})


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"evtcast {args.command}: --seed is mandatory (stochastic command)")
    return args.seed


# ---------------------------------------------------------------------------
# command bodies
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> None:
    seed = _require_seed(args)
    os.makedirs(args.out_dir, exist_ok=True)
    if args.kind == "grafted-index":
        series = synth.grafted_index(args.n, bulk_mean_db=args.bulk_mean,
                                     bulk_sd_db=args.bulk_sd,
                                     tail_threshold_db=args.tail_threshold,
                                     tail_prob=args.tail_prob, tail_xi=args.tail_xi,
                                     tail_sigma=args.tail_sigma, seed=seed,
                                     cadence_s=args.cadence)
        out = os.path.join(args.out_dir, "index.csv")
        write_envelope_csv(series, out)
        logger.info("wrote %s (%d values)", out, len(series))
        return
    if args.quiet_scenario:
        spec = synth.ScenarioSpec.quiet(duration_s=args.duration, sample_rate_hz=args.rate,
                                        background_db=args.background_db, seed=seed)
    else:
        spec = synth.ScenarioSpec(duration_s=args.duration, sample_rate_hz=args.rate,
                                  background_db=args.background_db,
                                  crisis_start_s=args.crisis_start,
                                  swarm_start_s=args.swarm_start,
                                  swarm_end_s=args.swarm_end,
                                  eruption_onset_s=args.eruption_onset,
                                  link_strength=args.link,
                                  eruption_gain_db=args.eruption_gain_db, seed=seed)
    traces, labels = synth.generate(spec, args.bands)
    for token, tr in traces.items():
        out = os.path.join(args.out_dir, f"{token}.csv")
        write_trace(tr, out)
        logger.info("wrote %s", out)
    truth = os.path.join(args.out_dir, "truth.csv")
    synth.write_truth_csv(spec, labels, truth)
    logger.info("wrote %s", truth)


def _cmd_envelope(args) -> None:
    trace = load_trace(args.trace)
    if args.band is not None:
        from .trace import bandpass
        trace = bandpass(trace, args.band)
    series = envelope(trace)
    write_envelope_csv(series, args.out)
    logger.info("wrote %s (%d values)", args.out, len(series))
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        out = os.path.join(args.figures, "envelope_index.png")
        figures.save_figure(figures.envelope_index_figure(series), out)
        logger.info("wrote %s", out)


def _cmd_features(args) -> None:
    trace = load_trace(args.trace)
    config = ForecastConfig(horizon_s=args.horizon, window_s=args.window,
                            cadence_s=args.cadence, bands=args.bands,
                            feature_set=args.features, domains=args.domains,
                            sources=args.sources)
    config.validate()
    traces, envs, _ = band_products(trace, config)
    X = feature_matrix(traces, envs, config)
    X.write_csv(args.out)
    logger.info("wrote %s (%d rows x %d columns)", args.out, X.n_rows, len(X.columns))


def _cmd_threshold(args) -> None:
    seed = _require_seed(args)
    series = load_envelope_csv(args.envelope)
    grid = None
    if args.grid_lo is not None and args.grid_hi is not None:
        grid = np.arange(args.grid_lo, args.grid_hi + 1e-9, args.grid_step)
    sel = evt.threshold_scan(series, grid=grid, alpha=args.alpha, n_boot=args.n_boot,
                             seed=seed, min_excesses=args.min_excesses,
                             full=args.full_scan)
    evt.write_scan_csv(sel, args.out)
    logger.info("chosen threshold: %s dB -> %s", fmt_float(sel.chosen), args.out)
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        out = os.path.join(args.figures, "threshold_scan.png")
        figures.save_figure(figures.threshold_scan_figure(sel), out)
        logger.info("wrote %s", out)


def _train_config(args) -> ForecastConfig:
    return ForecastConfig(horizon_s=args.horizon, window_s=args.window,
                          cadence_s=args.cadence, bands=args.bands,
                          index_band=args.index_band, feature_set=args.features,
                          domains=args.domains, sources=args.sources, alpha=args.alpha)


def _cmd_train(args) -> None:
    seed = _require_seed(args)
    config = _train_config(args)
    config.validate()
    traces = [load_trace(path) for path in args.traces]
    pipeline = train(traces, config, n_boot=args.n_boot, seed=seed,
                     min_excesses=args.min_excesses)
    save_pipeline(pipeline, args.model)
    logger.info("threshold %s dB, xi_fixed %s, train AUC %s -> %s",
                fmt_float(pipeline.threshold_db), fmt_float(pipeline.xi_fixed),
                fmt_float(pipeline.train_auc), args.model)


def _cmd_forecast(args) -> None:
    pipeline = load_pipeline(args.model)
    trace = load_trace(args.trace)
    fs = run_forecast(pipeline, trace, args.tail_z)
    write_forecast_csv(fs, args.out)
    logger.info("wrote %s (%d ticks)", args.out, len(fs))
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        out = os.path.join(args.figures, "forecast_probability.png")
        figures.save_figure(figures.forecast_probability_figure(fs), out)
        logger.info("wrote %s", out)


def _write_acf_csv(acf, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("lag,acf,band_halfwidth\n")
        for i in range(acf.lags.size):
            fh.write(f"{int(acf.lags[i])},{fmt_float(acf.values[i])},"
                     f"{fmt_float(acf.halfwidths[i])}\n")


def _cmd_evaluate(args) -> None:
    pipeline = load_pipeline(args.model)
    trace = load_trace(args.trace)
    os.makedirs(args.out_dir, exist_ok=True)

    traces, envs, index = band_products(trace, pipeline.config)
    X_raw = feature_matrix(traces, envs, pipeline.config)
    ds, X_raw = build_dataset(index, X_raw, pipeline.threshold_db, pipeline.config)
    usable = [c for c in X_raw.columns if c in pipeline.transform.per_column]
    Xt = apply_transform(X_raw.subset(usable), pipeline.transform)
    report = _evaluate.evaluate_dataset(pipeline, Xt, ds, max_lag=args.max_lag)

    render = not args.no_figures
    _write_acf_csv(report.acf_pearson, os.path.join(args.out_dir, "acf_pearson.csv"))
    if render:
        figures.save_figure(figures.acf_figure(report.acf_pearson, "Pearson residuals"),
                            os.path.join(args.out_dir, "acf_pearson.png"))
    if report.acf_excess is not None:
        _write_acf_csv(report.acf_excess, os.path.join(args.out_dir, "acf_excess.csv"))
        if render:
            figures.save_figure(figures.acf_figure(report.acf_excess, "excess residuals"),
                                os.path.join(args.out_dir, "acf_excess.png"))
    if report.qq_points is not None:
        with open(os.path.join(args.out_dir, "qq.csv"), "w", encoding="ascii") as fh:
            fh.write("theoretical,empirical\n")
            for a, b in report.qq_points:
                fh.write(f"{fmt_float(a)},{fmt_float(b)}\n")
        if render:
            figures.save_figure(figures.qq_figure(report.qq_points),
                                os.path.join(args.out_dir, "qq.png"))

    sweep_entries = []
    if args.sweep:
        train_fn = _sweep_train_fn(index, X_raw, pipeline.config)
        sweep_entries = _evaluate.threshold_sweep(train_fn, pipeline.threshold_db)
        with open(os.path.join(args.out_dir, "sweep.csv"), "w", encoding="ascii") as fh:
            fh.write("fraction,threshold,auc\n")
            for e in sweep_entries:
                fh.write(f"{fmt_float(e.fraction)},{fmt_float(e.threshold)},"
                         f"{fmt_float(e.auc)}\n")
        if render:
            figures.save_figure(figures.auc_sweep_figure(sweep_entries),
                                os.path.join(args.out_dir, "sweep.png"))

    if render and len(ds):
        fs = run_forecast(pipeline, trace)
        figures.save_figure(figures.forecast_probability_figure(fs),
                            os.path.join(args.out_dir, "forecast_probability.png"))

    summary = os.path.join(args.out_dir, "summary.txt")
    with open(summary, "w", encoding="ascii") as fh:
        fh.write(f"rows = {report.n_rows}\n")
        fh.write(f"exceedances = {report.n_exceed}\n")
        fh.write(f"threshold_db = {fmt_float(report.threshold_db)}\n")
        fh.write(f"auc = {fmt_float(report.auc)}\n")
        fh.write(f"deviance_statistic = {fmt_float(report.deviance.statistic)}\n")
        fh.write(f"deviance_df = {report.deviance.df}\n")
        fh.write(f"deviance_p = {fmt_float(report.deviance.p_value)}\n")
        for e in sweep_entries:
            fh.write(f"auc_at_fraction_{e.fraction:g} = {fmt_float(e.auc)}\n")
    logger.info("wrote %s (AUC %s)", summary, fmt_float(report.auc))


def _sweep_train_fn(index, X_raw, config):
    """Retrain the exceedance side at an arbitrary threshold on the given data."""
    from .preprocess import fit_standardizer, prune_collinear
    from .regress import stepwise_aic

    def train_fn(u):
        ds, X = build_dataset(index, X_raw, u, config)
        keep = [c for c in X.columns if X.column(c).min() < X.column(c).max()]
        X = X.subset(keep)
        if len(set(ds.indicators.tolist())) < 2:
            raise MetricUndefinedError(f"single-class labels at threshold {u:g}")
        spec = fit_standardizer(X)
        Xt = apply_transform(X, spec)
        kept = prune_collinear(Xt, ds.indicators, "logistic")
        _, model = stepwise_aic("logistic", Xt.subset(kept), ds.indicators)
        return model.phi(Xt), ds.indicators

    return train_fn


_COMMANDS = {
    "synth": _cmd_synth,
    "envelope": _cmd_envelope,
    "features": _cmd_features,
    "threshold": _cmd_threshold,
    "train": _cmd_train,
    "forecast": _cmd_forecast,
    "evaluate": _cmd_evaluate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, parsers = _build_parser()
    try:
        # apply config-file defaults before the real parse so flags override
        if "--config" in argv:
            command = next((a for a in argv if not a.startswith("-")), None)
            path = argv[argv.index("--config") + 1] if argv.index("--config") + 1 < len(argv) else None
            if command in parsers and path:
                _apply_config(parsers, command, path)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        _COMMANDS[args.command](args)
        return 0
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except EvtcastError as exc:
        logger.error("%s", exc)
        return 2
    except OSError as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
