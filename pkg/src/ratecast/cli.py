"""Command-line front end: simulation, fitting, prediction, and the
EVT-vs-TST comparison report."""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from ratecast import baselines, evt, lrd, synth
from ratecast.ingest import (FlowPolicy, IngestError, RateSeries,
                             assemble_events, load_series)
from ratecast.metrics import PredictionRun, PredictionStep

SCHEMA_VERSION = 1


class CliError(Exception):
    pass


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_report(path: str, payload: dict, config: dict):
    doc = {"schema_version": SCHEMA_VERSION, "config": config}
    doc.update(payload)
    _write_atomic(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _outdir(args) -> str:
    out = args.out or os.environ.get("RATECAST_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _config_of(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load(args) -> RateSeries:
    return load_series(args.input, args.format)


def compare_report(evt_forecasts, tst_run: PredictionRun, block: int = 24) -> dict:
    """Per-block comparison of EVT return levels against TST-predicted and
    observed maxima; flags blocks where the TST max exceeds the level."""
    hours = [s.hour for s in tst_run.steps]
    blocks = []
    for f in evt_forecasts:
        lo, hi = (int(f["window"][0]), int(f["window"][1])) if isinstance(f, dict) \
            else (int(f.window[0]), int(f.window[1]))
        if hi - lo != block:
            raise CliError(f"EVT window {lo}-{hi} is not {block} hours")
        steps = [s for s in tst_run.steps if lo <= s.hour < hi]
        if len(steps) != block:
            raise CliError(f"TST run does not cover hours {lo}-{hi}")
        level = f["x_m"] if isinstance(f, dict) else f.x_m
        obs_max = max(s.observed for s in steps)
        tst_max = max(s.predicted for s in steps)
        blocks.append({
            "window": [lo, hi],
            "return_level": float(level),
            "observed_max": float(obs_max),
            "tst_predicted_max": float(tst_max),
            "flagged": bool(tst_max > level),
        })
    expected = {s.hour for s in tst_run.steps}
    covered = {h for b in blocks for h in range(b["window"][0], b["window"][1])}
    if expected != covered:
        raise CliError("EVT and TST inputs cover different hour windows")
    return {"blocks": blocks, "n_flagged": sum(b["flagged"] for b in blocks)}


def _run_csv_path(out, name):
    return os.path.join(out, name)


def _prediction_run_from_csv(path) -> PredictionRun:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        idx = {c: i for i, c in enumerate(header)}
        run = PredictionRun(horizon=1, train_fraction=0.0)
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            run.steps.append(PredictionStep(
                hour=int(parts[idx["hour"]]),
                observed=float(parts[idx["observed"]]),
                predicted=float(parts[idx["predicted"]]),
                sigma=float(parts[idx["sigma"]]),
                refit_flag=bool(int(parts[idx["refit_flag"]]))))
    return run


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args):
    out = _outdir(args)
    params = json.loads(args.params) if args.params else {}
    spec = synth.SimSpec(kind=args.kind, n=args.n, params=params, seed=args.seed)
    result, oracle = synth.simulate(spec)
    if isinstance(result, RateSeries):
        series = result
    else:
        counts = np.maximum(np.rint(np.asarray(result)), 0).astype(np.int64)
        series = RateSeries(origin=0.0, counts=counts)
    _write_atomic(os.path.join(out, "series.csv"), series.to_counts_csv())
    _write_report(os.path.join(out, "oracle.json"), {"oracle": oracle},
                  _config_of(args))
    return 0


def cmd_ingest(args):
    out = _outdir(args)
    if args.format == "events-raw":
        raw = []
        with open(args.input, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise IngestError(f"line {lineno}: expected 'source_id,epoch_s'")
                raw.append((parts[0], float(parts[1])))
        policy = FlowPolicy(lifetime_s=args.lifetime, timeout_s=args.timeout)
        events, rejected = assemble_events(raw, policy)
        if not events:
            raise IngestError("empty series: no events after assembly")
        from ratecast.ingest import bin_hourly
        series = bin_hourly(events, min(e.start_time for e in events))
        diag = {"n_events": len(events), "n_rejected": len(rejected)}
    else:
        series = _load(args)
        diag = {"n_events": int(series.counts.sum()), "n_rejected": 0}
    _write_atomic(os.path.join(out, "series.csv"), series.to_counts_csv())
    _write_report(os.path.join(out, "ingest.json"),
                  {"hours": len(series), "gap_hours": series.gap_hours, **diag},
                  _config_of(args))
    return 0


def cmd_fit_evt(args):
    out = _outdir(args)
    series = _load(args)
    fit = evt.fit_stationary(series, n_boot=args.n_boot, seed=args.seed)
    stationary = fit is not None
    if fit is None:
        fit = evt.fit_nonstationary(series, seed=args.seed)
    if fit is None:
        _write_report(os.path.join(out, "report.json"),
                      {"fit": None, "stationary": False}, _config_of(args))
        return 1
    report = fit.to_report()
    _write_report(os.path.join(out, "report.json"),
                  {"fit": report, "stationary": stationary}, _config_of(args))
    if fit.gof is not None:
        lines = ["empirical,model"]
        lines += [f"{e!r},{m!r}" for e, m in fit.gof.qq_points]
        _write_atomic(os.path.join(out, "qq.csv"), "\n".join(lines) + "\n")
    return 0


def cmd_fit_tst(args):
    out = _outdir(args)
    series = _load(args)
    variants = args.family.split(",") if args.family else list(lrd.TST_VARIANTS)
    fits = {}
    for v in variants:
        try:
            fits[v] = lrd.fit(series, v, seed=args.seed)
        except (lrd.LrdError, lrd.FitError):
            continue
    if not fits:
        _write_report(os.path.join(out, "model.json"), {"model": None},
                      _config_of(args))
        return 1
    best = min(fits, key=lambda v: fits[v].aic)
    _write_report(os.path.join(out, "model.json"),
                  {"model": fits[best].to_report(),
                   "aic_by_variant": {v: m.aic for v, m in fits.items()}},
                  _config_of(args))
    return 0


def cmd_predict_tst(args):
    out = _outdir(args)
    series = _load(args)
    variants = tuple(args.family.split(",")) if args.family else lrd.TST_VARIANTS
    best, runs = lrd.predict_rolling(series, family=variants, ell=args.ell,
                                     h=args.h, seed=args.seed)
    _write_atomic(_run_csv_path(out, "predictions.csv"), runs[best].to_csv())
    _write_report(os.path.join(out, "report.json"),
                  {"selected": best,
                   "pmad": {v: r.pmad for v, r in runs.items()},
                   "accuracy": {v: r.accuracy for v, r in runs.items()}},
                  _config_of(args))
    return 0


def cmd_predict_evt(args):
    out = _outdir(args)
    series = _load(args)
    candidates = tuple(args.family.split(",")) if args.family else evt.VARIANTS
    ell = args.ell if args.ell is not None else None
    try:
        selected, forecasts, pvals = evt.predict_return_levels(
            series, ell=ell, h=args.h, m=args.m, seed=args.seed,
            candidates=candidates)
    except (evt.EvtError, evt.FitError):
        _write_report(os.path.join(out, "returnlevels.json"),
                      {"selected": None}, _config_of(args))
        return 1
    payload = {
        "selected": selected,
        "p_by_variant": pvals,
        "forecasts": [{
            "window": list(f.window), "m": f.m, "x_m": f.x_m,
            "observed_max": f.observed_max,
            "exceedance_count": f.exceedance_count, "binom_p": f.binom_p,
        } for f in forecasts],
    }
    _write_report(os.path.join(out, "returnlevels.json"), payload,
                  _config_of(args))
    return 0


def cmd_predict_hmm(args):
    out = _outdir(args)
    series = _load(args)
    best, runs = baselines.hmm_predict_rolling(series, ell=args.ell, h=args.h,
                                               seed=args.seed)
    _write_atomic(_run_csv_path(out, "predictions.csv"), runs[best].to_csv())
    _write_report(os.path.join(out, "report.json"),
                  {"selected_k": best,
                   "pmad": {str(k): r.pmad for k, r in runs.items()}},
                  _config_of(args))
    return 0


def cmd_predict_sd(args):
    out = _outdir(args)
    series = _load(args)
    table = baselines.sd_predict_rolling(series, ell=args.ell, seed=args.seed)
    rows = []
    for model in ("hmm", "markov"):
        for mapping in ("min", "mean", "max"):
            p, _ = table[model][mapping]
            rows.append({"model": model, "mapping": mapping, "pmad": p})
    _write_report(os.path.join(out, "sd_report.json"),
                  {"rows": rows, "hmm_k": table["hmm"]["k"]}, _config_of(args))
    return 0


def cmd_evaluate(args):
    out = _outdir(args)
    with open(args.evt, encoding="utf-8") as fh:
        evt_doc = json.load(fh)
    run = _prediction_run_from_csv(args.tst)
    comparison = compare_report(evt_doc["forecasts"], run, block=args.block)
    _write_report(os.path.join(out, "comparison.json"), comparison,
                  _config_of(args))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ratecast",
        description="Extreme-value and long-memory forecasting of hourly "
                    "event rates")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="input series file")
            p.add_argument("--format", default="counts-csv",
                           choices=["counts-csv", "events-csv", "events-raw"])
        p.add_argument("--out", default=None,
                       help="output directory (default: $RATECAST_OUT or .)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="generate synthetic series")
    p.add_argument("--kind", required=True,
                   choices=["gpd_tail", "farima", "garch", "farima_garch",
                            "hmm", "composite"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--params", default=None, help="JSON parameter block")
    add_io(p, needs_input=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="normalize events/counts to hourly series")
    add_io(p)
    p.add_argument("--lifetime", type=float, default=300.0)
    p.add_argument("--timeout", type=float, default=60.0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit-evt", help="threshold-ladder GPD fitting")
    add_io(p)
    p.add_argument("--n-boot", type=int, default=999)
    p.set_defaults(func=cmd_fit_evt)

    p = sub.add_parser("fit-tst", help="FARIMA+GARCH family fitting")
    add_io(p)
    p.add_argument("--family", default=None,
                   help="comma-separated variant filter, e.g. M'1,M'3")
    p.set_defaults(func=cmd_fit_tst)

    p = sub.add_parser("predict-tst", help="rolling FARIMA+GARCH prediction")
    add_io(p)
    p.add_argument("--ell", type=float, default=0.9)
    p.add_argument("--h", type=int, default=1)
    p.add_argument("--family", default=None)
    p.set_defaults(func=cmd_predict_tst)

    p = sub.add_parser("predict-evt", help="rolling return-level prediction")
    add_io(p)
    p.add_argument("--ell", type=float, default=None,
                   help="train fraction; default leaves the last 120 hours")
    p.add_argument("--h", type=int, default=24)
    p.add_argument("--m", type=float, default=None,
                   help="return period in observations (default h)")
    p.add_argument("--family", default=None)
    p.set_defaults(func=cmd_predict_evt)

    p = sub.add_parser("predict-hmm", help="rolling HMM prediction")
    add_io(p)
    p.add_argument("--ell", type=float, default=0.9)
    p.add_argument("--h", type=int, default=1)
    p.set_defaults(func=cmd_predict_hmm)

    p = sub.add_parser("predict-sd", help="rolling symbolic-dynamics prediction")
    add_io(p)
    p.add_argument("--ell", type=float, default=0.9)
    p.set_defaults(func=cmd_predict_sd)

    p = sub.add_parser("evaluate", help="compare EVT return levels with a TST run")
    p.add_argument("--evt", required=True, help="returnlevels.json from predict-evt")
    p.add_argument("--tst", required=True, help="predictions.csv from predict-tst")
    p.add_argument("--block", type=int, default=24)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (IngestError, CliError, evt.EvtError, lrd.LrdError,
            baselines.BaselineError, synth.SynthError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
