"""Command-line pipeline: simulate -> build-frames -> train -> evaluate -> plot.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numerical failure.
All commands are deterministic for fixed seeds; the only timestamp lives in
the simulation manifest under its own key.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, net, sim, svgplot
from .errors import NumericalError, ValidationError
from .evaluate import evaluate_split
from .store import ModelBundle, load_params, save_params
from .targets import build_target_curve
from .windows import (
    EXTENDED7,
    WindowBatch,
    apply_normalizer,
    build_windows,
    export_sample_csv,
    feature_names,
    fit_normalizer,
    load_frames,
    save_frames,
    split_runs,
    variant_for,
)

PLATO_CYCLE = (8.0, 10.0, 12.0)
MANIFEST_NAME = "manifest.json"

SERIES_HEADER = ["step", "pressure_mbar", "wort_temp_c", "ambient_temp_c",
                 "target_plato", "predicted_plato", "abs_error"]


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _varied_schedule(duration: int, lag: int, rng: np.random.Generator):
    """Per-run probe plan: jittered refractometer readings plus 2-5 spindle probes.

    Staff probe roughly twice a day while the process is young and an extra
    time shortly after fermentation visibly starts, then settle into a daily
    rhythm.
    """
    if duration < 2:
        return ()
    refr = {0, duration - 1}
    step = sim.STEPS_PER_DAY // 2 + int(rng.integers(-90, 91))
    while step < duration - 1:
        cadence = sim.STEPS_PER_DAY // 2 if step < 2 * sim.STEPS_PER_DAY else sim.STEPS_PER_DAY
        refr.add(step)
        step += cadence + int(rng.integers(-120, 121))
    onset_check = lag + int(rng.integers(30, 240))
    if 0 < onset_check < duration - 1:
        refr.add(onset_check)
    refr = sorted(refr)
    n_spindle = int(rng.integers(2, 6))
    spindle = {0, max(0, duration - 80)}
    for _ in range(50):
        if len(spindle) >= n_spindle:
            break
        spindle.add(int(rng.uniform(0.15, 0.85) * duration))
    schedule = [(s, sim.REFRACTOMETER) for s in refr]
    schedule += [(s, sim.SPINDLE) for s in sorted(spindle) if s < duration]
    return tuple(sorted(schedule, key=lambda e: (e[0], e[1])))


def _varied_config(base: sim.ProcessConfig, initial_plato: float, run_seed: int,
                   rng: np.random.Generator, keep_schedule: bool) -> sim.ProcessConfig:
    attenuation = base.final_plato / base.initial_plato
    final = initial_plato * attenuation * rng.uniform(0.9, 1.1)
    lag = int(base.lag_steps * rng.uniform(0.5, 1.8))
    schedule = base.probe_schedule if keep_schedule \
        else _varied_schedule(base.duration_steps, lag, rng)
    return replace(
        base,
        initial_plato=initial_plato,
        final_plato=final,
        rate_k=base.rate_k * rng.uniform(0.75, 1.3),
        lag_steps=lag,
        ambient_mean_c=base.ambient_mean_c + rng.uniform(-0.8, 0.8),
        wort_initial_c=base.wort_initial_c + rng.uniform(-1.0, 1.0),
        probe_schedule=schedule,
        rng_seed=run_seed,
    )


def cmd_simulate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.config:
        with open(args.config) as fh:
            base_doc = json.load(fh)
    else:
        base_doc = {}
    base = sim.config_from_dict(base_doc)
    fixed_plato = "initial_plato" in base_doc
    keep_schedule = "probe_schedule" in base_doc
    rng = np.random.default_rng(args.seed)
    entries = []
    for i in range(args.runs):
        run_id = f"run{i:03d}"
        initial = base.initial_plato if fixed_plato else PLATO_CYCLE[i % len(PLATO_CYCLE)]
        config = _varied_config(base, initial, args.seed + 1000 + i, rng, keep_schedule)
        run = sim.simulate_process(config, run_id)
        sim.write_run(run, out_dir)
        entries.append({
            "id": run_id,
            "rng_seed": config.rng_seed,
            "initial_plato": config.initial_plato,
            "files": {
                "samples": sim.samples_csv_path(out_dir, run_id).name,
                "probes": sim.probes_csv_path(out_dir, run_id).name,
                "config": sim.config_json_path(out_dir, run_id).name,
            },
        })
    manifest = {
        "version": 1,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "seed": args.seed,
        "runs": entries,
    }
    with open(out_dir / MANIFEST_NAME, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"simulated {len(entries)} runs into {out_dir}")
    return 0


def _load_manifest_runs(data_dir: Path) -> list[sim.ProcessRun]:
    manifest_path = data_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise ValidationError(f"no {MANIFEST_NAME} in {data_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    return [sim.read_run(data_dir, entry["id"]) for entry in manifest["runs"]]


# ---------------------------------------------------------------------------
# build-frames
# ---------------------------------------------------------------------------

def _parse_split(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"--split must be train,val,test counts, got {text!r}")
    try:
        a, b, c = (int(p) for p in parts)
    except ValueError:
        raise ValidationError(f"--split must contain integers, got {text!r}") from None
    return a, b, c


def _empty_batch(windowsize, names, stats) -> WindowBatch:
    return WindowBatch(
        np.zeros((0, windowsize, len(names))), np.zeros(0), [],
        np.zeros(0, dtype=np.int64), names, stats,
    )


def cmd_build_frames(args) -> int:
    data_dir = Path(args.data_dir)
    runs = _load_manifest_runs(data_dir)
    if not runs:
        raise ValidationError(f"manifest in {data_dir} lists no runs")
    train_n, val_n, test_n = _parse_split(args.split)
    names = feature_names(args.features)
    split_ids = split_runs(runs, train_n, val_n, test_n, args.split_seed)
    by_id = {run.run_id: run for run in runs}

    windows_by_split = {"train": [], "val": [], "test": []}
    for split_name, ids in zip(("train", "val", "test"), split_ids):
        for rid in ids:
            run = by_id[rid]
            target = build_target_curve(run.probes, run.duration_steps)
            windows_by_split[split_name].extend(
                build_windows(run, target, args.windowsize, args.overlap, args.features)
            )
    if not windows_by_split["train"]:
        raise ValidationError("training split produced no windows")
    stats = fit_normalizer(windows_by_split["train"])
    partitions = {
        name: apply_normalizer(ws, stats, names) if ws
        else _empty_batch(args.windowsize, names, stats)
        for name, ws in windows_by_split.items()
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_frames(out, partitions, overlap=args.overlap)
    export_sample_csv(partitions["train"], out.with_suffix(out.suffix + ".sample.csv"))
    total = sum(b.n_windows for b in partitions.values())
    counts = ", ".join(f"{name}={b.n_windows}" for name, b in partitions.items())
    print(f"built {total} windows ({counts}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    frames = load_frames(Path(args.frames))
    train_b = frames.partitions.get("train")
    if train_b is None:
        raise ValidationError(f"{args.frames} has no 'train' partition")
    val_b = frames.partitions.get("val")
    config = net.ModelConfig(
        windowsize=frames.windowsize, totalfeatures=len(frames.feature_names)
    )
    tconfig = net.TrainConfig(
        epochs=args.epochs, batch_size=args.batch,
        learning_rate=args.lr, shuffle_seed=args.seed,
    )
    params = net.init_params(config, seed=args.seed)
    best, history = net.train(params, train_b, val_b, tconfig)
    metadata = {
        "splits": {name: sorted(set(b.run_ids)) for name, b in frames.partitions.items()},
        "overlap": frames.overlap,
        "train_config": {
            "epochs": tconfig.epochs, "batch_size": tconfig.batch_size,
            "learning_rate": tconfig.learning_rate, "optimizer": tconfig.optimizer,
            "shuffle_seed": tconfig.shuffle_seed, "patience": tconfig.patience,
        },
        "init_seed": args.seed,
        "tool_version": __version__,
    }
    bundle = ModelBundle(best, config, frames.feature_names, frames.norm_stats, metadata)
    model_out = Path(args.model_out)
    model_out.parent.mkdir(parents=True, exist_ok=True)
    save_params(model_out, bundle)
    history_path = model_out.with_suffix(model_out.suffix + ".history.csv")
    with open(history_path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_mse", "val_mse"])
        for row in history:
            writer.writerow([
                row.epoch, repr(row.train_mse),
                "" if row.val_mse is None else repr(row.val_mse),
            ])
    final = history[-1]
    final_val = "n/a" if final.val_mse is None else f"{final.val_mse:.6f}"
    print(f"trained {len(history)} epochs: train_mse={final.train_mse:.6f} "
          f"val_mse={final_val} -> {model_out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    bundle = load_params(Path(args.model))
    data_dir = Path(args.data_dir)
    splits = bundle.metadata.get("splits")
    if not splits or args.split not in splits:
        raise ValidationError(
            f"model metadata has no run list for split {args.split!r}"
        )
    run_ids = splits[args.split]
    runs = [sim.read_run(data_dir, rid) for rid in run_ids]
    overlap = bundle.metadata.get("overlap") or 7
    result = evaluate_split(bundle, runs, args.split, overlap=overlap)

    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    run_rows = []
    for run, report in zip(runs, result.reports):
        target = build_target_curve(run.probes, run.duration_steps)
        _write_series_csv(
            report_dir / f"{run.run_id}.series.csv", run, target,
            dict(result.predictions[run.run_id]),
        )
        with open(report_dir / f"{run.run_id}.report.json", "w", newline="\n") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
        run_rows.append({
            "run_id": run.run_id,
            "mae": report.mae,
            "max_error": report.max_error,
            "frac_le_03": report.frac_le_03,
            "frac_le_06": report.frac_le_06,
            "n_predictions": int(report.steps.size),
            "initial_pressure_mbar": run.initial_pressure_mbar,
            "initial_plato": run.initial_plato,
        })
    summary = {
        "split": args.split,
        "features": variant_for(bundle.feature_names),
        "overlap": overlap,
        "windowsize": bundle.config.windowsize,
        "runs": run_rows,
        "aggregate": result.aggregate,
    }
    with open(report_dir / "summary.json", "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"split={args.split} runs={len(run_rows)}")
    for row in run_rows:
        print(f"  {row['run_id']}: mae={row['mae']:.4f} max={row['max_error']:.4f} "
              f"le0.3={row['frac_le_03']:.3f} le0.6={row['frac_le_06']:.3f}")
    agg = result.aggregate
    if agg["n_runs"]:
        print(f"  aggregate: mae={agg['mae']:.4f} max={agg['max_error']:.4f}")
    return 0


def _write_series_csv(path, run, target, pred_map) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for s in range(run.duration_steps):
            pred = pred_map.get(s)
            writer.writerow([
                s,
                repr(float(run.pressure_mbar[s])),
                repr(float(run.wort_temp_c[s])),
                repr(float(run.ambient_temp_c[s])),
                repr(float(target.plato[s])),
                "" if pred is None else repr(float(pred)),
                "" if pred is None else repr(abs(float(pred) - float(target.plato[s]))),
            ])


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def _read_series_csv(path):
    cols = {name: [] for name in SERIES_HEADER}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SERIES_HEADER:
            raise ValidationError(f"{path}: unexpected header {header!r}")
        for row in reader:
            for name, value in zip(SERIES_HEADER, row):
                cols[name].append(float(value) if value != "" else np.nan)
    return {name: np.array(values) for name, values in cols.items()}


def cmd_plot(args) -> int:
    report_dir = Path(args.report_dir)
    summary_path = report_dir / "summary.json"
    if not summary_path.exists():
        raise ValidationError(f"no summary.json in {report_dir}; run `evaluate` first")
    with open(summary_path) as fh:
        summary = json.load(fh)
    row = next((r for r in summary["runs"] if r["run_id"] == args.run), None)
    if row is None:
        raise ValidationError(f"run id {args.run!r} not found in {summary_path}")
    series = _read_series_csv(report_dir / f"{args.run}.series.csv")
    extended = summary.get("features") == EXTENDED7
    steps = series["step"]

    pressure = svgplot.Panel(f"{args.run}: pressure", "step", "mbar")
    pressure.add(steps, series["pressure_mbar"], "#1f77b4", "bottom sensor")
    if extended:
        pressure.ref_lines.append(svgplot.RefLine(
            row["initial_pressure_mbar"], "#17becf", "initial pressure"))

    temps = svgplot.Panel(f"{args.run}: temperatures", "step", "°C")
    temps.add(steps, series["wort_temp_c"], "#d62728", "wort")
    temps.add(steps, series["ambient_temp_c"], "#2ca02c", "ambient")

    density = svgplot.Panel(f"{args.run}: density", "step", "°Plato")
    density.add(steps, series["target_plato"], "#2ca02c", "actual (fused probes)")
    density.add(steps, series["predicted_plato"], "#ff7f0e", "predicted", width=1.4)
    if extended:
        density.ref_lines.append(svgplot.RefLine(
            row["initial_plato"], "#17becf", "initial density"))

    error = svgplot.Panel(f"{args.run}: absolute error", "step", "°Plato")
    error.add(steps, series["abs_error"], "#d62728", "|actual - predicted|")
    error.ref_lines.append(svgplot.RefLine(0.6, "#999999", "0.6 °P"))

    svg = svgplot.render_grid([pressure, temps, density, error])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wortsense",
        description="Simulate fermentations and train a density soft sensor.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate fermentation runs as CSV/JSON files")
    p.add_argument("--config", help="base process config JSON (fields override defaults)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--runs", type=int, default=31)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-frames", help="window runs into normalized training frames")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--windowsize", type=int, default=100)
    p.add_argument("--overlap", type=int, default=7)
    p.add_argument("--features", choices=["base5", "extended7"], default="base5")
    p.add_argument("--split", default="24,4,3", help="train,val,test run counts")
    p.add_argument("--split-seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_frames)

    p = sub.add_parser("train", help="train the LSTM regressor on a frames file")
    p.add_argument("--frames", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="error reports for one split of runs")
    p.add_argument("--model", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="four-panel SVG for one evaluated run")
    p.add_argument("--run", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
