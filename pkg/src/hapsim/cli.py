"""Command line driver.

    hapsim <command> [--config FILE] [--set key=value ...] [--out DIR] [--seed N]

Commands build on each other through files under --out:

    gen-traces   traces/<activity>_{train,val}.csv
    train        model/xhap.ckpt, model/training_log.csv
    evaluate     eval/estimates.csv, eval/summary.txt
    restore      restore/stats.csv
    experiment   experiments/<name>.csv (+ MANIFEST.txt entry)
    all          everything above, end to end

Every command echoes the fully-resolved settings to
<out>/effective_config.txt. `all` writes the checkpoint, then reloads
it from disk before evaluation, so a chained run and separate
train/evaluate invocations see bit-identical weights.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from hapsim.channel import simulate_losses
from hapsim.config import ConfigError, RunConfig, parse_config
from hapsim.experiments import (
    ExperimentResult,
    build_eval_trace,
    burst_experiment,
    capacity_experiment,
    coverage_experiment,
    force_dynamics_experiment,
    min_snr_experiment,
    min_snr_for_target,
    rolling_mse_experiment,
    single_step_errors,
    threshold_sweep_experiment,
    write_manifest,
)
from hapsim.model import XhapModel, load_checkpoint, save_checkpoint
from hapsim.restoration import HoldLastPredictor, run_restoration, write_stats_csv
from hapsim.training import train
from hapsim.traces import generate_trace, read_trace_csv, write_trace_csv

EXPERIMENT_NAMES = (
    "min_snr",
    "coverage",
    "threshold_sweep",
    "burst",
    "rolling_mse",
    "force_dynamics",
    "capacity",
)

# spawn-key tags; experiments.py owns 11..24
_TAG_TRACES = 1
_TAG_RESTORE_CHANNEL = 31


def _derived_seed(base: int, *tags: int) -> int:
    ss = np.random.SeedSequence(entropy=base, spawn_key=tuple(tags))
    return int(ss.generate_state(1)[0])


def _echo_config(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.txt").write_text(cfg.effective_text())


def _trace_path(out: Path, activity, role: str) -> Path:
    return out / "traces" / f"{activity.value}_{role}.csv"


def _load_model(out: Path) -> XhapModel:
    path = out / "model" / "xhap.ckpt"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `hapsim train` first")
    return load_checkpoint(path)


def _eval_trace(cfg: RunConfig):
    ecfg = cfg.experiment_config()
    return build_eval_trace(
        cfg.activities(), ecfg.steps, cfg.seed, duration_s=cfg["experiments.eval_duration_s"]
    )


# ============================================================
# Commands
# ============================================================


def cmd_gen_traces(cfg: RunConfig, out: Path) -> None:
    tdir = out / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    duration = cfg["traces.duration_s"]
    for idx, act in enumerate(cfg.activities()):
        for role_idx, role in enumerate(("train", "val")):
            seed = _derived_seed(cfg.seed, _TAG_TRACES, idx, role_idx)
            trace = generate_trace(act, duration, seed=seed)
            path = _trace_path(out, act, role)
            write_trace_csv(trace, path)
            print(f"wrote {path} ({trace.n} rows)")


def _read_split(cfg: RunConfig, out: Path, role: str) -> list:
    traces = []
    for act in cfg.activities():
        path = _trace_path(out, act, role)
        if not path.exists():
            raise FileNotFoundError(f"{path} not found; run `hapsim gen-traces` first")
        traces.append(read_trace_csv(path))
    return traces


def cmd_train(cfg: RunConfig, out: Path) -> None:
    train_traces = _read_split(cfg, out, "train")
    val_traces = _read_split(cfg, out, "val")
    model = XhapModel.initialize(cfg.model_config(), seed=cfg.seed)
    print(f"training {model.num_params()} parameters")
    result = train(model, train_traces, val_traces, cfg.train_config(), log=print)
    mdir = out / "model"
    mdir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, mdir / "xhap.ckpt")
    result.history.to_csv(mdir / "training_log.csv")
    print(
        f"wrote {mdir / 'xhap.ckpt'} "
        f"(best epoch {result.history.best_epoch}, val mse {result.history.best_val_mse:.9g})"
    )


def cmd_evaluate(cfg: RunConfig, out: Path, model: Optional[XhapModel] = None) -> None:
    model = model or _load_model(out)
    trace = _eval_trace(cfg)
    length = cfg["model.history_len"]
    preds, errs = single_step_errors(model, trace, length)
    hold = HoldLastPredictor()
    hold_preds, hold_errs = single_step_errors(hold, trace, length)

    truth = trace.force[length:]
    edir = out / "eval"
    edir.mkdir(parents=True, exist_ok=True)
    lines = ["step,truth,xhap,hold_last"]
    t_mag = np.linalg.norm(truth, axis=1)
    p_mag = np.linalg.norm(preds, axis=1)
    h_mag = np.linalg.norm(hold_preds, axis=1)
    for j in range(truth.shape[0]):
        lines.append(f"{length + j},{t_mag[j]:.9g},{p_mag[j]:.9g},{h_mag[j]:.9g}")
    (edir / "estimates.csv").write_text("\n".join(lines) + "\n")

    summary = (
        f"steps = {truth.shape[0]}\n"
        f"xhap_mse = {errs.mean():.9g}\n"
        f"hold_last_mse = {hold_errs.mean():.9g}\n"
    )
    (edir / "summary.txt").write_text(summary)
    print(f"wrote {edir / 'estimates.csv'} ({truth.shape[0]} rows)")
    print(summary.strip())


def cmd_restore(cfg: RunConfig, out: Path, model: Optional[XhapModel] = None) -> None:
    model = model or _load_model(out)
    trace = _eval_trace(cfg)
    ecfg = cfg.experiment_config()
    from dataclasses import replace

    channel = replace(cfg.channel(), seed=_derived_seed(cfg.seed, _TAG_RESTORE_CHANNEL))
    losses = simulate_losses(channel, ecfg.steps)
    rcfg = cfg.restoration_config()
    stats = [
        run_restoration(trace, losses.mask, model, rcfg),
        run_restoration(trace, losses.mask, HoldLastPredictor(), rcfg),
    ]
    rdir = out / "restore"
    rdir.mkdir(parents=True, exist_ok=True)
    write_stats_csv(stats, rdir / "stats.csv")
    print(f"wrote {rdir / 'stats.csv'} (raw plr {losses.raw_plr:.9g})")
    for s in stats:
        print(
            f"{s.model}: lost {s.lost}, restored {s.restored}, "
            f"effective plr {s.effective_plr:.9g}"
        )


def _models(model: XhapModel) -> list:
    return [("none", None), ("hold_last", HoldLastPredictor()), ("xhap", model)]


def _coverage_entries_from_rows(cfg: RunConfig, result: ExperimentResult) -> list:
    """(label, snr_req) pairs at the configured restoration threshold."""
    want_thr = cfg["restore.threshold"]
    by_label: dict = {}
    cols = {c: i for i, c in enumerate(result.columns)}
    for row in result.rows:
        if abs(row[cols["threshold"]] - want_thr) < 1e-12:
            by_label[row[cols["model"]]] = row[cols["min_snr_db"]]
    return sorted(by_label.items())


def _run_experiment(
    name: str,
    cfg: RunConfig,
    model: XhapModel,
    trace,
    min_snr_result: Optional[ExperimentResult] = None,
) -> ExperimentResult:
    ecfg = cfg.experiment_config()
    channel = cfg.channel()
    models = _models(model)
    thr = cfg["restore.threshold"]
    if name == "min_snr":
        return min_snr_experiment(models, ecfg, channel, trace)
    if name == "coverage":
        if min_snr_result is not None:
            entries = _coverage_entries_from_rows(cfg, min_snr_result)
        else:
            mcs = ecfg.mcs_list[0]
            entries = [
                (label, min_snr_for_target(m, thr, mcs, ecfg, channel, trace if m else None))
                for label, m in models
            ]
        return coverage_experiment(entries, cfg.link(), ecfg)
    if name == "threshold_sweep":
        return threshold_sweep_experiment(models, ecfg, channel, trace)
    if name == "burst":
        return burst_experiment(models, ecfg, trace, thr)
    if name == "rolling_mse":
        return rolling_mse_experiment(models, ecfg, trace)[0]
    if name == "force_dynamics":
        err_map = {
            label: single_step_errors(m, trace, ecfg.history_len)[1]
            for label, m in models
            if m is not None
        }
        return force_dynamics_experiment(err_map, ecfg, trace)
    if name == "capacity":
        return capacity_experiment(models, ecfg, channel, trace, thr)
    raise ValueError(f"unknown experiment {name!r}")


def _update_manifest(out_dir: Path, results: list) -> None:
    """Merge the new entries into MANIFEST.txt, keyed by file name."""
    path = out_dir / "MANIFEST.txt"
    existing: dict = {}
    if path.exists():
        for line in path.read_text().splitlines()[1:]:
            if line.strip():
                existing[line.split()[0]] = line
    write_manifest(out_dir, results)
    fresh = {ln.split()[0]: ln for ln in path.read_text().splitlines()[1:] if ln.strip()}
    existing.update(fresh)
    lines = ["hapsim experiment manifest v1"] + [existing[k] for k in sorted(existing)]
    path.write_text("\n".join(lines) + "\n")


def cmd_experiment(cfg: RunConfig, out: Path, name: str, model: Optional[XhapModel] = None) -> None:
    model = model or _load_model(out)
    trace = _eval_trace(cfg)
    result = _run_experiment(name, cfg, model, trace)
    xdir = out / "experiments"
    xdir.mkdir(parents=True, exist_ok=True)
    result.to_csv(xdir / f"{name}.csv")
    _update_manifest(xdir, [result])
    print(f"wrote {xdir / (name + '.csv')} ({len(result.rows)} rows)")


def cmd_all(cfg: RunConfig, out: Path) -> None:
    cmd_gen_traces(cfg, out)
    cmd_train(cfg, out)
    model = _load_model(out)  # reload: downstream must match split invocations
    cmd_evaluate(cfg, out, model)
    cmd_restore(cfg, out, model)

    trace = _eval_trace(cfg)
    xdir = out / "experiments"
    xdir.mkdir(parents=True, exist_ok=True)
    results = []
    min_snr_result: Optional[ExperimentResult] = None
    for name in EXPERIMENT_NAMES:
        result = _run_experiment(name, cfg, model, trace, min_snr_result=min_snr_result)
        if name == "min_snr":
            min_snr_result = result
        result.to_csv(xdir / f"{name}.csv")
        results.append(result)
        print(f"wrote {xdir / (name + '.csv')} ({len(result.rows)} rows)")
    write_manifest(xdir, results)
    print(f"wrote {xdir / 'MANIFEST.txt'}")


# ============================================================
# Entry point
# ============================================================


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="configuration file")
    common.add_argument(
        "--set",
        dest="sets",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a setting (repeatable; wins over --config)",
    )
    common.add_argument("--out", default="out", metavar="DIR", help="artifact directory")
    common.add_argument("--seed", type=int, help="override run.seed")

    parser = argparse.ArgumentParser(
        prog="hapsim",
        description="Haptic teleoperation over a lossy wireless link: simulate, train, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-traces", parents=[common], help="generate train/val traces")
    sub.add_parser("train", parents=[common], help="train the force estimator")
    sub.add_parser("evaluate", parents=[common], help="single-step estimates on the eval stream")
    sub.add_parser("restore", parents=[common], help="packet-loss restoration on the eval stream")
    pe = sub.add_parser("experiment", parents=[common], help="run one experiment")
    pe.add_argument("name", choices=EXPERIMENT_NAMES)
    sub.add_parser("all", parents=[common], help="full pipeline")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.sets)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    try:
        _echo_config(cfg, out)
        if args.command == "gen-traces":
            cmd_gen_traces(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, out)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, out)
        elif args.command == "restore":
            cmd_restore(cfg, out)
        elif args.command == "experiment":
            cmd_experiment(cfg, out, args.name)
        elif args.command == "all":
            cmd_all(cfg, out)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
