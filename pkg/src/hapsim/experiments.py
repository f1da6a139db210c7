"""Experiment suite: Monte Carlo system studies behind the CLI.

Each experiment returns an ExperimentResult (named columns + rows +
provenance) that serializes to one deterministic CSV; MANIFEST.txt
records columns and provenance for every file so downstream tooling
can validate what it reads.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from hapsim.channel import (
    ChannelParams,
    Modulation,
    simulate_losses,
    spectral_efficiency,
)
from hapsim.linkbudget import (
    LinkBudgetParams,
    coverage_probability,
    max_coverage_distance,
    max_path_loss_db,
)
from hapsim.restoration import (
    Predictor,
    RestorationConfig,
    run_restoration,
)
from hapsim.traces import Activity, Trace, generate_trace, trim_trace

PACKET_RATE_HZ = 1000
USER_RATE_BITS = 256000  # 1 kHz x 256-bit packets

BURST_SPACING = 1000  # steps between injected bursts

# stable per-experiment seed tags (mixed into SeedSequence spawn keys)
_SEED_TAGS = {
    "eval_trace": 11,
    "min_snr": 21,
    "threshold_sweep": 22,
    "burst": 23,
    "capacity": 24,
}


@dataclass
class ExperimentConfig:
    steps: int = 100_000  # Monte Carlo packets (desk scale; paper used 10x)
    target_plr: float = 1e-5
    thresholds: tuple = (0.05, 0.1, 0.2)
    snr_bounds: tuple = (0.0, 60.0)
    snr_tol: float = 0.25  # [dB]
    mcs_list: tuple = (
        (Modulation.QPSK, 0.602),
        (Modulation.QAM16, 0.378),
        (Modulation.QAM16, 0.658),
    )
    burst_lengths: tuple = (1, 2, 3, 4, 5, 6, 7, 8)
    bandwidths: tuple = (5e6, 10e6, 20e6)
    sweep_snr_db: float = 20.0
    capacity_snr_db: float = 20.0
    capacity_eval_users: int = 3
    rolling_window: int = 5000
    p_star: float = 0.99
    history_len: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 < self.target_plr < 1:
            raise ValueError("target_plr must be in (0, 1)")
        if self.snr_bounds[0] >= self.snr_bounds[1]:
            raise ValueError("snr_bounds must be increasing")
        if self.snr_tol <= 0:
            raise ValueError("snr_tol must be > 0")
        if self.rolling_window < 1:
            raise ValueError("rolling_window must be >= 1")
        if any(k < 1 for k in self.burst_lengths):
            raise ValueError("burst lengths must be >= 1")


@dataclass
class ExperimentResult:
    name: str
    columns: tuple
    rows: list
    provenance: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        lines = [",".join(self.columns)]
        for row in self.rows:
            cells = []
            for v in row:
                if isinstance(v, (bool, np.bool_)):
                    cells.append(str(int(v)))
                elif isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                elif isinstance(v, (float, np.floating)):
                    cells.append(f"{v:.9g}")
                else:
                    cells.append(str(v))
            lines.append(",".join(cells))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _provenance(name: str, seed: int, **params) -> dict:
    canonical = name + "|" + "|".join(f"{k}={params[k]}" for k in sorted(params))
    h = hashlib.sha256(canonical.encode()).hexdigest()[:16]
    return {"seed": seed, "config_hash": h}


def _seed_for(name: str, seed: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_SEED_TAGS[name],))
    return int(ss.generate_state(1)[0])


def write_manifest(out_dir, results: Sequence[ExperimentResult]) -> None:
    lines = ["hapsim experiment manifest v1"]
    for r in results:
        lines.append(
            f"{r.name}.csv columns={','.join(r.columns)} "
            f"seed={r.provenance.get('seed', 0)} "
            f"config={r.provenance.get('config_hash', '')} rows={len(r.rows)}"
        )
    with open(f"{out_dir}/MANIFEST.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ============================================================
# Evaluation stream
# ============================================================


def build_eval_trace(
    activities: Sequence[Activity], steps: int, seed: int, duration_s: float = 40.0
) -> Trace:
    """Deterministic evaluation stream of exactly `steps` samples.

    Generates the activities (trimmed), concatenates and cycles them
    until the requested length is reached. Returned trace is already
    trimmed; feed it to run_restoration with trimmed=True.
    """
    if not activities:
        raise ValueError("need at least one activity")
    base_seed = _seed_for("eval_trace", seed)
    pieces = []
    have = 0
    rep = 0
    while have < steps:
        for j, act in enumerate(activities):
            tr = trim_trace(generate_trace(act, duration_s, seed=base_seed + 97 * rep + j))
            pieces.append(tr)
            have += tr.n
            if have >= steps:
                break
        rep += 1
    force = np.concatenate([p.force for p in pieces])[:steps]
    pos = np.concatenate([p.position for p in pieces])[:steps]
    vel = np.concatenate([p.velocity for p in pieces])[:steps]
    return Trace(force=force, position=pos, velocity=vel, activity="eval_mix", seed=seed)


def single_step_errors(model, trace: Trace, history_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-step estimates and squared errors over a (trimmed) trace.

    Prediction j targets step history_len + j; the model sees only
    ground truth here (open-loop, one window per step). Works for any
    object with predict(x_top, x_op).
    """
    ops = trace.operator_stream()
    forces = trace.force
    n_pred = trace.n - history_len
    if n_pred < 1:
        raise ValueError("trace shorter than one window")
    predict = model.predict if hasattr(model, "predict") else model
    preds = np.empty((n_pred, 3))
    for j in range(n_pred):
        t = history_len + j  # target step
        preds[j] = predict(forces[t - history_len : t], ops[t - history_len + 1 : t + 1])
    errs = ((preds - forces[history_len:]) ** 2).mean(axis=1)
    return preds, errs


# ============================================================
# Minimum SNR for a reliability target
# ============================================================


def _effective_plr_at(
    mu_db: float,
    model: Optional[Predictor],
    t_thr: float,
    mcs: tuple,
    cfg: ExperimentConfig,
    channel: ChannelParams,
    trace: Optional[Trace],
    seed: int,
) -> float:
    params = replace(
        channel, mu_db=mu_db, modulation=mcs[0], code_rate=mcs[1], seed=seed
    )
    losses = simulate_losses(params, cfg.steps)
    if model is None:
        return losses.raw_plr
    assert trace is not None
    budget = int(math.floor(cfg.target_plr * cfg.steps)) + 1
    rcfg = RestorationConfig(threshold=t_thr, history_len=cfg.history_len)
    stats = run_restoration(trace, losses.mask, model, rcfg, abort_unrestored=budget)
    unrestored = stats.lost - stats.restored
    return unrestored / cfg.steps


def min_snr_for_target(
    model: Optional[Predictor],
    t_thr: float,
    mcs: tuple,
    cfg: ExperimentConfig,
    channel: ChannelParams,
    trace: Optional[Trace] = None,
) -> float:
    """Smallest mean SNR meeting the target effective PLR, by bisection.

    model=None is the no-restoration baseline (raw PLR). Every
    candidate reuses one channel seed (common random numbers), which
    makes Monte Carlo feasibility monotone in mu, so bisection is exact
    on the sampled function. Returns +inf when even the upper bound
    fails.
    """
    if model is not None and trace is None:
        raise ValueError("restoration needs an evaluation trace")
    if trace is not None and trace.n != cfg.steps:
        raise ValueError(f"trace length {trace.n} != steps {cfg.steps}")
    seed = _seed_for("min_snr", cfg.seed)
    lo, hi = cfg.snr_bounds

    def feasible(mu: float) -> bool:
        eff = _effective_plr_at(mu, model, t_thr, mcs, cfg, channel, trace, seed)
        return eff <= cfg.target_plr

    if not feasible(hi):
        return math.inf
    if feasible(lo):
        return lo
    while hi - lo > cfg.snr_tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def min_snr_experiment(
    models: Sequence[tuple],  # (label, predictor-or-None)
    cfg: ExperimentConfig,
    channel: ChannelParams,
    trace: Trace,
    mcs: Optional[tuple] = None,
) -> ExperimentResult:
    mcs = mcs or cfg.mcs_list[0]
    rows = []
    for label, model in models:
        for thr in cfg.thresholds:
            snr = min_snr_for_target(model, thr, mcs, cfg, channel, trace)
            rows.append((label, mcs[0].value, mcs[1], thr, snr))
    return ExperimentResult(
        name="min_snr",
        columns=("model", "modulation", "code_rate", "threshold", "min_snr_db"),
        rows=rows,
        provenance=_provenance(
            "min_snr",
            cfg.seed,
            steps=cfg.steps,
            target=cfg.target_plr,
            thresholds=cfg.thresholds,
            mcs=mcs,
            bounds=cfg.snr_bounds,
            tol=cfg.snr_tol,
        ),
    )


# ============================================================
# Coverage
# ============================================================


def coverage_experiment(
    entries: Sequence[tuple],  # (label, snr_req_db)
    link: LinkBudgetParams,
    cfg: ExperimentConfig,
    grid_step_m: float = 10.0,
) -> ExperimentResult:
    rows = []
    distances = np.arange(10.0, 5000.0 + 1e-9, grid_step_m)
    for label, snr_req in entries:
        if not math.isfinite(snr_req):
            continue  # infeasible model: no coverage entry
        pl_max = max_path_loss_db(snr_req, link)
        d_max = max_coverage_distance(cfg.p_star, pl_max, link)
        for d in distances:
            rows.append(
                (label, snr_req, pl_max, d_max, float(d), coverage_probability(float(d), pl_max, link))
            )
    return ExperimentResult(
        name="coverage",
        columns=("model", "snr_req_db", "pl_max_db", "d_max_m", "distance_m", "p_cov"),
        rows=rows,
        provenance=_provenance(
            "coverage",
            cfg.seed,
            p_star=cfg.p_star,
            entries=tuple(entries),
            link=str(link),
        ),
    )


# ============================================================
# Threshold sweep across MCS (restoration rate / effective PLR)
# ============================================================


def threshold_sweep_experiment(
    models: Sequence[tuple],
    cfg: ExperimentConfig,
    channel: ChannelParams,
    trace: Trace,
) -> ExperimentResult:
    seed = _seed_for("threshold_sweep", cfg.seed)
    rows = []
    for mod, rate in cfg.mcs_list:
        params = replace(
            channel, mu_db=cfg.sweep_snr_db, modulation=mod, code_rate=rate, seed=seed
        )
        losses = simulate_losses(params, cfg.steps)
        for label, model in models:
            for thr in cfg.thresholds:
                if model is None:
                    rows.append(
                        (label, mod.value, rate, cfg.sweep_snr_db, thr,
                         losses.raw_plr, losses.raw_plr, 0.0)
                    )
                    continue
                rcfg = RestorationConfig(threshold=thr, history_len=cfg.history_len)
                st = run_restoration(trace, losses.mask, model, rcfg)
                rows.append(
                    (label, mod.value, rate, cfg.sweep_snr_db, thr,
                     losses.raw_plr, st.effective_plr, st.restoration_rate)
                )
    return ExperimentResult(
        name="threshold_sweep",
        columns=(
            "model", "modulation", "code_rate", "snr_db", "threshold",
            "raw_plr", "effective_plr", "restoration_rate",
        ),
        rows=rows,
        provenance=_provenance(
            "threshold_sweep",
            cfg.seed,
            steps=cfg.steps,
            snr=cfg.sweep_snr_db,
            thresholds=cfg.thresholds,
            mcs=cfg.mcs_list,
        ),
    )


# ============================================================
# Rolling MSE and force dynamics
# ============================================================


def rolling_mse(errors: np.ndarray, window: int = 5000) -> np.ndarray:
    """Trailing mean over `window` samples; output length n - window + 1."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 1:
        raise ValueError(f"errors must be 1-D, got {errors.shape}")
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if errors.size < window:
        raise ValueError(f"{errors.size} samples < window {window}")
    c = np.concatenate([[0.0], np.cumsum(errors)])
    return (c[window:] - c[:-window]) / window


def rolling_mse_experiment(
    models: Sequence[tuple],
    cfg: ExperimentConfig,
    trace: Trace,
    stride: int = 1,
) -> tuple[ExperimentResult, dict]:
    """Rolling single-step MSE per model. Also returns the raw per-step
    error sequences keyed by label (reused by force_dynamics)."""
    rows = []
    err_map = {}
    for label, model in models:
        if model is None:
            continue
        _, errs = single_step_errors(model, trace, cfg.history_len)
        err_map[label] = errs
        roll = rolling_mse(errs, cfg.rolling_window)
        for i in range(0, roll.size, stride):
            rows.append((label, i, roll[i]))
    return (
        ExperimentResult(
            name="rolling_mse",
            columns=("model", "start_step", "mse"),
            rows=rows,
            provenance=_provenance(
                "rolling_mse", cfg.seed, window=cfg.rolling_window, steps=cfg.steps
            ),
        ),
        err_map,
    )


def force_dynamics(
    trace: Trace,
    errors: np.ndarray,
    history_len: int,
    window: int,
    quantile: float = 0.75,
) -> dict:
    """Split predicted steps into easy/difficult by rolling MSE and
    report mean |force rate| (N/step) and |jerk| (N/step^2) per region.

    Difficulty of step j is the trailing rolling MSE of the window
    ending at j (first window's value before it is full). Rate and jerk
    are first/second differences of the force magnitude.
    """
    errors = np.asarray(errors, dtype=float)
    fmag = np.linalg.norm(trace.force[history_len:], axis=1)
    if errors.size != fmag.size:
        raise ValueError(f"errors ({errors.size}) must match predicted steps ({fmag.size})")
    roll = rolling_mse(errors, window)
    idx = np.clip(np.arange(errors.size) - window + 1, 0, roll.size - 1)
    difficulty = roll[idx]
    cut = float(np.quantile(difficulty, quantile))
    difficult = difficulty > cut

    rate = np.diff(fmag)
    jerk = np.diff(rate)
    out = {}
    for region, sel in (("easy", ~difficult), ("difficult", difficult)):
        sel_rate = sel[1:]
        sel_jerk = sel[2:]
        out[region] = {
            "steps": int(sel.sum()),
            "mean_abs_rate": float(np.abs(rate[sel_rate]).mean()) if sel_rate.any() else 0.0,
            "mean_abs_jerk": float(np.abs(jerk[sel_jerk]).mean()) if sel_jerk.any() else 0.0,
        }
    return out


def force_dynamics_experiment(
    err_map: dict, cfg: ExperimentConfig, trace: Trace
) -> ExperimentResult:
    rows = []
    for label in sorted(err_map):
        regions = force_dynamics(trace, err_map[label], cfg.history_len, cfg.rolling_window)
        for region in ("easy", "difficult"):
            r = regions[region]
            rows.append((label, region, r["steps"], r["mean_abs_rate"], r["mean_abs_jerk"]))
    return ExperimentResult(
        name="force_dynamics",
        columns=("model", "region", "steps", "mean_abs_rate", "mean_abs_jerk"),
        rows=rows,
        provenance=_provenance(
            "force_dynamics", cfg.seed, window=cfg.rolling_window, quantile=0.75
        ),
    )


# ============================================================
# Burst tolerance
# ============================================================


def burst_mask(steps: int, burst_len: int, spacing: int = BURST_SPACING) -> np.ndarray:
    """Deterministic bursts: k consecutive losses every `spacing` steps."""
    if burst_len >= spacing:
        raise ValueError(f"burst_len {burst_len} must be < spacing {spacing}")
    mask = np.zeros(steps, dtype=bool)
    for start in range(spacing, steps - burst_len + 1, spacing):
        mask[start : start + burst_len] = True
    return mask


def burst_experiment(
    models: Sequence[tuple],
    cfg: ExperimentConfig,
    trace: Trace,
    t_thr: float,
    snr_db: Optional[float] = None,
) -> ExperimentResult:
    """Effective PLR vs injected burst length on an otherwise loss-free
    channel (the stated SNR is provenance only; losses are injected)."""
    snr = cfg.sweep_snr_db if snr_db is None else snr_db
    rows = []
    for label, model in models:
        if model is None:
            continue
        for k in cfg.burst_lengths:
            mask = burst_mask(cfg.steps, int(k))
            rcfg = RestorationConfig(threshold=t_thr, history_len=cfg.history_len)
            st = run_restoration(trace, mask, model, rcfg)
            rows.append((label, snr, t_thr, int(k), st.lost, st.restored, st.effective_plr))
    return ExperimentResult(
        name="burst",
        columns=("model", "snr_db", "threshold", "burst_len", "lost", "restored", "effective_plr"),
        rows=rows,
        provenance=_provenance(
            "burst", cfg.seed, steps=cfg.steps, lengths=cfg.burst_lengths, thr=t_thr
        ),
    )


# ============================================================
# Network capacity
# ============================================================


def network_capacity(
    model: Optional[Predictor],
    snr_db: float,
    bandwidths: Sequence[float],
    cfg: ExperimentConfig,
    channel: ChannelParams,
    trace: Optional[Trace] = None,
    t_thr: float = 0.1,
    mcs: Optional[tuple] = None,
) -> list[tuple]:
    """Admitted users per bandwidth.

    Users are i.i.d. at a fixed mean SNR (independent channels), so
    per-user statistics come from a small pool of simulated users.
    Admission: per-user goodput b(M)*R*(B/n)*(1 - raw PLR) >= 256 kbit/s
    and pooled effective PLR <= target. Restored packets are local
    reconstructions, so they enter reliability, not goodput.
    """
    mod, rate = mcs or cfg.mcs_list[0]
    seed = _seed_for("capacity", cfg.seed)
    total_lost = total_unrestored = total_steps = 0
    for u in range(cfg.capacity_eval_users):
        params = replace(
            channel, mu_db=snr_db, modulation=mod, code_rate=rate, seed=seed + u
        )
        losses = simulate_losses(params, cfg.steps)
        lost = int(losses.mask.sum())
        total_lost += lost
        total_steps += cfg.steps
        if model is None:
            total_unrestored += lost
        else:
            rcfg = RestorationConfig(threshold=t_thr, history_len=cfg.history_len)
            st = run_restoration(trace, losses.mask, model, rcfg)
            total_unrestored += st.lost - st.restored
    raw_plr = total_lost / total_steps
    eff_plr = total_unrestored / total_steps
    reliable = eff_plr <= cfg.target_plr
    eta = spectral_efficiency(mod, rate)
    out = []
    for b in bandwidths:
        ceiling = int(math.floor(eta * b / USER_RATE_BITS))
        users = int(math.floor(eta * b * (1.0 - raw_plr) / USER_RATE_BITS)) if reliable else 0
        out.append((snr_db, float(b), ceiling, reliable, users))
    return out


def capacity_experiment(
    models: Sequence[tuple],
    cfg: ExperimentConfig,
    channel: ChannelParams,
    trace: Trace,
    t_thr: float = 0.1,
) -> ExperimentResult:
    rows = []
    for label, model in models:
        for snr, bw, ceiling, reliable, users in network_capacity(
            model, cfg.capacity_snr_db, cfg.bandwidths, cfg, channel, trace, t_thr
        ):
            rows.append((label, snr, bw, ceiling, reliable, users))
    return ExperimentResult(
        name="capacity",
        columns=("model", "snr_db", "bandwidth_hz", "rate_ceiling", "reliable", "users"),
        rows=rows,
        provenance=_provenance(
            "capacity",
            cfg.seed,
            steps=cfg.steps,
            snr=cfg.capacity_snr_db,
            bandwidths=tuple(cfg.bandwidths),
            users=cfg.capacity_eval_users,
        ),
    )
