"""Runtime packet-loss restoration.

A bounded history buffer shadows the delivered force stream. Delivered
packets enter the buffer as-is; once the buffer has filled, each lost
packet is predicted from the last L buffered samples plus the aligned
(ground-truth) operator stream, and the estimate replaces the packet
when its mean per-channel deviation from the true sample passes the
acceptance criterion. Losses before first fill, and estimates that
fail the criterion, contribute zeros - identical to what the remote
side would render without restoration.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np

from hapsim.model import XhapModel
from hapsim.traces import Trace, trim_trace

REL_MAG_FLOOR = 0.01  # [N]; keeps the relative criterion sane near zero


class Criterion(Enum):
    ABSOLUTE = "absolute"
    RELATIVE = "relative"


@dataclass
class RestorationConfig:
    threshold: float = 0.1  # T_thr [N], or the fraction for RELATIVE
    criterion: Criterion = Criterion.ABSOLUTE
    history_len: int = 64  # L, buffer length
    append_failed_estimates: bool = False  # feed rejected estimates back anyway

    def __post_init__(self) -> None:
        if self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if self.history_len < 1:
            raise ValueError(f"history_len must be >= 1, got {self.history_len}")


@dataclass
class RestorationStats:
    total: int
    lost: int
    restored: int
    threshold: float
    criterion: str
    model: str
    errors: np.ndarray = field(default_factory=lambda: np.empty(0))  # per attempted packet

    @property
    def effective_plr(self) -> float:
        return (self.lost - self.restored) / max(1, self.total)

    @property
    def restoration_rate(self) -> float:
        return self.restored / self.lost if self.lost > 0 else 0.0


def restoration_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute per-channel deviation: e = (1/3) sum_c |est_c - x_c|."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != (3,) or truth.shape != (3,):
        raise ValueError("estimate and truth must be 3-vectors")
    return float(np.abs(estimate - truth).mean())


def passes_criterion(
    error: float, truth: np.ndarray, cfg: RestorationConfig
) -> bool:
    """Boundary-inclusive acceptance test for one restored packet."""
    if cfg.criterion is Criterion.ABSOLUTE:
        return error <= cfg.threshold
    scale = max(float(np.abs(np.asarray(truth, dtype=float)).mean()), REL_MAG_FLOOR)
    return error <= cfg.threshold * scale


def hold_last_predict(buffer: np.ndarray) -> np.ndarray:
    """Baseline: repeat the newest buffered sample."""
    buffer = np.asarray(buffer, dtype=float)
    if buffer.ndim != 2 or buffer.shape[0] < 1 or buffer.shape[1] != 3:
        raise ValueError(f"buffer must be (L >= 1, 3), got {buffer.shape}")
    return buffer[-1].copy()


class HoldLastPredictor:
    """Adapter giving the baseline the model's predict() signature."""

    name = "hold_last"

    def predict(self, x_top: np.ndarray, x_op: np.ndarray) -> np.ndarray:
        return hold_last_predict(x_top)


Predictor = Union[XhapModel, HoldLastPredictor, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _predict_fn(model: Predictor) -> tuple[Callable, str]:
    if hasattr(model, "predict"):
        return model.predict, getattr(model, "name", type(model).__name__.lower())
    if callable(model):
        return model, getattr(model, "__name__", "callable")
    raise TypeError(f"model must expose predict(x_top, x_op) or be callable, got {model!r}")


def run_restoration(
    trace: Trace,
    losses: np.ndarray,
    model: Predictor,
    cfg: RestorationConfig,
    trimmed: bool = True,
    abort_unrestored: Optional[int] = None,
) -> RestorationStats:
    """Stream the trace through the loss mask and restore what passes.

    `losses` must be one bool per trace sample (the trace is trimmed
    first unless `trimmed`). The operator stream is always ground truth;
    only the force buffer degrades. `abort_unrestored` stops early once
    that many losses have failed restoration (the caller knows the
    final effective PLR can only grow; used by feasibility searches).
    Returns counters plus the per-attempt error trace.
    """
    tr = trace if trimmed else trim_trace(trace)
    losses = np.asarray(losses, dtype=bool)
    if losses.shape != (tr.n,):
        raise ValueError(f"loss mask length {losses.shape} != trace length {tr.n}")
    length = cfg.history_len
    if tr.n <= length:
        raise ValueError(f"trace of {tr.n} samples shorter than buffer {length}")
    predict, model_name = _predict_fn(model)
    ops = tr.operator_stream()
    forces = tr.force

    buf: deque = deque(maxlen=length)
    filled = False
    total = lost = restored = 0
    errors = []
    for i in range(tr.n):
        total += 1
        if not losses[i]:
            buf.append(forces[i])
            if len(buf) == length:
                filled = True
            continue
        lost += 1
        if not filled:
            buf.append(np.zeros(3))
            continue
        x_top = np.asarray(buf)
        x_op = ops[i - length + 1 : i + 1]
        estimate = np.asarray(predict(x_top, x_op), dtype=float)
        err = restoration_error(estimate, forces[i])
        errors.append(err)
        if passes_criterion(err, forces[i], cfg):
            restored += 1
            buf.append(estimate)
        elif cfg.append_failed_estimates:
            buf.append(estimate)
        else:
            buf.append(np.zeros(3))
        if abort_unrestored is not None and lost - restored >= abort_unrestored:
            break
    return RestorationStats(
        total=total,
        lost=lost,
        restored=restored,
        threshold=cfg.threshold,
        criterion=cfg.criterion.value,
        model=model_name,
        errors=np.asarray(errors),
    )


def write_stats_csv(stats_list, path) -> None:
    """Per-run stats: total,lost,restored,effective_plr,restoration_rate,threshold,criterion,model."""
    lines = ["total,lost,restored,effective_plr,restoration_rate,threshold,criterion,model"]
    for s in stats_list:
        lines.append(
            f"{s.total},{s.lost},{s.restored},{s.effective_plr:.9g},"
            f"{s.restoration_rate:.9g},{s.threshold:.9g},{s.criterion},{s.model}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
