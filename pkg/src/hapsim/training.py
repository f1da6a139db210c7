"""Training loop for the force estimator.

Scheduled-sampling rollouts: each example unrolls the model H steps,
and after every step one Bernoulli(eps_e) draw per example decides
whether the sliding force window receives the ground-truth sample or
the model's own estimate (eps_e = 1 - e/E decays linearly). The
composite loss mixes plain MSE with a relative term restricted to
samples whose true magnitude exceeds tau. Gradients come from the tape
in `autodiff`; Adam with stepwise-halved learning rate does the update.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from hapsim import autodiff as ad
from hapsim.model import Normalization, XhapModel
from hapsim.traces import Trace, trim_trace

DIVERGENCE_LIMIT = 1e6
STD_FLOOR = 1e-6  # constant channels would otherwise zero-divide


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr0: float = 1e-3
    lr_step: int = 10  # epochs between halvings
    lr_gamma: float = 0.5
    lambda_mse: float = 0.5
    lambda_rel: float = 0.5
    tau: float = 0.01  # relative-loss support threshold [N]
    rollout_horizon: int = 5  # H
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    window_stride: int = 1  # training anchor subsampling (desk knob)
    val_stride: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr0 <= 0 or not 0 < self.lr_gamma <= 1 or self.lr_step < 1:
            raise ValueError("bad learning-rate schedule")
        if self.lambda_mse < 0 or self.lambda_rel < 0:
            raise ValueError("loss weights must be >= 0")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.rollout_horizon < 1:
            raise ValueError("rollout_horizon must be >= 1")
        if self.window_stride < 1 or self.val_stride < 1:
            raise ValueError("strides must be >= 1")


def teacher_forcing_prob(epoch: int, total_epochs: int) -> float:
    """Linear decay eps_e = 1 - e/E, epochs indexed from 0."""
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return 1.0 - epoch / total_epochs


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr0 * cfg.lr_gamma ** (epoch // cfg.lr_step)


# ============================================================
# Composite loss (single window, analytic gradient)
# ============================================================


def composite_loss(
    pred: np.ndarray,
    truth: np.ndarray,
    lambda_mse: float = 0.5,
    lambda_rel: float = 0.5,
    tau: float = 0.01,
) -> tuple[float, np.ndarray]:
    """L = lam_mse * mean(diff^2) + lam_rel * mean_{|truth|>tau} |diff|/|truth|.

    Means run over all H*3 entries for the MSE term and over the
    support set S for the relative term; an empty S contributes 0.
    Returns the loss and its gradient with respect to `pred`.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ValueError(f"pred/truth must both be (H, 3), got {pred.shape}/{truth.shape}")
    diff = pred - truth
    n = diff.size
    mse = float((diff**2).sum()) / n
    grad = lambda_mse * 2.0 * diff / n
    mask = np.abs(truth) > tau
    ns = int(mask.sum())
    rel = 0.0
    if ns > 0:
        denom = np.abs(truth[mask])
        rel = float((np.abs(diff[mask]) / denom).sum()) / ns
        g = np.zeros_like(diff)
        g[mask] = np.sign(diff[mask]) / (denom * ns)
        grad = grad + lambda_rel * g
    return lambda_mse * mse + lambda_rel * rel, grad


# ============================================================
# Normalization and window extraction
# ============================================================


def fit_normalization(train_traces: Sequence[Trace]) -> Normalization:
    """Per-channel z-score statistics over the trimmed training traces."""
    forces = np.concatenate([trim_trace(tr).force for tr in train_traces])
    ops = np.concatenate([trim_trace(tr).operator_stream() for tr in train_traces])
    return Normalization(
        force_mean=forces.mean(axis=0),
        force_std=np.maximum(forces.std(axis=0), STD_FLOOR),
        op_mean=ops.mean(axis=0),
        op_std=np.maximum(ops.std(axis=0), STD_FLOOR),
    )


@dataclass
class _Anchors:
    """Rollout examples as (trace, anchor) pairs over trimmed arrays."""

    forces: list
    ops: list
    pairs: np.ndarray  # (N, 2) ints

    def __len__(self) -> int:
        return len(self.pairs)


def _collect_anchors(
    traces: Sequence[Trace], history_len: int, horizon: int, stride: int
) -> _Anchors:
    forces, ops, pairs = [], [], []
    for k, tr in enumerate(traces):
        trimmed = trim_trace(tr)
        u = trimmed.n
        first, last = history_len - 1, u - 1 - horizon
        if last < first:
            raise ValueError(
                f"trace {k} too short: {u} usable samples for L={history_len}, H={horizon}"
            )
        forces.append(trimmed.force)
        ops.append(trimmed.operator_stream())
        for t in range(first, last + 1, stride):
            pairs.append((k, t))
    if not pairs:
        raise ValueError("no training windows")
    return _Anchors(forces=forces, ops=ops, pairs=np.asarray(pairs, dtype=int))


def _gather(
    anchors: _Anchors, idx: np.ndarray, history_len: int, horizon: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch arrays: x_top0 (B,L,3), op block (B,L+H-1,6), truth (B,H,3)."""
    b = len(idx)
    x_top = np.empty((b, history_len, 3))
    opb = np.empty((b, history_len + horizon - 1, 6))
    truth = np.empty((b, horizon, 3))
    for i, j in enumerate(idx):
        k, t = anchors.pairs[j]
        f, o = anchors.forces[k], anchors.ops[k]
        x_top[i] = f[t - history_len + 1 : t + 1]
        opb[i] = o[t - history_len + 2 : t + 1 + horizon]
        truth[i] = f[t + 1 : t + 1 + horizon]
    return x_top, opb, truth


# ============================================================
# Tape graph
# ============================================================


def _params_to_vars(model: XhapModel, requires_grad: bool) -> dict:
    return {name: ad.leaf(arr, requires_grad=requires_grad) for name, arr in model.parameters()}


def _gru_tape(p: dict, prefix: str, x, batch: int, length: int):
    """Batched GRU on the tape. `x` is a Var (B,L,din) already normalized.
    Returns (all_states list of (B,D) Vars)."""
    w_z, u_z, b_z = p[f"{prefix}.w_z"], p[f"{prefix}.u_z"], p[f"{prefix}.b_z"]
    w_r, u_r, b_r = p[f"{prefix}.w_r"], p[f"{prefix}.u_r"], p[f"{prefix}.b_r"]
    w_h, u_h, b_h = p[f"{prefix}.w_h"], p[f"{prefix}.u_h"], p[f"{prefix}.b_h"]
    d = u_z.value.shape[0]
    xz = ad.add(ad.matmul(x, w_z), b_z)  # (B,L,D)
    xr = ad.add(ad.matmul(x, w_r), b_r)
    xh = ad.add(ad.matmul(x, w_h), b_h)
    h = ad.leaf(np.zeros((batch, d)))
    states = []
    for t in range(length):
        sl = (slice(None), t, slice(None))
        z = ad.sigmoid(ad.add(xz[sl], ad.matmul(h, u_z)))
        r = ad.sigmoid(ad.add(xr[sl], ad.matmul(h, u_r)))
        n = ad.tanh(ad.add(xh[sl], ad.matmul(ad.mul(r, h), u_h)))
        h = ad.add(ad.mul(ad.sub(1.0, z), h), ad.mul(z, n))
        states.append(h)
    return states


def _attention_tape(p: dict, r_top, s_op_stack, heads: int, batch: int, length: int):
    """r_top (B,D), s_op_stack (B,L,D) -> fused (B,D)."""
    d = p["attention.wq"].value.shape[0]
    d_h = d // heads
    q = ad.reshape(ad.matmul(r_top, p["attention.wq"]), (batch, 1, heads, d_h))
    k = ad.reshape(ad.matmul(s_op_stack, p["attention.wk"]), (batch, length, heads, d_h))
    v = ad.reshape(ad.matmul(s_op_stack, p["attention.wv"]), (batch, length, heads, d_h))
    scores = ad.mul(ad.vsum(ad.mul(k, q), axis=3), 1.0 / math.sqrt(d_h))  # (B,L,h)
    alphas = ad.softmax(scores, axis=1)
    fused = ad.vsum(ad.mul(v, ad.reshape(alphas, (batch, length, heads, 1))), axis=1)
    return ad.matmul(ad.reshape(fused, (batch, d)), p["attention.wo"])


def _forward_tape(p: dict, model: XhapModel, x_top_n, x_op_n, batch: int):
    """One batched single-step forward in normalized space -> y_n (B,3)."""
    cfg = model.config
    length = cfg.history_len
    top_states = _gru_tape(p, "gru_top", x_top_n, batch, length)
    r_top = top_states[-1]
    op_states = _gru_tape(p, "gru_op", x_op_n, batch, length)
    s_op = ad.concat(
        [ad.reshape(s, (batch, 1, cfg.latent)) for s in op_states], axis=1
    )
    fused = _attention_tape(p, r_top, s_op, cfg.heads, batch, length)
    z = ad.concat([r_top, fused], axis=1)  # (B, 2D)
    hidden = ad.relu(ad.add(ad.matmul(z, p["head.w1"]), p["head.b1"]))
    return ad.add(ad.matmul(hidden, p["head.w2"]), p["head.b2"])


def rollout_predictions(
    p: dict,
    model: XhapModel,
    x_top0: np.ndarray,
    op_block: np.ndarray,
    truth: np.ndarray,
    tf_mask: np.ndarray,
):
    """Teacher-forced H-step rollout on the tape.

    tf_mask (B,H) True means the window receives ground truth after
    that step; False feeds back the model's estimate (gradient flows
    through the feedback path into later steps). Returns raw-unit
    prediction Vars, one (B,3) per step.
    """
    nz = model.norm
    cfg = model.config
    b, horizon = truth.shape[0], truth.shape[1]
    inv_f = 1.0 / nz.force_std
    window = ad.leaf((x_top0 - nz.force_mean) * inv_f)  # (B,L,3) normalized
    op_n = (op_block - nz.op_mean) / nz.op_std
    truth_n = (truth - nz.force_mean) * inv_f
    preds_raw = []
    for j in range(horizon):
        x_op = ad.leaf(op_n[:, j : j + cfg.history_len])
        y_n = _forward_tape(p, model, window, x_op, b)
        preds_raw.append(ad.add(ad.mul(y_n, nz.force_std), nz.force_mean))
        if j + 1 < horizon:
            m = tf_mask[:, j : j + 1].astype(float)  # (B,1)
            mixed = ad.add(ad.mul(y_n, 1.0 - m), truth_n[:, j] * m)
            window = ad.concat(
                [window[(slice(None), slice(1, None))], ad.reshape(mixed, (b, 1, 3))],
                axis=1,
            )
    return preds_raw


def batch_loss(
    model: XhapModel,
    x_top0: np.ndarray,
    op_block: np.ndarray,
    truth: np.ndarray,
    tf_mask: np.ndarray,
    cfg: TrainConfig,
    with_grads: bool = True,
):
    """Mean composite loss over a batch of rollouts.

    Returns (loss value, {param name: gradient}) - gradients None when
    with_grads is False. The relative term weights each window by its
    own support size, matching composite_loss window-for-window.
    """
    p = _params_to_vars(model, requires_grad=with_grads)
    preds = rollout_predictions(p, model, x_top0, op_block, truth, tf_mask)
    b, horizon = truth.shape[0], truth.shape[1]
    pred = ad.concat([ad.reshape(y, (b, 1, 3)) for y in preds], axis=1)  # (B,H,3)
    diff = ad.sub(pred, truth)
    n_entries = horizon * 3
    mse_part = ad.mul(ad.vsum(ad.mul(diff, diff)), 1.0 / (n_entries * b))

    mask = np.abs(truth) > cfg.tau
    support = mask.sum(axis=(1, 2))  # per window
    w = np.zeros_like(truth)
    nonzero = support > 0
    if nonzero.any():
        denom = np.where(mask, np.abs(truth), 1.0)
        w = mask / (denom * np.maximum(support, 1)[:, None, None])
        w[~nonzero] = 0.0
    rel_part = ad.mul(ad.vsum(ad.mul(ad.absolute(diff), w)), 1.0 / b)

    loss = ad.add(ad.mul(mse_part, cfg.lambda_mse), ad.mul(rel_part, cfg.lambda_rel))
    if not with_grads:
        return float(loss.value), None
    ad.backward(loss)
    grads = {name: var.grad for name, var in p.items()}
    for name, g in grads.items():
        if g is None:  # parameter unused by this graph; treat as zero
            grads[name] = np.zeros_like(p[name].value)
    return float(loss.value), grads


def predict_batch(model: XhapModel, x_top: np.ndarray, x_op: np.ndarray) -> np.ndarray:
    """Batched single-step predictions in raw units (training internals;
    the public inference API stays single-window)."""
    nz = model.norm
    b = x_top.shape[0]
    p = _params_to_vars(model, requires_grad=False)
    xt = ad.leaf((x_top - nz.force_mean) / nz.force_std)
    xo = ad.leaf((x_op - nz.op_mean) / nz.op_std)
    y_n = _forward_tape(p, model, xt, xo, b)
    return y_n.value * nz.force_std + nz.force_mean


# ============================================================
# Adam
# ============================================================


class Adam:
    """Adam with bias correction; state keyed by parameter name."""

    def __init__(self, model: XhapModel, cfg: TrainConfig):
        self.beta1, self.beta2, self.eps = cfg.beta1, cfg.beta2, cfg.adam_eps
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in model.parameters()}
        self.v = {name: np.zeros_like(a) for name, a in model.parameters()}

    def step(self, model: XhapModel, grads: dict, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, arr in model.parameters():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            arr -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        model.__dict__.pop("_recur_cache", None)  # weights moved


# ============================================================
# Training loop
# ============================================================


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)  # (epoch, train_loss, val_mse, eps, lr)
    best_epoch: int = -1
    best_val_mse: float = math.inf

    def to_csv(self, path) -> None:
        lines = ["epoch,train_loss,val_mse,eps,lr"]
        for e, tl, vm, eps, lr in self.rows:
            lines.append(f"{e},{tl:.9g},{vm:.9g},{eps:.9g},{lr:.9g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class TrainResult:
    model: XhapModel  # best-validation snapshot
    history: TrainHistory


def _val_mse(model: XhapModel, anchors: _Anchors, history_len: int, batch: int = 256) -> float:
    idx = np.arange(len(anchors))
    total, count = 0.0, 0
    for s in range(0, len(idx), batch):
        part = idx[s : s + batch]
        x_top, opb, truth = _gather(anchors, part, history_len, 1)
        pred = predict_batch(model, x_top, opb[:, :history_len])
        total += float(((pred - truth[:, 0]) ** 2).sum())
        count += truth[:, 0].size
    return total / count


def train(
    model: XhapModel,
    train_traces: Sequence[Trace],
    val_traces: Sequence[Trace],
    cfg: TrainConfig,
    log=None,
) -> TrainResult:
    """Full training run; returns the best-validation snapshot.

    Deterministic for fixed (model seed, traces, cfg.seed): epoch
    shuffles and teacher-forcing draws come from one seeded generator.
    Raises TrainingDiverged when a batch loss exceeds 1e6 or goes
    non-finite.
    """
    length = model.config.history_len
    horizon = cfg.rollout_horizon
    model.norm = fit_normalization(train_traces)
    anchors = _collect_anchors(train_traces, length, horizon, cfg.window_stride)
    val_anchors = _collect_anchors(val_traces, length, 1, cfg.val_stride)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model, cfg)
    hist = TrainHistory()
    best: Optional[XhapModel] = None

    for epoch in range(cfg.epochs):
        eps = teacher_forcing_prob(epoch, cfg.epochs)
        lr = learning_rate(cfg, epoch)
        order = rng.permutation(len(anchors))
        epoch_loss, seen = 0.0, 0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            x_top, opb, truth = _gather(anchors, idx, length, horizon)
            tf_mask = rng.uniform(size=(len(idx), horizon)) < eps
            loss, grads = batch_loss(model, x_top, opb, truth, tf_mask, cfg)
            if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                raise TrainingDiverged(
                    f"loss {loss} at epoch {epoch} batch {s // cfg.batch_size}"
                )
            opt.step(model, grads, lr)
            epoch_loss += loss * len(idx)
            seen += len(idx)
        train_loss = epoch_loss / seen
        val_mse = _val_mse(model, val_anchors, length)
        hist.rows.append((epoch, train_loss, val_mse, eps, lr))
        if val_mse < hist.best_val_mse:
            hist.best_val_mse = val_mse
            hist.best_epoch = epoch
            best = copy.deepcopy(model)
        if log is not None:
            log(f"epoch {epoch}: train {train_loss:.6g} val {val_mse:.6g} eps {eps:.3f} lr {lr:.3g}")
    assert best is not None
    return TrainResult(model=best, history=hist)
