"""Cross-attention GRU force estimator.

Two GRU encoders read the recent force history (L x 3) and the aligned
operator position/velocity stream (L x 6). The force encoder's final
hidden state queries the operator encoding through multi-head
cross-attention; the fused vector feeds a small ReLU head that predicts
the next force sample. Normalization statistics live inside the model,
so all public entry points take and return raw units (N, m, m/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

FORCE_DIM = 3
OP_DIM = 6


@dataclass
class ModelConfig:
    history_len: int = 64  # L, samples per window
    d_top: int = FORCE_DIM
    d_op: int = OP_DIM
    latent: int = 128  # D, encoder hidden width
    heads: int = 8
    hidden: int = 32  # head MLP width

    def __post_init__(self) -> None:
        if self.history_len < 1:
            raise ValueError(f"history_len must be >= 1, got {self.history_len}")
        if self.latent % self.heads != 0:
            raise ValueError(
                f"latent ({self.latent}) must be divisible by heads ({self.heads})"
            )
        if min(self.d_top, self.d_op, self.latent, self.heads, self.hidden) < 1:
            raise ValueError("all dimensions must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.latent // self.heads


@dataclass
class GruParams:
    """Single-layer GRU, update/reset/candidate convention.

    z_t = sig(x W_z + h U_z + b_z); r_t = sig(x W_r + h U_r + b_r)
    n_t = tanh(x W_h + (r_t*h) U_h + b_h); h_t = (1-z_t)*h + z_t*n_t
    """

    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray


@dataclass
class AttentionParams:
    """Per-head projections stored as column blocks: head i occupies
    columns i*d_h..(i+1)*d_h of wq/wk/wv."""

    wq: np.ndarray  # (D, D)
    wk: np.ndarray  # (D, D)
    wv: np.ndarray  # (D, D)
    wo: np.ndarray  # (D, D)
    heads: int = 1

    def __post_init__(self) -> None:
        if self.wq.shape[0] % self.heads != 0:
            raise ValueError(
                f"latent {self.wq.shape[0]} not divisible by heads {self.heads}"
            )


@dataclass
class HeadParams:
    w1: np.ndarray  # (2D, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, 3)
    b2: np.ndarray


@dataclass
class Normalization:
    """Per-channel z-score statistics from the training split."""

    force_mean: np.ndarray = field(default_factory=lambda: np.zeros(FORCE_DIM))
    force_std: np.ndarray = field(default_factory=lambda: np.ones(FORCE_DIM))
    op_mean: np.ndarray = field(default_factory=lambda: np.zeros(OP_DIM))
    op_std: np.ndarray = field(default_factory=lambda: np.ones(OP_DIM))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # logistic via tanh: stable for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# ============================================================
# Model container
# ============================================================


@dataclass
class XhapModel:
    config: ModelConfig
    gru_top: GruParams
    gru_op: GruParams
    attention: AttentionParams
    head: HeadParams
    norm: Normalization

    name = "xhap"  # label used in experiment/restoration CSVs

    @staticmethod
    def initialize(config: ModelConfig, seed: int = 0) -> "XhapModel":
        """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) matrices, zero biases.

        Draw order follows parameters(); deterministic per seed.
        """
        rng = np.random.default_rng(seed)
        d, dt, do = config.latent, config.d_top, config.d_op
        hd, hdn = config.hidden, config.latent

        def mat(fan_in: int, shape: tuple) -> np.ndarray:
            bound = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        def gru(d_in: int) -> GruParams:
            return GruParams(
                w_z=mat(d_in, (d_in, d)),
                u_z=mat(d, (d, d)),
                b_z=np.zeros(d),
                w_r=mat(d_in, (d_in, d)),
                u_r=mat(d, (d, d)),
                b_r=np.zeros(d),
                w_h=mat(d_in, (d_in, d)),
                u_h=mat(d, (d, d)),
                b_h=np.zeros(d),
            )

        gru_top = gru(dt)
        gru_op = gru(do)
        att = AttentionParams(
            wq=mat(d, (d, d)),
            wk=mat(d, (d, d)),
            wv=mat(d, (d, d)),
            wo=mat(d, (d, d)),
            heads=config.heads,
        )
        head = HeadParams(
            w1=mat(2 * d, (2 * d, hd)),
            b1=np.zeros(hd),
            w2=mat(hd, (hd, FORCE_DIM)),
            b2=np.zeros(FORCE_DIM),
        )
        return XhapModel(
            config=config,
            gru_top=gru_top,
            gru_op=gru_op,
            attention=att,
            head=head,
            norm=Normalization(),
        )

    def parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        """Trainable tensors in a fixed, documented order."""
        for prefix, g in (("gru_top", self.gru_top), ("gru_op", self.gru_op)):
            for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"):
                yield f"{prefix}.{name}", getattr(g, name)
        for name in ("wq", "wk", "wv", "wo"):
            yield f"attention.{name}", getattr(self.attention, name)
        for name in ("w1", "b1", "w2", "b2"):
            yield f"head.{name}", getattr(self.head, name)

    def num_params(self) -> int:
        return sum(a.size for _, a in self.parameters())

    def predict(self, x_top: np.ndarray, x_op: np.ndarray) -> np.ndarray:
        return xhap_forward(self, x_top, x_op)


# ============================================================
# Forward pass
# ============================================================


def gru_forward(params: GruParams, x: np.ndarray) -> np.ndarray:
    """Run the GRU over (L, d_in); returns all hidden states (L, D).

    Initial hidden state is zero. Input projections for every step are
    batched up front; the recurrence itself is inherently sequential.
    """
    if x.ndim != 2:
        raise ValueError(f"expected (L, d_in), got {x.shape}")
    length = x.shape[0]
    d = params.u_z.shape[0]
    xz = x @ params.w_z + params.b_z
    xr = x @ params.w_r + params.b_r
    xh = x @ params.w_h + params.b_h
    u_zr = np.concatenate([params.u_z, params.u_r], axis=1)  # (D, 2D)
    out = np.empty((length, d))
    h = np.zeros(d)
    for t in range(length):
        g = h @ u_zr
        z = _sigmoid(xz[t] + g[:d])
        r = _sigmoid(xr[t] + g[d:])
        n = np.tanh(xh[t] + (r * h) @ params.u_h)
        h = (1.0 - z) * h + z * n
        out[t] = h
    return out


def _pair_cache(p_a: GruParams, p_b: GruParams) -> dict:
    """Weight layouts _paired_gru wants, built once per model.

    logistic(x) = (1 + tanh(x/2)) / 2; the /2 is folded into the gate
    weights here so the step loop never rescales its matmul inputs.
    """
    return {
        "wx_h": (
            (
                0.5 * np.concatenate([p_a.w_z, p_a.w_r], axis=1),
                0.5 * np.concatenate([p_a.b_z, p_a.b_r]),
            ),
            (
                0.5 * np.concatenate([p_b.w_z, p_b.w_r], axis=1),
                0.5 * np.concatenate([p_b.b_z, p_b.b_r]),
            ),
        ),
        "u_zr_h": 0.5
        * np.stack(
            [
                np.concatenate([p_a.u_z, p_a.u_r], axis=1),
                np.concatenate([p_b.u_z, p_b.u_r], axis=1),
            ]
        ),  # (2, D, 2D)
        "u_h": np.stack([p_a.u_h, p_b.u_h]),  # (2, D, D)
    }


def _paired_gru(
    p_a: GruParams,
    p_b: GruParams,
    xa: np.ndarray,
    xb: np.ndarray,
    cache: Optional[dict] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Two same-width GRUs in one step loop (the hot path).

    Identical math to gru_forward, but the recurrences advance together
    with stacked matmuls, roughly halving per-step overhead.
    """
    length = xa.shape[0]
    d = p_a.u_z.shape[0]
    if cache is None:
        cache = _pair_cache(p_a, p_b)
    (wza, bza), (wzb, bzb) = cache["wx_h"]
    u_zr_h = cache["u_zr_h"]
    u_h = cache["u_h"]
    xzr_h = np.empty((length, 2, 1, 2 * d))
    xzr_h[:, 0, 0] = xa @ wza + bza
    xzr_h[:, 1, 0] = xb @ wzb + bzb
    xh = np.empty((length, 2, 1, d))
    xh[:, 0, 0] = xa @ p_a.w_h + p_a.b_h
    xh[:, 1, 0] = xb @ p_b.w_h + p_b.b_h
    out = np.empty((length, 2, d))
    h = np.zeros((2, 1, d))
    zr = np.empty((2, 1, 2 * d))
    n = np.empty((2, 1, d))
    rh = np.empty((2, 1, d))
    z = zr[..., :d]
    r = zr[..., d:]
    matmul, tanh, multiply, subtract = np.matmul, np.tanh, np.multiply, np.subtract
    for t in range(length):
        matmul(h, u_zr_h, out=zr)
        zr += xzr_h[t]
        tanh(zr, out=zr)
        zr += 1.0
        zr *= 0.5
        multiply(r, h, out=rh)
        matmul(rh, u_h, out=n)
        n += xh[t]
        tanh(n, out=n)
        subtract(n, h, out=n)
        n *= z
        h += n
        out[t] = h[:, 0]
    return out[:, 0], out[:, 1]


def cross_attention_fuse(
    r_top: np.ndarray,
    s_op: np.ndarray,
    params: AttentionParams,
    return_weights: bool = False,
):
    """Multi-head cross-attention with r_top as the single query.

    Per head i: q_i = W_Q^(i) r_top, keys/values project the operator
    states, alpha_i = softmax(K_i q_i / sqrt(d_h)), a_i = V_i^T alpha_i;
    heads are concatenated and mixed by W_O. Returns the fused D-vector
    (and the (h, L) attention weights when asked).
    """
    d = params.wq.shape[0]
    r_top = np.asarray(r_top, dtype=float)
    s_op = np.asarray(s_op, dtype=float)
    if r_top.shape != (d,):
        raise ValueError(f"r_top must be ({d},), got {r_top.shape}")
    if s_op.ndim != 2 or s_op.shape[1] != d or s_op.shape[0] < 1:
        raise ValueError(f"s_op must be (L >= 1, {d}), got {s_op.shape}")
    heads = params.heads
    d_h = d // heads
    q = (r_top @ params.wq).reshape(heads, d_h)
    k = (s_op @ params.wk).reshape(-1, heads, d_h)
    v = (s_op @ params.wv).reshape(-1, heads, d_h)
    scores = np.einsum("lhd,hd->hl", k, q) / math.sqrt(d_h)
    alphas = _softmax(scores, axis=1)  # (h, L)
    fused = np.einsum("hl,lhd->hd", alphas, v).reshape(d) @ params.wo
    if return_weights:
        return fused, alphas
    return fused


def _forward_cache(model: XhapModel) -> dict:
    """Per-model recurrence weight layouts, built lazily.

    Valid only while the parameter arrays stay put; the optimizer drops
    it after every in-place update.
    """
    cache = model.__dict__.get("_recur_cache")
    if cache is None:
        cache = _pair_cache(model.gru_top, model.gru_op)
        model._recur_cache = cache
    return cache


def xhap_forward(
    model: XhapModel,
    x_top: np.ndarray,
    x_op: np.ndarray,
    return_attention: bool = False,
):
    """Next-step force prediction from one history window, in raw units.

    x_top: (L, 3) force history [N]; x_op: (L, 6) operator motion
    shifted one step ahead of it, so the last row is the operator
    sample at the step being predicted (the operator side always has
    its own current command). Inputs are z-scored with the model's
    stored statistics and the output is mapped back to newtons.
    """
    cfg = model.config
    x_top = np.asarray(x_top, dtype=float)
    x_op = np.asarray(x_op, dtype=float)
    if x_top.shape != (cfg.history_len, cfg.d_top):
        raise ValueError(
            f"x_top must be ({cfg.history_len}, {cfg.d_top}), got {x_top.shape}"
        )
    if x_op.shape != (cfg.history_len, cfg.d_op):
        raise ValueError(
            f"x_op must be ({cfg.history_len}, {cfg.d_op}), got {x_op.shape}"
        )
    nz = model.norm
    xt = (x_top - nz.force_mean) / nz.force_std
    xo = (x_op - nz.op_mean) / nz.op_std

    top_states, s_op = _paired_gru(model.gru_top, model.gru_op, xt, xo, _forward_cache(model))
    r_top = top_states[-1]
    fused, alphas = cross_attention_fuse(r_top, s_op, model.attention, return_weights=True)
    z = np.concatenate([r_top, fused])
    hidden = np.maximum(0.0, z @ model.head.w1 + model.head.b1)
    y_n = hidden @ model.head.w2 + model.head.b2
    y = y_n * nz.force_std + nz.force_mean
    if return_attention:
        return y, alphas
    return y


def operator_summary(model: XhapModel, x_op: np.ndarray) -> np.ndarray:
    """Final operator-encoder hidden state (diagnostics only; the fused
    path uses the full encoding, not this summary)."""
    nz = model.norm
    xo = (np.asarray(x_op, dtype=float) - nz.op_mean) / nz.op_std
    return gru_forward(model.gru_op, xo)[-1]


def autoregressive_rollout(
    model: XhapModel,
    buffer: np.ndarray,
    op_stream: np.ndarray,
    horizon: int,
) -> np.ndarray:
    """Closed-loop multi-step prediction.

    `buffer` is the (L, 3) force window ending at the current step;
    `op_stream` must hold L + horizon - 1 operator rows: the L rows
    ending at the first predicted step, then one ground-truth row per
    additional rollout step (the operator side never uses estimates).
    Each prediction is appended to the sliding window for the next step.
    """
    cfg = model.config
    length = cfg.history_len
    buffer = np.array(buffer, dtype=float)
    op_stream = np.asarray(op_stream, dtype=float)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if buffer.shape != (length, cfg.d_top):
        raise ValueError(f"buffer must be ({length}, {cfg.d_top}), got {buffer.shape}")
    need = length + horizon - 1
    if op_stream.ndim != 2 or op_stream.shape[1] != cfg.d_op:
        raise ValueError(f"op_stream must be (>= {need}, {cfg.d_op})")
    if op_stream.shape[0] < need:
        raise ValueError(
            f"op stream exhausted: rollout of {horizon} from window {length} "
            f"needs {need} rows, got {op_stream.shape[0]}"
        )
    preds = np.empty((horizon, cfg.d_top))
    for j in range(horizon):
        y = xhap_forward(model, buffer, op_stream[j : j + length])
        preds[j] = y
        buffer = np.vstack([buffer[1:], y])
    return preds


# ============================================================
# Checkpoint text format
# ============================================================

CKPT_HEADER = "xhap-ckpt v1"
_CONFIG_FIELDS = ("history_len", "d_top", "d_op", "latent", "heads", "hidden")


def save_checkpoint(model: XhapModel, path) -> None:
    """Versioned plain-text checkpoint.

    Line 1 is the header; `config k v` lines pin the architecture;
    each `tensor name ndim dims... values...` line stores one array
    row-major at 9 significant digits. Normalization statistics ride
    along as norm.* tensors.
    """
    lines = [CKPT_HEADER]
    for k in _CONFIG_FIELDS:
        lines.append(f"config {k} {getattr(model.config, k)}")
    named = list(model.parameters()) + [
        ("norm.force_mean", model.norm.force_mean),
        ("norm.force_std", model.norm.force_std),
        ("norm.op_mean", model.norm.op_mean),
        ("norm.op_std", model.norm.op_std),
    ]
    for name, arr in named:
        dims = " ".join(str(s) for s in arr.shape)
        vals = " ".join(f"{v:.9g}" for v in arr.ravel())
        lines.append(f"tensor {name} {arr.ndim} {dims} {vals}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> XhapModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CKPT_HEADER:
        got = lines[0] if lines else "<empty>"
        raise ValueError(f"{path}: bad checkpoint header {got!r}, expected {CKPT_HEADER!r}")
    cfg_kv: dict = {}
    tensors: dict = {}
    for ln_no, ln in enumerate(lines[1:], start=2):
        if not ln:
            continue
        parts = ln.split()
        if parts[0] == "config":
            cfg_kv[parts[1]] = int(parts[2])
        elif parts[0] == "tensor":
            name, ndim = parts[1], int(parts[2])
            shape = tuple(int(s) for s in parts[3 : 3 + ndim])
            vals = np.array([float(v) for v in parts[3 + ndim :]])
            if vals.size != int(np.prod(shape)):
                raise ValueError(
                    f"{path}: line {ln_no}: tensor {name} has {vals.size} values, "
                    f"shape {shape} needs {int(np.prod(shape))}"
                )
            tensors[name] = vals.reshape(shape)
        else:
            raise ValueError(f"{path}: line {ln_no}: unknown record {parts[0]!r}")
    missing = [k for k in _CONFIG_FIELDS if k not in cfg_kv]
    if missing:
        raise ValueError(f"{path}: missing config fields {missing}")
    config = ModelConfig(**{k: cfg_kv[k] for k in _CONFIG_FIELDS})
    model = XhapModel.initialize(config, seed=0)
    for name, arr in model.parameters():
        if name not in tensors:
            raise ValueError(f"{path}: missing tensor {name}")
        if tensors[name].shape != arr.shape:
            raise ValueError(
                f"{path}: tensor {name} shape {tensors[name].shape} != {arr.shape}"
            )
        arr[...] = tensors[name]
    for name in ("force_mean", "force_std", "op_mean", "op_std"):
        key = f"norm.{name}"
        if key not in tensors:
            raise ValueError(f"{path}: missing tensor {key}")
        getattr(model.norm, name)[...] = tensors[key]
    return model
