import math
import time

import numpy as np
import pytest

from hapsim.model import (
    AttentionParams,
    ModelConfig,
    Normalization,
    XhapModel,
    _paired_gru,
    autoregressive_rollout,
    cross_attention_fuse,
    gru_forward,
    load_checkpoint,
    operator_summary,
    save_checkpoint,
    xhap_forward,
)


def _rand_window(model, seed=0):
    rng = np.random.default_rng(seed)
    length = model.config.history_len
    return rng.normal(size=(length, 3)), rng.normal(size=(length, 6))


# ============================================================
# Configuration and parameter budget
# ============================================================


def test_default_param_count():
    m = XhapModel.initialize(ModelConfig(), seed=0)
    # 2 GRUs: 3*(d_in*D + D*D + D) with d_in 3 and 6; attention 4*D^2;
    # head (2D*32 + 32 + 32*3 + 3)
    d = 128
    expected = (
        3 * (3 * d + d * d + d)
        + 3 * (6 * d + d * d + d)
        + 4 * d * d
        + (2 * d * 32 + 32 + 32 * 3 + 3)
    )
    assert m.num_params() == expected == 176_387
    assert abs(m.num_params() - 178_000) / 178_000 < 0.05


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(latent=30, heads=4)
    with pytest.raises(ValueError):
        ModelConfig(history_len=0)
    with pytest.raises(ValueError):
        ModelConfig(hidden=0)
    assert ModelConfig(latent=32, heads=4).head_dim == 8


def test_initialize_deterministic_and_bounded():
    a = XhapModel.initialize(ModelConfig(), seed=3)
    b = XhapModel.initialize(ModelConfig(), seed=3)
    c = XhapModel.initialize(ModelConfig(), seed=4)
    for (na, pa), (_, pb), (_, pc) in zip(a.parameters(), b.parameters(), c.parameters()):
        assert np.array_equal(pa, pb)
        if pa.ndim == 1:
            assert np.all(pa == 0.0), f"{na} bias should start at zero"
        else:
            assert not np.array_equal(pa, pc)
            bound = 1.0 / math.sqrt(pa.shape[0])
            assert np.max(np.abs(pa)) <= bound


def test_parameter_names_stable():
    m = XhapModel.initialize(ModelConfig(history_len=4, latent=16, heads=2), seed=0)
    names = [n for n, _ in m.parameters()]
    assert len(names) == len(set(names)) == 26
    assert names[0] == "gru_top.w_z"
    assert names[9] == "gru_op.w_z"
    assert names[-1] == "head.b2"


# ============================================================
# GRU recurrence
# ============================================================


def _gru_reference(p, x):
    """Step-by-step transcription of the update equations."""

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    h = np.zeros(p.u_z.shape[0])
    out = []
    for xt in x:
        z = sig(xt @ p.w_z + h @ p.u_z + p.b_z)
        r = sig(xt @ p.w_r + h @ p.u_r + p.b_r)
        n = np.tanh(xt @ p.w_h + (r * h) @ p.u_h + p.b_h)
        h = (1.0 - z) * h + z * n
        out.append(h)
    return np.array(out)


def test_gru_forward_matches_reference(small_model):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(11, 3))
    got = gru_forward(small_model.gru_top, x)
    want = _gru_reference(small_model.gru_top, x)
    assert got.shape == (11, 16)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_gru_forward_rejects_bad_rank(small_model):
    with pytest.raises(ValueError):
        gru_forward(small_model.gru_top, np.zeros(3))


def test_paired_gru_matches_sequential(small_model):
    rng = np.random.default_rng(1)
    xa = rng.normal(size=(13, 3))
    xb = rng.normal(size=(13, 6))
    for cache in (None, small_model.__dict__.get("_recur_cache")):
        ha, hb = _paired_gru(small_model.gru_top, small_model.gru_op, xa, xb, cache)
        np.testing.assert_allclose(ha, gru_forward(small_model.gru_top, xa), atol=1e-12)
        np.testing.assert_allclose(hb, gru_forward(small_model.gru_op, xb), atol=1e-12)


def test_gru_bounded_activations(small_model):
    x = 50.0 * np.ones((6, 3))  # saturating inputs must not overflow
    h = gru_forward(small_model.gru_top, x)
    assert np.all(np.isfinite(h))
    assert np.max(np.abs(h)) <= 1.0 + 1e-12


# ============================================================
# Cross-attention
# ============================================================


def test_attention_weights_are_distributions(small_model):
    rng = np.random.default_rng(2)
    r = rng.normal(size=16)
    s = rng.normal(size=(9, 16))
    fused, alphas = cross_attention_fuse(r, s, small_model.attention, return_weights=True)
    assert fused.shape == (16,)
    assert alphas.shape == (4, 9)
    assert np.all(alphas >= 0.0)
    np.testing.assert_allclose(alphas.sum(axis=1), 1.0, atol=1e-12)


def test_attention_permutation_equivariance(small_model):
    """Reordering operator states permutes the weights and leaves the
    fused vector unchanged: attention itself carries no positional code."""
    rng = np.random.default_rng(3)
    r = rng.normal(size=16)
    s = rng.normal(size=(7, 16))
    perm = rng.permutation(7)
    f1, a1 = cross_attention_fuse(r, s, small_model.attention, return_weights=True)
    f2, a2 = cross_attention_fuse(r, s[perm], small_model.attention, return_weights=True)
    np.testing.assert_allclose(f1, f2, atol=1e-12)
    np.testing.assert_allclose(a1[:, perm], a2, atol=1e-12)


def test_attention_single_key_collapses(small_model):
    rng = np.random.default_rng(4)
    r = rng.normal(size=16)
    s = rng.normal(size=(1, 16))
    fused, alphas = cross_attention_fuse(r, s, small_model.attention, return_weights=True)
    np.testing.assert_allclose(alphas, 1.0, atol=1e-15)
    want = (s[0] @ small_model.attention.wv) @ small_model.attention.wo
    np.testing.assert_allclose(fused, want, atol=1e-12)


def test_attention_reference_two_heads():
    """Tiny case against a literal per-head transcription."""
    rng = np.random.default_rng(5)
    d, heads = 4, 2
    p = AttentionParams(
        wq=rng.normal(size=(d, d)),
        wk=rng.normal(size=(d, d)),
        wv=rng.normal(size=(d, d)),
        wo=rng.normal(size=(d, d)),
        heads=heads,
    )
    r = rng.normal(size=d)
    s = rng.normal(size=(5, d))
    got = cross_attention_fuse(r, s, p)

    d_h = d // heads
    concat = np.empty(d)
    for i in range(heads):
        cols = slice(i * d_h, (i + 1) * d_h)
        q = r @ p.wq[:, cols]
        k = s @ p.wk[:, cols]
        v = s @ p.wv[:, cols]
        scores = k @ q / math.sqrt(d_h)
        w = np.exp(scores - scores.max())
        w /= w.sum()
        concat[cols] = w @ v
    np.testing.assert_allclose(got, concat @ p.wo, atol=1e-12)


def test_attention_validation(small_model):
    p = small_model.attention
    with pytest.raises(ValueError):
        cross_attention_fuse(np.zeros(15), np.zeros((4, 16)), p)
    with pytest.raises(ValueError):
        cross_attention_fuse(np.zeros(16), np.zeros((0, 16)), p)
    with pytest.raises(ValueError):
        cross_attention_fuse(np.zeros(16), np.zeros((4, 15)), p)
    with pytest.raises(ValueError):
        AttentionParams(np.zeros((6, 6)), np.zeros((6, 6)), np.zeros((6, 6)), np.zeros((6, 6)), heads=4)


# ============================================================
# Full forward pass
# ============================================================


def test_forward_shape_and_determinism(small_model):
    xt, xo = _rand_window(small_model)
    y1 = xhap_forward(small_model, xt, xo)
    y2 = small_model.predict(xt, xo)
    assert y1.shape == (3,)
    assert np.array_equal(y1, y2)


def test_forward_raw_units(small_model):
    """Zeroed head output must decode to the stored force mean."""
    xt, xo = _rand_window(small_model, seed=6)
    small_model.head.w2[...] = 0.0
    small_model.head.b2[...] = 0.0
    y = xhap_forward(small_model, xt, xo)
    np.testing.assert_allclose(y, small_model.norm.force_mean, atol=1e-12)


def test_forward_uses_normalization(small_model):
    xt, xo = _rand_window(small_model, seed=7)
    y_base = xhap_forward(small_model, xt, xo)
    small_model.norm.force_mean = small_model.norm.force_mean + 0.25
    y_shift = xhap_forward(small_model, xt, xo)
    assert not np.allclose(y_base, y_shift)


def test_forward_validation(small_model):
    xt, xo = _rand_window(small_model)
    with pytest.raises(ValueError):
        xhap_forward(small_model, xt[:-1], xo)
    with pytest.raises(ValueError):
        xhap_forward(small_model, xt, xo[:, :5])


def test_forward_attention_exposed(small_model):
    xt, xo = _rand_window(small_model, seed=8)
    y, alphas = xhap_forward(small_model, xt, xo, return_attention=True)
    assert alphas.shape == (4, 8)
    np.testing.assert_allclose(alphas.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(y, xhap_forward(small_model, xt, xo), atol=1e-15)


def test_operator_summary_matches_encoder(small_model):
    _, xo = _rand_window(small_model, seed=9)
    nz = small_model.norm
    want = gru_forward(small_model.gru_op, (xo - nz.op_mean) / nz.op_std)[-1]
    np.testing.assert_allclose(operator_summary(small_model, xo), want, atol=1e-12)


def test_forward_latency_budget():
    """Full-size single-window inference stays under 2 ms (best of 50)."""
    m = XhapModel.initialize(ModelConfig(), seed=0)
    xt = np.random.default_rng(0).normal(size=(64, 3))
    xo = np.random.default_rng(1).normal(size=(64, 6))
    xhap_forward(m, xt, xo)  # warm caches
    best = math.inf
    for _ in range(50):
        t0 = time.perf_counter()
        xhap_forward(m, xt, xo)
        best = min(best, time.perf_counter() - t0)
    assert best < 2e-3, f"forward pass took {best * 1e3:.3f} ms"


# ============================================================
# Autoregressive rollout
# ============================================================


def test_rollout_horizon_one_equals_forward(small_model):
    xt, xo = _rand_window(small_model, seed=10)
    pred = autoregressive_rollout(small_model, xt, xo, horizon=1)
    assert pred.shape == (1, 3)
    np.testing.assert_allclose(pred[0], xhap_forward(small_model, xt, xo), atol=1e-15)


def test_rollout_prefix_property(small_model):
    rng = np.random.default_rng(11)
    xt = rng.normal(size=(8, 3))
    ops = rng.normal(size=(12, 6))
    p5 = autoregressive_rollout(small_model, xt, ops, horizon=5)
    p3 = autoregressive_rollout(small_model, xt, ops, horizon=3)
    np.testing.assert_allclose(p5[:3], p3, atol=1e-15)


def test_rollout_feeds_back_predictions(small_model):
    rng = np.random.default_rng(12)
    xt = rng.normal(size=(8, 3))
    ops = rng.normal(size=(9, 6))
    preds = autoregressive_rollout(small_model, xt, ops, horizon=2)
    window2 = np.vstack([xt[1:], preds[0]])
    np.testing.assert_allclose(
        preds[1], xhap_forward(small_model, window2, ops[1:9]), atol=1e-15
    )


def test_rollout_does_not_mutate_buffer(small_model):
    xt, _ = _rand_window(small_model, seed=13)
    ops = np.random.default_rng(14).normal(size=(10, 6))
    before = xt.copy()
    autoregressive_rollout(small_model, xt, ops, horizon=3)
    assert np.array_equal(xt, before)


def test_rollout_op_stream_exhausted(small_model):
    xt, xo = _rand_window(small_model, seed=15)
    with pytest.raises(ValueError, match="exhausted"):
        autoregressive_rollout(small_model, xt, xo, horizon=2)  # needs 9 rows
    with pytest.raises(ValueError):
        autoregressive_rollout(small_model, xt, xo, horizon=0)


# ============================================================
# Checkpoints
# ============================================================


def test_checkpoint_round_trip(tmp_path, small_model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(small_model, path)
    back = load_checkpoint(path)
    assert back.config == small_model.config
    for (na, pa), (nb, pb) in zip(small_model.parameters(), back.parameters()):
        assert na == nb
        np.testing.assert_allclose(pa, pb, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(back.norm.force_std, small_model.norm.force_std, rtol=1e-8)
    xt, xo = _rand_window(small_model, seed=16)
    np.testing.assert_allclose(
        xhap_forward(back, xt, xo), xhap_forward(small_model, xt, xo), rtol=1e-6, atol=1e-9
    )


def test_checkpoint_errors(tmp_path, small_model):
    bad = tmp_path / "bad.ckpt"
    bad.write_text("not a checkpoint\n")
    with pytest.raises(ValueError, match="header"):
        load_checkpoint(bad)

    path = tmp_path / "m.ckpt"
    save_checkpoint(small_model, path)
    lines = path.read_text().splitlines()

    missing = [ln for ln in lines if "gru_top.w_z" not in ln]
    p2 = tmp_path / "missing.ckpt"
    p2.write_text("\n".join(missing) + "\n")
    with pytest.raises(ValueError, match="gru_top.w_z"):
        load_checkpoint(p2)

    p3 = tmp_path / "shape.ckpt"
    broken = []
    for ln in lines:
        if ln.startswith("tensor head.b2 "):
            parts = ln.split()
            parts[3] = "4"  # claim one more element than present
            ln = " ".join(parts)
        broken.append(ln)
    p3.write_text("\n".join(broken) + "\n")
    with pytest.raises(ValueError):
        load_checkpoint(p3)

    p4 = tmp_path / "record.ckpt"
    p4.write_text(lines[0] + "\nwhatever x y\n")
    with pytest.raises(ValueError, match="unknown record"):
        load_checkpoint(p4)

    p5 = tmp_path / "config.ckpt"
    no_cfg = [ln for ln in lines if not ln.startswith("config heads")]
    p5.write_text("\n".join(no_cfg) + "\n")
    with pytest.raises(ValueError, match="heads"):
        load_checkpoint(p5)
