import pytest

from hapsim.channel import Modulation
from hapsim.config import ConfigError, parse_config
from hapsim.restoration import Criterion
from hapsim.traces import Activity


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ============================================================
# Defaults and layering
# ============================================================


def test_all_defaults_without_file():
    cfg = parse_config()
    assert cfg.seed == 0
    assert cfg["channel.mu_db"] == 20.0
    assert cfg["experiments.steps"] == 100_000
    assert cfg["experiments.mcs"][0] == (Modulation.QPSK, 0.602)
    assert cfg["restore.append_failed_estimates"] is False
    assert len(cfg.activities()) == len(Activity)


def test_empty_and_comment_file(tmp_path):
    path = _write(tmp_path, "\n# just a comment\n\n   \n")
    cfg = parse_config(path)
    assert cfg["model.latent"] == 128


def test_file_overrides_defaults(tmp_path):
    path = _write(
        tmp_path,
        "run.seed = 7\n"
        "channel.mu_db = 14.5\n"
        "traces.activities = dyn_tap, rb_tap\n"
        "experiments.thresholds = 0.05,0.2\n"
        "restore.criterion = relative\n"
        "restore.append_failed_estimates = yes\n",
    )
    cfg = parse_config(path)
    assert cfg.seed == 7
    assert cfg["channel.mu_db"] == 14.5
    assert cfg.activities() == [Activity.DYN_TAP, Activity.RB_TAP]
    assert cfg["experiments.thresholds"] == (0.05, 0.2)
    assert cfg.restoration_config().criterion is Criterion.RELATIVE
    assert cfg["restore.append_failed_estimates"] is True


def test_set_overrides_file(tmp_path):
    path = _write(tmp_path, "channel.mu_db = 14.5\nrun.seed = 7\n")
    cfg = parse_config(path, overrides=["channel.mu_db=3", "model.heads=4"])
    assert cfg["channel.mu_db"] == 3.0
    assert cfg.seed == 7  # untouched file setting survives
    assert cfg["model.heads"] == 4


def test_mcs_parsing(tmp_path):
    path = _write(tmp_path, "experiments.mcs = qpsk:0.5, qam16:0.658\n")
    cfg = parse_config(path)
    assert cfg["experiments.mcs"] == ((Modulation.QPSK, 0.5), (Modulation.QAM16, 0.658))


# ============================================================
# Errors carry file:line or --set provenance
# ============================================================


def test_unknown_key(tmp_path):
    path = _write(tmp_path, "run.seed = 1\nchannel.mu = 3\n")
    with pytest.raises(ConfigError, match=r"run\.cfg:2: unknown key 'channel.mu'"):
        parse_config(path)


def test_bad_value_reports_line(tmp_path):
    path = _write(tmp_path, "\nrun.seed = seven\n")
    with pytest.raises(ConfigError, match=r"run\.cfg:2: bad value for run.seed"):
        parse_config(path)


def test_out_of_range_reports_line(tmp_path):
    path = _write(tmp_path, "channel.rho = 1.0\n")
    with pytest.raises(ConfigError, match=r"run\.cfg:1: channel.rho .* out of range"):
        parse_config(path)


def test_missing_equals(tmp_path):
    path = _write(tmp_path, "run.seed 5\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config(path)


def test_bad_override_reports_flag():
    with pytest.raises(ConfigError, match=r"--set channel.rho"):
        parse_config(overrides=["channel.rho=2"])
    with pytest.raises(ConfigError, match="expected key=value"):
        parse_config(overrides=["channel.rho"])


def test_bad_mcs_entries(tmp_path):
    with pytest.raises(ConfigError, match="modulation:rate"):
        parse_config(_write(tmp_path, "experiments.mcs = qpsk\n"))
    with pytest.raises(ConfigError, match="bad value"):
        parse_config(_write(tmp_path, "experiments.mcs = qam64:0.5\n", name="b.cfg"))


def test_bad_activity(tmp_path):
    path = _write(tmp_path, "traces.activities = dyn_tap, juggling\n")
    with pytest.raises(ConfigError, match="activities must be among"):
        parse_config(path)


def test_bad_bool(tmp_path):
    path = _write(tmp_path, "restore.append_failed_estimates = maybe\n")
    with pytest.raises(ConfigError, match="not a boolean"):
        parse_config(path)


# ============================================================
# Cross-key validation
# ============================================================


def test_latent_heads_divisibility():
    with pytest.raises(ConfigError, match="divisible"):
        parse_config(overrides=["model.latent=100", "model.heads=8"])


def test_snr_bounds_ordering():
    with pytest.raises(ConfigError, match="snr_lo"):
        parse_config(overrides=["experiments.snr_lo=30", "experiments.snr_hi=20"])


def test_duration_long_enough_to_trim():
    with pytest.raises(ConfigError, match="out of range"):
        parse_config(overrides=["traces.duration_s=20"])


# ============================================================
# Builders
# ============================================================


def test_builders_plumb_values():
    cfg = parse_config(
        overrides=[
            "run.seed=11",
            "channel.modulation=qam16",
            "channel.code_rate=0.378",
            "model.history_len=32",
            "model.latent=64",
            "model.heads=4",
            "train.epochs=3",
            "restore.threshold=0.2",
            "experiments.snr_lo=5",
            "experiments.snr_hi=25",
        ]
    )
    ch = cfg.channel()
    assert ch.modulation is Modulation.QAM16
    assert ch.code_rate == 0.378
    assert ch.seed == 11
    mc = cfg.model_config()
    assert (mc.history_len, mc.latent, mc.heads) == (32, 64, 4)
    tc = cfg.train_config()
    assert tc.epochs == 3 and tc.seed == 11
    rc = cfg.restoration_config()
    assert rc.threshold == 0.2
    assert rc.history_len == 32  # restoration buffer follows the model window
    ec = cfg.experiment_config()
    assert ec.snr_bounds == (5.0, 25.0)
    assert ec.history_len == 32 and ec.seed == 11
    lk = cfg.link()
    assert lk.ptx_dbm == 43.0


# ============================================================
# Canonical echo
# ============================================================


def test_effective_text_round_trips(tmp_path):
    cfg = parse_config(
        overrides=["run.seed=5", "experiments.mcs=qpsk:0.5", "experiments.thresholds=0.1,0.25"]
    )
    text = cfg.effective_text()
    lines = text.strip().splitlines()
    assert lines == sorted(lines)
    assert "run.seed = 5" in lines
    assert "experiments.mcs = qpsk:0.5" in lines
    assert "restore.append_failed_estimates = false" in lines
    # feeding the echo back in reproduces every value
    path = _write(tmp_path, text)
    again = parse_config(path)
    assert again.effective_text() == text
