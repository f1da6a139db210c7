"""Run configuration: flat `section.key = value` text files.

Every knob has a documented default; a missing or empty file is a
fully-defaulted run. Unknown keys, malformed values and out-of-range
settings fail fast with the offending key and line. CLI `--set k=v`
overrides win over the file, which wins over defaults. The effective
configuration echoes back out in a canonical, re-parseable form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from hapsim.channel import ChannelParams, Modulation
from hapsim.experiments import ExperimentConfig
from hapsim.linkbudget import LinkBudgetParams
from hapsim.model import ModelConfig
from hapsim.restoration import Criterion, RestorationConfig
from hapsim.traces import Activity
from hapsim.training import TrainConfig


class ConfigError(ValueError):
    pass


# ============================================================
# Typed values
# ============================================================


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float_list(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _parse_int_list(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _parse_str_list(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _parse_mcs_list(s: str) -> tuple:
    out = []
    for item in s.split(","):
        item = item.strip()
        if not item:
            continue
        mod_name, _, rate = item.partition(":")
        if not rate:
            raise ValueError(f"MCS entries are modulation:rate, got {item!r}")
        out.append((Modulation(mod_name.strip().lower()), float(rate)))
    if not out:
        raise ValueError("empty MCS list")
    return tuple(out)


_PARSERS: dict = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": lambda s: s.strip(),
    "floats": _parse_float_list,
    "ints": _parse_int_list,
    "strs": _parse_str_list,
    "mcs": _parse_mcs_list,
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.9g}"
    if isinstance(value, tuple):
        parts = []
        for v in value:
            if isinstance(v, tuple):  # MCS pair
                parts.append(f"{v[0].value}:{v[1]:.9g}")
            elif isinstance(v, float):
                parts.append(f"{v:.9g}")
            else:
                parts.append(str(v))
        return ",".join(parts)
    return str(value)


# ============================================================
# Key registry
# ============================================================


@dataclass
class _Key:
    kind: str
    default: object
    check: Optional[Callable] = None  # value -> error string or None


def _rng(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}"
        return None

    return check


def _positive_list(v):
    return None if all(x > 0 for x in v) else "entries must be > 0"


_ACTIVITY_NAMES = tuple(a.value for a in Activity)

KEYS: dict = {
    "run.seed": _Key("int", 0),
    "traces.activities": _Key(
        "strs",
        _ACTIVITY_NAMES,
        lambda v: None
        if v and all(x in _ACTIVITY_NAMES for x in v)
        else f"activities must be among {_ACTIVITY_NAMES}",
    ),
    "traces.duration_s": _Key("float", 120.0, _rng(lo=20.001, lo_open=True)),
    # channel
    "channel.mu_db": _Key("float", 20.0),
    "channel.sigma_sh_db": _Key("float", 4.0, _rng(lo=0.0)),
    "channel.rho": _Key("float", 0.95, _rng(lo=0.0, hi=1.0, hi_open=True)),
    "channel.modulation": _Key(
        "str",
        "qpsk",
        lambda v: None if v in ("bpsk", "qpsk", "qam16") else "must be bpsk|qpsk|qam16",
    ),
    "channel.code_rate": _Key("float", 0.602, _rng(lo=0.0, hi=1.0, lo_open=True)),
    "channel.packet_bits": _Key("int", 256, _rng(lo=1)),
    "channel.diversity": _Key("int", 3, _rng(lo=1)),
    "channel.bandwidth_hz": _Key("float", 20e6, _rng(lo=0.0, lo_open=True)),
    "channel.fec_g0_db": _Key("float", 8.0, _rng(lo=0.0)),
    "channel.fading": _Key(
        "str", "rayleigh", lambda v: None if v in ("rayleigh", "none") else "must be rayleigh|none"
    ),
    # link budget
    "link.ptx_dbm": _Key("float", 43.0),
    "link.gtx_db": _Key("float", 8.0),
    "link.grx_db": _Key("float", 0.0),
    "link.noise_floor_dbm": _Key("float", -90.0),
    "link.fc_ghz": _Key("float", 1.8, _rng(lo=0.0, lo_open=True)),
    "link.h_bs_m": _Key("float", 25.0, _rng(lo=0.0, lo_open=True)),
    "link.h_ut_m": _Key("float", 1.5, _rng(lo=1.5, hi=22.5)),
    "link.sigma_los_db": _Key("float", 4.0, _rng(lo=0.0, lo_open=True)),
    "link.sigma_nlos_db": _Key("float", 6.0, _rng(lo=0.0, lo_open=True)),
    # model
    "model.history_len": _Key("int", 64, _rng(lo=1)),
    "model.latent": _Key("int", 128, _rng(lo=1)),
    "model.heads": _Key("int", 8, _rng(lo=1)),
    "model.hidden": _Key("int", 32, _rng(lo=1)),
    # training
    "train.epochs": _Key("int", 50, _rng(lo=1)),
    "train.batch_size": _Key("int", 64, _rng(lo=1)),
    "train.lr0": _Key("float", 1e-3, _rng(lo=0.0, lo_open=True)),
    "train.lr_step": _Key("int", 10, _rng(lo=1)),
    "train.lr_gamma": _Key("float", 0.5, _rng(lo=0.0, hi=1.0, lo_open=True)),
    "train.lambda_mse": _Key("float", 0.5, _rng(lo=0.0)),
    "train.lambda_rel": _Key("float", 0.5, _rng(lo=0.0)),
    "train.tau": _Key("float", 0.01, _rng(lo=0.0, lo_open=True)),
    "train.rollout_horizon": _Key("int", 5, _rng(lo=1)),
    "train.window_stride": _Key("int", 1, _rng(lo=1)),
    "train.val_stride": _Key("int", 1, _rng(lo=1)),
    # restoration
    "restore.threshold": _Key("float", 0.1, _rng(lo=0.0)),
    "restore.criterion": _Key(
        "str", "absolute", lambda v: None if v in ("absolute", "relative") else "must be absolute|relative"
    ),
    "restore.append_failed_estimates": _Key("bool", False),
    # experiments
    "experiments.steps": _Key("int", 100_000, _rng(lo=1)),
    "experiments.target_plr": _Key("float", 1e-5, _rng(lo=0.0, hi=1.0, lo_open=True, hi_open=True)),
    "experiments.thresholds": _Key("floats", (0.05, 0.1, 0.2), _positive_list),
    "experiments.snr_lo": _Key("float", 0.0),
    "experiments.snr_hi": _Key("float", 60.0),
    "experiments.snr_tol": _Key("float", 0.25, _rng(lo=0.0, lo_open=True)),
    "experiments.mcs": _Key(
        "mcs",
        ((Modulation.QPSK, 0.602), (Modulation.QAM16, 0.378), (Modulation.QAM16, 0.658)),
    ),
    "experiments.burst_lengths": _Key("ints", (1, 2, 3, 4, 5, 6, 7, 8), _positive_list),
    "experiments.bandwidths": _Key("floats", (5e6, 10e6, 20e6), _positive_list),
    "experiments.sweep_snr_db": _Key("float", 20.0),
    "experiments.capacity_snr_db": _Key("float", 20.0),
    "experiments.capacity_eval_users": _Key("int", 3, _rng(lo=1)),
    "experiments.rolling_window": _Key("int", 5000, _rng(lo=1)),
    "experiments.p_star": _Key("float", 0.99, _rng(lo=0.0, hi=1.0, lo_open=True, hi_open=True)),
    "experiments.eval_duration_s": _Key("float", 40.0, _rng(lo=20.001, lo_open=True)),
}


# ============================================================
# Parsing
# ============================================================


def _assign(values: dict, key: str, raw: str, where: str) -> None:
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    spec = KEYS[key]
    try:
        value = _PARSERS[spec.kind](raw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
    if spec.check is not None:
        err = spec.check(value)
        if err:
            raise ConfigError(f"{where}: {key} = {raw.strip()!r} out of range: {err}")
    values[key] = value


def parse_config(path: Optional[str] = None, overrides: Optional[list] = None) -> "RunConfig":
    """Defaults, then the file, then --set overrides."""
    values = {k: spec.default for k, spec in KEYS.items()}
    if path is not None:
        with open(path) as fh:
            for ln_no, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{ln_no}: expected 'key = value', got {stripped!r}")
                key, _, raw = stripped.partition("=")
                _assign(values, key.strip(), raw.strip(), f"{path}:{ln_no}")
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"--set {ov!r}: expected key=value")
        key, _, raw = ov.partition("=")
        _assign(values, key.strip(), raw.strip(), f"--set {key.strip()}")
    cfg = RunConfig(values)
    cfg.validate()
    return cfg


class RunConfig:
    """Immutable view over the parsed key/value map, with typed builders
    for each subsystem's parameter object."""

    def __init__(self, values: dict):
        self._v = dict(values)

    def __getitem__(self, key: str):
        return self._v[key]

    @property
    def seed(self) -> int:
        return self._v["run.seed"]

    def validate(self) -> None:
        if self._v["model.latent"] % self._v["model.heads"] != 0:
            raise ConfigError(
                f"model.latent ({self._v['model.latent']}) must be divisible by "
                f"model.heads ({self._v['model.heads']})"
            )
        if self._v["experiments.snr_lo"] >= self._v["experiments.snr_hi"]:
            raise ConfigError("experiments.snr_lo must be below experiments.snr_hi")
        # instantiate everything so dataclass invariants run too
        self.channel()
        self.link()
        self.model_config()
        self.train_config()
        self.restoration_config()
        self.experiment_config()

    def activities(self) -> list:
        return [Activity(name) for name in self._v["traces.activities"]]

    def channel(self) -> ChannelParams:
        v = self._v
        return ChannelParams(
            mu_db=v["channel.mu_db"],
            sigma_sh_db=v["channel.sigma_sh_db"],
            rho=v["channel.rho"],
            modulation=Modulation(v["channel.modulation"]),
            code_rate=v["channel.code_rate"],
            packet_bits=v["channel.packet_bits"],
            diversity=v["channel.diversity"],
            bandwidth_hz=v["channel.bandwidth_hz"],
            fec_g0_db=v["channel.fec_g0_db"],
            fading=v["channel.fading"],
            seed=v["run.seed"],
        )

    def link(self) -> LinkBudgetParams:
        v = self._v
        return LinkBudgetParams(
            ptx_dbm=v["link.ptx_dbm"],
            gtx_db=v["link.gtx_db"],
            grx_db=v["link.grx_db"],
            noise_floor_dbm=v["link.noise_floor_dbm"],
            fc_ghz=v["link.fc_ghz"],
            h_bs_m=v["link.h_bs_m"],
            h_ut_m=v["link.h_ut_m"],
            sigma_los_db=v["link.sigma_los_db"],
            sigma_nlos_db=v["link.sigma_nlos_db"],
        )

    def model_config(self) -> ModelConfig:
        v = self._v
        return ModelConfig(
            history_len=v["model.history_len"],
            latent=v["model.latent"],
            heads=v["model.heads"],
            hidden=v["model.hidden"],
        )

    def train_config(self) -> TrainConfig:
        v = self._v
        return TrainConfig(
            epochs=v["train.epochs"],
            batch_size=v["train.batch_size"],
            lr0=v["train.lr0"],
            lr_step=v["train.lr_step"],
            lr_gamma=v["train.lr_gamma"],
            lambda_mse=v["train.lambda_mse"],
            lambda_rel=v["train.lambda_rel"],
            tau=v["train.tau"],
            rollout_horizon=v["train.rollout_horizon"],
            window_stride=v["train.window_stride"],
            val_stride=v["train.val_stride"],
            seed=v["run.seed"],
        )

    def restoration_config(self) -> RestorationConfig:
        v = self._v
        return RestorationConfig(
            threshold=v["restore.threshold"],
            criterion=Criterion(v["restore.criterion"]),
            history_len=v["model.history_len"],
            append_failed_estimates=v["restore.append_failed_estimates"],
        )

    def experiment_config(self) -> ExperimentConfig:
        v = self._v
        return ExperimentConfig(
            steps=v["experiments.steps"],
            target_plr=v["experiments.target_plr"],
            thresholds=v["experiments.thresholds"],
            snr_bounds=(v["experiments.snr_lo"], v["experiments.snr_hi"]),
            snr_tol=v["experiments.snr_tol"],
            mcs_list=v["experiments.mcs"],
            burst_lengths=v["experiments.burst_lengths"],
            bandwidths=v["experiments.bandwidths"],
            sweep_snr_db=v["experiments.sweep_snr_db"],
            capacity_snr_db=v["experiments.capacity_snr_db"],
            capacity_eval_users=v["experiments.capacity_eval_users"],
            rolling_window=v["experiments.rolling_window"],
            p_star=v["experiments.p_star"],
            history_len=v["model.history_len"],
            seed=v["run.seed"],
        )

    def effective_text(self) -> str:
        lines = [f"{k} = {_fmt(self._v[k])}" for k in sorted(self._v)]
        return "\n".join(lines) + "\n"
