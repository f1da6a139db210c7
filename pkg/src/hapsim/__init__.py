"""Haptic teleoperation over lossy wireless links.

Simulation stack: correlated-fading channel with FEC and diversity,
3GPP UMa link budget, synthetic haptic traces, a cross-attention GRU
force estimator trained from scratch, packet-loss restoration, and the
experiment suite behind the CLI (`hapsim`).
"""

from hapsim.channel import (
    ChannelParams,
    LinkState,
    LossSequence,
    Modulation,
    SnrSample,
    ber,
    diversity_combine,
    fec_gain,
    goodput,
    per,
    simulate_losses,
    step_snr,
)
from hapsim.linkbudget import LinkBudgetParams
from hapsim.model import ModelConfig, XhapModel, xhap_forward
from hapsim.restoration import RestorationConfig, RestorationStats, run_restoration
from hapsim.traces import Activity, Trace, generate_trace, trim_and_window

__all__ = [
    "Activity",
    "ChannelParams",
    "LinkBudgetParams",
    "LinkState",
    "LossSequence",
    "ModelConfig",
    "Modulation",
    "RestorationConfig",
    "RestorationStats",
    "SnrSample",
    "Trace",
    "XhapModel",
    "ber",
    "diversity_combine",
    "fec_gain",
    "generate_trace",
    "goodput",
    "per",
    "run_restoration",
    "simulate_losses",
    "step_snr",
    "trim_and_window",
    "xhap_forward",
]

__version__ = "0.1.0"
