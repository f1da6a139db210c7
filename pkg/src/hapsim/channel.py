"""Wireless channel model for 1 kHz haptic packet streams.

Per-step SNR follows an AR(1)-filtered composite of log-normal shadowing
and Rayleigh fading, recentered on a configured mean. Instantaneous SNR
maps to BER/PER through coherent-detection formulas, with an optional
rate-dependent FEC gain and L-branch diversity combining.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

# ============================================================
# dB helpers
# ============================================================

LN10 = math.log(10.0)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


# ============================================================
# Modulation and coding
# ============================================================


class Modulation(Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"
    QAM16 = "qam16"

    @property
    def bits_per_symbol(self) -> int:
        return {Modulation.BPSK: 1, Modulation.QPSK: 2, Modulation.QAM16: 4}[self]


def ber(modulation: Modulation, gamma_lin: float) -> float:
    """Bit error rate at linear SNR `gamma_lin`.

    BPSK/QPSK: 0.5*erfc(sqrt(g)); 16-QAM: 0.375*erfc(sqrt(0.4 g)).
    Inputs below 0 are rejected; the QPSK form is exact for Gray-coded
    coherent detection, the 16-QAM form is the usual first-term
    approximation.
    """
    if gamma_lin < 0:
        raise ValueError(f"gamma_lin must be >= 0, got {gamma_lin}")
    if modulation is Modulation.QAM16:
        return 0.375 * math.erfc(math.sqrt(0.4 * gamma_lin))
    return 0.5 * math.erfc(math.sqrt(gamma_lin))


def per(bit_error_rate: float, packet_bits: int) -> float:
    """Packet error rate for i.i.d. bit errors: 1 - (1 - BER)^N_b."""
    if not 0.0 <= bit_error_rate <= 1.0:
        raise ValueError(f"ber must be in [0, 1], got {bit_error_rate}")
    if packet_bits < 1:
        raise ValueError(f"packet_bits must be >= 1, got {packet_bits}")
    # -expm1(n*log1p(-b)) keeps precision when ber*packet_bits is tiny
    if bit_error_rate == 1.0:
        return 1.0
    return -math.expm1(packet_bits * math.log1p(-bit_error_rate))


def fec_gain(code_rate: float, snr_db: float, g0_db: float = 8.0) -> float:
    """Effective coding gain in dB: g0*(1-R)*ramp(snr).

    The ramp models vanishing coding benefit in the deep-outage regime:
    0 below -10 dB, linear up to 0 dB, saturated at 1 above.
    """
    if not 0.0 < code_rate <= 1.0:
        raise ValueError(f"code_rate must be in (0, 1], got {code_rate}")
    if snr_db <= -10.0:
        ramp = 0.0
    elif snr_db >= 0.0:
        ramp = 1.0
    else:
        ramp = (snr_db + 10.0) / 10.0
    return g0_db * (1.0 - code_rate) * ramp


def diversity_combine(gammas: np.ndarray) -> float:
    """Equal-gain power combining: arithmetic mean of linear branch SNRs."""
    g = np.asarray(gammas, dtype=float)
    if g.size == 0:
        raise ValueError("diversity_combine needs at least one branch")
    if np.any(g < 0):
        raise ValueError("branch SNRs must be >= 0")
    return float(g.mean())


def spectral_efficiency(modulation: Modulation, code_rate: float) -> float:
    """Information bits per symbol: b(M) * R."""
    return modulation.bits_per_symbol * code_rate


def goodput(
    modulation: Modulation, code_rate: float, bandwidth_hz: float, packet_error_rate: float
) -> float:
    """Delivered information rate in bit/s: b(M)*R*B*(1-PER).

    One symbol per Hz per second (Nyquist signalling assumption).
    """
    if bandwidth_hz <= 0:
        raise ValueError(f"bandwidth_hz must be > 0, got {bandwidth_hz}")
    if not 0.0 <= packet_error_rate <= 1.0:
        raise ValueError(f"per must be in [0, 1], got {packet_error_rate}")
    return spectral_efficiency(modulation, code_rate) * bandwidth_hz * (1.0 - packet_error_rate)


# ============================================================
# Channel parameters and state
# ============================================================


@dataclass
class ChannelParams:
    mu_db: float = 20.0  # mean SNR [dB]
    sigma_sh_db: float = 4.0  # shadowing std dev [dB]; 0 disables shadowing
    rho: float = 0.95  # AR(1) correlation of the dB-domain state
    modulation: Modulation = Modulation.QPSK
    code_rate: float = 0.602
    packet_bits: int = 256  # N_b, bits per haptic packet
    diversity: int = 3  # L_div receive branches
    bandwidth_hz: float = 20e6
    fec_g0_db: float = 8.0  # FEC gain ceiling [dB]; 0 disables FEC
    fading: str = "rayleigh"  # "rayleigh" | "none"
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if self.sigma_sh_db < 0:
            raise ValueError(f"sigma_sh_db must be >= 0, got {self.sigma_sh_db}")
        if not 0.0 < self.code_rate <= 1.0:
            raise ValueError(f"code_rate must be in (0, 1], got {self.code_rate}")
        if self.packet_bits < 1:
            raise ValueError(f"packet_bits must be >= 1, got {self.packet_bits}")
        if self.diversity < 1:
            raise ValueError(f"diversity must be >= 1, got {self.diversity}")
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth_hz must be > 0, got {self.bandwidth_hz}")
        if self.fec_g0_db < 0:
            raise ValueError(f"fec_g0_db must be >= 0, got {self.fec_g0_db}")
        if self.fading not in ("rayleigh", "none"):
            raise ValueError(f"fading must be 'rayleigh' or 'none', got {self.fading!r}")


@dataclass
class LinkState:
    """AR(1) channel state.

    Carries the dB-domain deviation X_t from the mean SNR and the single
    PRNG stream that all draws for this link consume (shadowing, then
    fading in branch order, then the per-packet Bernoulli uniform).
    A state is advanced sequentially; `step_snr` consumes the stream of
    the state it was given and returns a successor wrapping it.
    """

    shadow_db: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @staticmethod
    def initial(params: ChannelParams) -> "LinkState":
        return LinkState(shadow_db=0.0, rng=np.random.default_rng(params.seed))


@dataclass
class SnrSample:
    snr_db: float  # combined SNR before FEC gain [dB]
    snr_eff_db: float  # after FEC gain [dB]
    gamma_lin: float  # 10^(snr_eff_db/10)
    ber: float
    per: float


@dataclass
class LossSequence:
    mask: np.ndarray  # bool, True = packet lost
    raw_plr: float  # lost / total, exact
    per_step_snr: Optional[list] = None  # SnrSample per step when recorded


# ============================================================
# Per-step evolution
# ============================================================


def _advance(state: LinkState, params: ChannelParams) -> SnrSample:
    """Advance `state` in place by one packet slot and return the sample.

    Single-branch links push the composite innovation S_t + F_t through
    the AR(1) filter; with diversity the AR(1) state carries shadowing
    only, and per-branch fading powers are averaged in the linear domain
    before converting back to dB.
    """
    rng = state.rng
    p = params

    s_t = rng.normal(0.0, p.sigma_sh_db) if p.sigma_sh_db > 0.0 else 0.0

    if p.diversity == 1:
        if p.fading == "rayleigh":
            f_t = 10.0 * math.log10(rng.exponential(1.0))
        else:
            f_t = 0.0
        state.shadow_db = p.rho * state.shadow_db + (1.0 - p.rho) * (s_t + f_t)
        snr_db = p.mu_db + state.shadow_db
    else:
        state.shadow_db = p.rho * state.shadow_db + (1.0 - p.rho) * s_t
        base_lin = db_to_linear(p.mu_db + state.shadow_db)
        if p.fading == "rayleigh":
            g = rng.exponential(1.0, size=p.diversity)
            snr_db = linear_to_db(base_lin * g.mean())
        else:
            snr_db = p.mu_db + state.shadow_db

    snr_eff_db = snr_db + fec_gain(p.code_rate, snr_db, p.fec_g0_db)
    gamma = db_to_linear(snr_eff_db)
    b = ber(p.modulation, gamma)
    return SnrSample(
        snr_db=snr_db,
        snr_eff_db=snr_eff_db,
        gamma_lin=gamma,
        ber=b,
        per=per(b, p.packet_bits),
    )


def step_snr(state: LinkState, params: ChannelParams) -> tuple[LinkState, SnrSample]:
    """One packet slot of channel evolution.

    Returns the successor state and the SNR/BER/PER sample for the slot.
    The successor shares the (already advanced) PRNG stream with the
    input state, so a given LinkState must be advanced sequentially.
    """
    sample = _advance(state, params)
    return LinkState(shadow_db=state.shadow_db, rng=state.rng), sample


def simulate_losses(
    params: ChannelParams, steps: int, record_snr: bool = False
) -> LossSequence:
    """Monte Carlo loss mask over `steps` packet slots.

    Runs step_snr for each slot and draws one Bernoulli packet outcome
    against the slot's PER. Deterministic for a given (params, steps).
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    state = LinkState.initial(params)
    rng = state.rng
    mask = np.zeros(steps, dtype=bool)
    samples: Optional[list] = [] if record_snr else None
    for t in range(steps):
        sample = _advance(state, params)
        mask[t] = rng.uniform() < sample.per
        if samples is not None:
            samples.append(sample)
    lost = int(mask.sum())
    return LossSequence(mask=mask, raw_plr=lost / steps, per_step_snr=samples)


def write_snr_csv(seq: LossSequence, path) -> None:
    """Dump a recorded loss sequence: step,snr_db,snr_eff_db,ber,per,lost."""
    if seq.per_step_snr is None:
        raise ValueError("loss sequence was simulated without record_snr=True")
    lines = ["step,snr_db,snr_eff_db,ber,per,lost"]
    for t, s in enumerate(seq.per_step_snr):
        lines.append(
            f"{t},{s.snr_db:.9g},{s.snr_eff_db:.9g},{s.ber:.9g},{s.per:.9g},"
            f"{int(seq.mask[t])}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
