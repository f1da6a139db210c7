"""3GPP TR 38.901 urban-macro link budget and coverage.

Dual-slope LOS path loss with the effective-environment breakpoint,
NLOS floor, distance-dependent LOS probability, and log-normal
shadow-fading margins turned into a coverage probability and a maximum
service distance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

C_LIGHT = 3.0e8  # propagation speed used by the 38.901 breakpoint [m/s]
H_ENV = 1.0  # effective environment height h_E [m] (UMa default)

D2D_MIN = 10.0  # model validity range [m]
D2D_MAX = 5000.0

# max_coverage_distance sentinels
NO_COVERAGE = 0.0
FULL_RANGE = D2D_MAX


@dataclass
class LinkBudgetParams:
    ptx_dbm: float = 43.0  # transmit power [dBm]
    gtx_db: float = 8.0  # transmit antenna gain [dBi]
    grx_db: float = 0.0  # receive antenna gain [dBi]
    noise_floor_dbm: float = -90.0  # configured constant noise floor [dBm]
    fc_ghz: float = 1.8  # carrier frequency [GHz]
    h_bs_m: float = 25.0  # base-station height [m]
    h_ut_m: float = 1.5  # terminal height [m]
    sigma_los_db: float = 4.0  # shadow-fading std dev, LOS [dB]
    sigma_nlos_db: float = 6.0  # shadow-fading std dev, NLOS [dB]

    def __post_init__(self) -> None:
        if self.fc_ghz <= 0:
            raise ValueError(f"fc_ghz must be > 0, got {self.fc_ghz}")
        if not 1.5 <= self.h_ut_m <= 22.5:
            raise ValueError(
                f"h_ut_m outside UMa validity [1.5, 22.5], got {self.h_ut_m}"
            )
        if not self.h_bs_m > self.h_ut_m:
            raise ValueError(
                f"h_bs_m must exceed h_ut_m, got {self.h_bs_m} <= {self.h_ut_m}"
            )
        if self.sigma_los_db <= 0 or self.sigma_nlos_db <= 0:
            raise ValueError("shadowing std devs must be > 0")


def thermal_noise_floor_dbm(bandwidth_hz: float, noise_figure_db: float = 7.0) -> float:
    """kTB noise floor: -174 + 10log10(B) + NF [dBm]."""
    if bandwidth_hz <= 0:
        raise ValueError(f"bandwidth_hz must be > 0, got {bandwidth_hz}")
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


# ============================================================
# Path loss (TR 38.901 Table 7.4.1-1, UMa)
# ============================================================


def _d3d(d2d_m: float, p: LinkBudgetParams) -> float:
    return math.hypot(d2d_m, p.h_bs_m - p.h_ut_m)


def breakpoint_distance_m(p: LinkBudgetParams) -> float:
    """d'_BP = 4 h'_BS h'_UT fc / c with heights reduced by h_E = 1 m."""
    return 4.0 * (p.h_bs_m - H_ENV) * (p.h_ut_m - H_ENV) * (p.fc_ghz * 1e9) / C_LIGHT


def _clamp_d2d(d2d_m: float) -> float:
    if d2d_m < D2D_MIN or d2d_m > D2D_MAX:
        warnings.warn(
            f"d2d = {d2d_m:.1f} m outside UMa validity [{D2D_MIN:.0f}, {D2D_MAX:.0f}] m; clamping",
            stacklevel=3,
        )
        return min(max(d2d_m, D2D_MIN), D2D_MAX)
    return d2d_m


def path_loss_los_db(d2d_m: float, p: LinkBudgetParams) -> float:
    """UMa LOS path loss [dB], dual slope around the breakpoint."""
    d2d = _clamp_d2d(d2d_m)
    d3d = _d3d(d2d, p)
    fc = p.fc_ghz
    if d2d <= breakpoint_distance_m(p):
        return 28.0 + 22.0 * math.log10(d3d) + 20.0 * math.log10(fc)
    dbp = breakpoint_distance_m(p)
    return (
        28.0
        + 40.0 * math.log10(d3d)
        + 20.0 * math.log10(fc)
        - 9.0 * math.log10(dbp**2 + (p.h_bs_m - p.h_ut_m) ** 2)
    )


def path_loss_nlos_db(d2d_m: float, p: LinkBudgetParams) -> float:
    """UMa NLOS path loss [dB]: max of the LOS curve and the NLOS fit."""
    d2d = _clamp_d2d(d2d_m)
    d3d = _d3d(d2d, p)
    pl_nlos = (
        13.54
        + 39.08 * math.log10(d3d)
        + 20.0 * math.log10(p.fc_ghz)
        - 0.6 * (p.h_ut_m - 1.5)
    )
    return max(path_loss_los_db(d2d, p), pl_nlos)


def path_loss_uma(d2d_m: float, los: bool, p: LinkBudgetParams) -> float:
    """UMa path loss [dB] for the requested propagation condition."""
    return path_loss_los_db(d2d_m, p) if los else path_loss_nlos_db(d2d_m, p)


def los_probability(d2d_m: float, p: LinkBudgetParams) -> float:
    """UMa LOS probability (height-independent form, h_UT <= 13 m)."""
    if d2d_m < 0:
        raise ValueError(f"distance must be >= 0, got {d2d_m}")
    if d2d_m <= 18.0:
        return 1.0
    return 18.0 / d2d_m + math.exp(-d2d_m / 63.0) * (1.0 - 18.0 / d2d_m)


# ============================================================
# Coverage
# ============================================================


def max_path_loss_db(snr_req_db: float, p: LinkBudgetParams) -> float:
    """Largest tolerable path loss: Ptx + Gtx + Grx - (N + SNR_req)."""
    return p.ptx_dbm + p.gtx_db + p.grx_db - (p.noise_floor_dbm + snr_req_db)


def _phi(x: float) -> float:
    """Standard normal CDF."""
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def coverage_probability(d2d_m: float, pl_max_db: float, p: LinkBudgetParams) -> float:
    """LOS/NLOS mixture of shadow-fading margin probabilities.

    p_cov = p_LOS * Phi((PLmax - PL_LOS)/sigma_LOS)
          + (1 - p_LOS) * Phi((PLmax - PL_NLOS)/sigma_NLOS)
    """
    p_los = los_probability(d2d_m, p)
    m_los = (pl_max_db - path_loss_los_db(d2d_m, p)) / p.sigma_los_db
    m_nlos = (pl_max_db - path_loss_nlos_db(d2d_m, p)) / p.sigma_nlos_db
    return p_los * _phi(m_los) + (1.0 - p_los) * _phi(m_nlos)


def max_coverage_distance(
    p_star: float, pl_max_db: float, p: LinkBudgetParams, tol_m: float = 0.1
) -> float:
    """Largest distance with coverage probability >= p_star.

    Bisection over [10, 5000] m assuming p_cov is nonincreasing in
    distance. Returns NO_COVERAGE (0.0) when even 10 m fails and
    FULL_RANGE (5000.0) when the far edge is still covered.
    """
    if not 0.0 < p_star < 1.0:
        raise ValueError(f"p_star must be in (0, 1), got {p_star}")
    if coverage_probability(D2D_MIN, pl_max_db, p) < p_star:
        return NO_COVERAGE
    if coverage_probability(D2D_MAX, pl_max_db, p) >= p_star:
        return FULL_RANGE
    lo, hi = D2D_MIN, D2D_MAX  # invariant: covered at lo, not at hi
    for _ in range(60):
        if hi - lo <= tol_m:
            break
        mid = 0.5 * (lo + hi)
        if coverage_probability(mid, pl_max_db, p) >= p_star:
            lo = mid
        else:
            hi = mid
    return lo
