"""Synthetic 1 kHz haptic interaction traces.

A 0.1 kg probe driven through a virtual coupling spring follows scripted
per-activity hand motion; a one-sided spring-damper surface at z = 0
produces the contact force. Semi-implicit Euler at 1 kHz keeps each
stored velocity exactly the discrete derivative of position. Dynamic
(soft, 200 N/m) and rigid-body (2000 N/m) activity families mirror
push / tap / intermittent / push-and-hold patterns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

FS_HZ = 1000  # packet/sample rate
TRIM_SAMPLES = 10000  # dropped from each end before windowing

PROBE_MASS_KG = 0.1
COUPLING_K = 500.0  # virtual coupling stiffness [N/m]
COUPLING_C = 10.0  # virtual coupling damping [N*s/m]
SURFACE_C = 5.0  # contact damping [N*s/m]
LATERAL_C = 2.0  # contact friction coefficient vs lateral speed [N*s/m]
NOISE_STD_N = 0.002  # force sensor noise during contact [N]

SOFT_K = 200.0  # deformable-surface stiffness [N/m]
RIGID_K = 2000.0  # rigid-surface stiffness [N/m]

REST_Z = 0.02  # probe rest height above the surface [m]


class Activity(Enum):
    DYN_PUSH = "dyn_push"
    DYN_TAP = "dyn_tap"
    RB_INTER = "rb_inter"
    RB_PUSH_HOLD = "rb_push_hold"
    RB_TAP = "rb_tap"


@dataclass
class Trace:
    force: np.ndarray  # (N, 3) [N]
    position: np.ndarray  # (N, 3) [m]
    velocity: np.ndarray  # (N, 3) [m/s]
    fs_hz: int = FS_HZ
    activity: Optional[str] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("force", "position", "velocity"):
            a = getattr(self, name)
            if a.ndim != 2 or a.shape[1] != 3:
                raise ValueError(f"{name} must be (N, 3), got {a.shape}")
        if not (self.force.shape[0] == self.position.shape[0] == self.velocity.shape[0]):
            raise ValueError("force/position/velocity lengths differ")

    @property
    def n(self) -> int:
        return self.force.shape[0]

    def operator_stream(self) -> np.ndarray:
        """(N, 6) position+velocity, the command-side modality."""
        return np.hstack([self.position, self.velocity])


# ============================================================
# Activity scripts
# ============================================================


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _command_profile(
    activity: Activity, t: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Scripted hand motion: commanded z plus lateral x/y, and stiffness.

    Per-seed jitter on amplitude, rate and phase makes repetitions of an
    activity distinct while keeping the contact pattern.
    """
    amp = rng.uniform(0.9, 1.1)
    rate = rng.uniform(0.95, 1.05)
    phase = rng.uniform(0.0, 2.0 * math.pi)

    if activity is Activity.DYN_PUSH:
        k = SOFT_K
        f0 = 0.25 * rate
        z_cmd = REST_Z - amp * 0.09 * (0.5 - 0.5 * np.cos(2 * math.pi * f0 * t + phase))
    elif activity is Activity.DYN_TAP:
        k = SOFT_K
        f0 = 3.0 * rate
        s = np.sin(2 * math.pi * f0 * t + phase)
        z_cmd = REST_Z - amp * 0.075 * np.maximum(0.0, s) ** 2
    elif activity is Activity.RB_INTER:
        k = RIGID_K
        s = 0.6 * np.sin(2 * math.pi * 1.1 * rate * t + phase) + 0.4 * np.sin(
            2 * math.pi * 2.7 * rate * t + 2.0 * phase
        )
        z_cmd = REST_Z - amp * 0.033 * s
    elif activity is Activity.RB_PUSH_HOLD:
        k = RIGID_K
        period = 4.0 / rate
        u = (t + phase / (2 * math.pi) * period) % period / period  # cycle position
        depth = _smoothstep(u / 0.25) * (1.0 - _smoothstep((u - 0.75) / 0.25))
        tremor = 0.0004 * np.sin(2 * math.pi * 8.0 * t)
        z_cmd = REST_Z - amp * 0.035 * depth + tremor * (depth > 0.5)
    elif activity is Activity.RB_TAP:
        k = RIGID_K
        f0 = 4.0 * rate
        s = np.sin(2 * math.pi * f0 * t + phase)
        z_cmd = REST_Z - amp * 0.055 * np.maximum(0.0, s) ** 4
    else:  # pragma: no cover
        raise ValueError(f"unknown activity {activity}")

    x_cmd = amp * 0.02 * np.sin(2 * math.pi * 0.3 * rate * t + phase)
    y_cmd = amp * 0.015 * np.sin(2 * math.pi * 0.2 * rate * t + 0.5 * phase)
    return z_cmd, x_cmd, y_cmd, k


# ============================================================
# Generator
# ============================================================


def generate_trace(activity: Activity, duration_s: float = 120.0, seed: int = 0) -> Trace:
    """Simulate one activity repetition. Deterministic per (activity, duration, seed).

    The probe's z axis integrates m*a = coupling(z_cmd - z) - contact;
    x/y follow the script kinematically. Contact force is
    k*penetration + c*penetration_rate (never adhesive), with Gaussian
    sensor noise applied only while in contact, so contact-free spans
    read exactly zero.
    """
    n = int(round(duration_s * FS_HZ))
    if n <= 2 * TRIM_SAMPLES:
        raise ValueError(
            f"duration_s={duration_s} leaves no usable samples after trimming "
            f"{TRIM_SAMPLES} from each end at {FS_HZ} Hz"
        )
    rng = np.random.default_rng(seed)
    dt = 1.0 / FS_HZ
    t = np.arange(n) * dt
    z_cmd, x_cmd, y_cmd, k_surf = _command_profile(activity, t, rng)

    z = np.empty(n)
    vz = np.empty(n)
    fz = np.empty(n)
    zi, vi = REST_Z, 0.0
    for i in range(n):
        pen = max(0.0, -zi)
        pen_rate = -vi if pen > 0.0 else 0.0
        f_contact = max(0.0, k_surf * pen + SURFACE_C * pen_rate) if pen > 0.0 else 0.0
        a = (
            COUPLING_K * (z_cmd[i] - zi) + COUPLING_C * (0.0 - vi) + f_contact
        ) / PROBE_MASS_KG
        vi = vi + a * dt
        zi = zi + vi * dt
        z[i] = zi
        vz[i] = vi
        fz[i] = f_contact

    position = np.column_stack([x_cmd, y_cmd, z])
    velocity = np.empty_like(position)
    velocity[1:, 0] = np.diff(x_cmd) * FS_HZ
    velocity[1:, 1] = np.diff(y_cmd) * FS_HZ
    velocity[0, :2] = velocity[1, :2]
    velocity[:, 2] = vz  # integrator velocity == discrete derivative of z

    contact = (-z) > 0.0
    force = np.zeros((n, 3))
    force[:, 2] = fz
    force[:, 0] = -LATERAL_C * velocity[:, 0] * contact
    force[:, 1] = -LATERAL_C * velocity[:, 1] * contact
    force += rng.normal(0.0, NOISE_STD_N, size=(n, 3)) * contact[:, None]

    return Trace(
        force=force,
        position=position,
        velocity=velocity,
        activity=activity.value,
        seed=seed,
    )


# ============================================================
# Trimming and windowing
# ============================================================


@dataclass
class WindowedExample:
    x_top: np.ndarray  # (L, 3) force history rows t-L+1..t
    x_op: np.ndarray  # (L, 6) operator history, same steps
    y: np.ndarray  # (3,) force at t+1
    t: int  # anchor index within the trimmed trace


class WindowDataset(Sequence):
    """Lazy view over all length-L windows of a trimmed trace."""

    def __init__(self, force: np.ndarray, op: np.ndarray, history_len: int):
        self._force = force
        self._op = op
        self._l = history_len

    def __len__(self) -> int:
        return max(0, self._force.shape[0] - self._l)

    def __getitem__(self, idx: int) -> WindowedExample:
        n = len(self)
        if idx < 0:
            idx += n
        if not 0 <= idx < n:
            raise IndexError(idx)
        t = idx + self._l - 1
        return WindowedExample(
            x_top=self._force[t - self._l + 1 : t + 1],
            x_op=self._op[t - self._l + 1 : t + 1],
            y=self._force[t + 1],
            t=t,
        )


def trim_trace(trace: Trace) -> Trace:
    """Drop the first and last TRIM_SAMPLES samples (rig settle/teardown)."""
    if trace.n <= 2 * TRIM_SAMPLES:
        raise ValueError(
            f"trace of {trace.n} samples has no usable region after trimming"
        )
    sl = slice(TRIM_SAMPLES, trace.n - TRIM_SAMPLES)
    return Trace(
        force=trace.force[sl],
        position=trace.position[sl],
        velocity=trace.velocity[sl],
        fs_hz=trace.fs_hz,
        activity=trace.activity,
        seed=trace.seed,
    )


def trim_and_window(trace: Trace, history_len: int) -> WindowDataset:
    """All single-step supervised windows of the trimmed trace.

    A trace with U usable samples yields U - L windows: anchors run from
    t = L-1 to U-2, each pairing L history rows with the force at t+1.
    """
    if history_len < 1:
        raise ValueError(f"history_len must be >= 1, got {history_len}")
    trimmed = trim_trace(trace)
    if len(range(history_len - 1, trimmed.n - 1)) <= 0:
        raise ValueError("trace too short for this history length")
    return WindowDataset(trimmed.force, trimmed.operator_stream(), history_len)


# ============================================================
# CSV round trip
# ============================================================

_HEADER = "t,fx,fy,fz,px,py,pz,vx,vy,vz"


def write_trace_csv(trace: Trace, path) -> None:
    """Write `t,fx,fy,fz,px,py,pz,vx,vy,vz` rows at 9 significant digits."""
    rows = [_HEADER]
    f, p, v = trace.force, trace.position, trace.velocity
    for i in range(trace.n):
        vals = (f[i, 0], f[i, 1], f[i, 2], p[i, 0], p[i, 1], p[i, 2], v[i, 0], v[i, 1], v[i, 2])
        rows.append(str(i) + "," + ",".join(f"{x:.9g}" for x in vals))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def read_trace_csv(path) -> Trace:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _HEADER:
        got = lines[0] if lines else "<empty file>"
        raise ValueError(f"{path}: line 1: expected header {_HEADER!r}, got {got!r}")
    data = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != 10:
            raise ValueError(f"{path}: line {ln_no}: expected 10 columns, got {len(parts)}")
        try:
            data.append([float(x) for x in parts[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: line {ln_no}: non-numeric field ({exc})") from None
    if not data:
        raise ValueError(f"{path}: no samples")
    arr = np.asarray(data)
    return Trace(force=arr[:, 0:3], position=arr[:, 3:6], velocity=arr[:, 6:9])
