"""Synthetic IMU data from a spherical pendulum swinging about a fixed joint centre.

The pendulum orientation follows sinusoidal rotations about the sensor x, y
and z axes (x and y in quadrature, so the limb traces an ellipse). Sensor
signals are produced by evaluating the rigid-body acceleration relation with
the centre of rotation held still, then adding white Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attitude import GRAVITY
from .core import ImuStream

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PendulumConfig:
    duration: float = 10.0
    fs: float = 100.0
    amp_x: float = 17.0  # deg
    amp_y: float = 9.0
    amp_z: float = 3.0
    period_xy: float = 1.0
    period_z: float = 1.5
    r_base: tuple = (-0.060, 0.020, 0.200)  # m, sensor frame, IMU -> COR
    phase_x: float = 0.0  # rad
    phase_y: float = 0.0
    phase_z: float = 0.0

    def __post_init__(self):
        if self.duration <= 0 or self.fs <= 0:
            raise ValueError("duration and fs must be positive")
        if self.period_xy <= 0 or self.period_z <= 0:
            raise ValueError("periods must be positive")
        if len(self.r_base) != 3 or not np.all(np.isfinite(self.r_base)):
            raise ValueError("r_base must be a finite 3-vector")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.fs))


@dataclass(frozen=True)
class StaConfig:
    """Sinusoidal soft-tissue displacement of the IMU relative to the bone."""

    enabled: bool = False
    freq: float = 1.0  # Hz
    amp: tuple = (0.020, 0.005, 0.020)  # m
    phase: tuple = (0.0, 0.0, 0.0)  # rad
    physical: bool = False  # add the acceleration caused by the displacement itself

    def __post_init__(self):
        if any(a < 0 for a in self.amp):
            raise ValueError("STA amplitudes must be non-negative")


@dataclass(frozen=True)
class NoiseSpec:
    gyro_sd: float = np.deg2rad(0.0017)  # rad/s
    accel_sd: float = 0.02  # m/s^2
    seed: int = 0

    def __post_init__(self):
        if self.gyro_sd < 0 or self.accel_sd < 0:
            raise ValueError("noise standard deviations must be non-negative")


NOISE_FREE = NoiseSpec(gyro_sd=0.0, accel_sd=0.0)


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    stream: ImuStream
    truth_r: np.ndarray
    truth_C: np.ndarray
    truth_omega: np.ndarray
    truth_omegadot: np.ndarray
    truth_aA: np.ndarray
    config: PendulumConfig = field(default_factory=PendulumConfig)
    sta: StaConfig = field(default_factory=StaConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    @property
    def t(self) -> np.ndarray:
        return self.stream.t


def _angles(cfg: PendulumConfig, t):
    """Euler angles and their first two derivatives, each shaped (3, N)."""
    wxy = TWO_PI / cfg.period_xy
    wz = TWO_PI / cfg.period_z
    ax, ay, az = np.deg2rad([cfg.amp_x, cfg.amp_y, cfg.amp_z])
    px = wxy * t + cfg.phase_x
    py = wxy * t + cfg.phase_y
    pz = wz * t + cfg.phase_z
    ang = np.array([ax * np.sin(px), ay * np.cos(py), az * np.sin(pz)])
    vel = np.array([ax * wxy * np.cos(px), -ay * wxy * np.sin(py), az * wz * np.cos(pz)])
    acc = np.array([-ax * wxy**2 * np.sin(px), -ay * wxy**2 * np.cos(py), -az * wz**2 * np.sin(pz)])
    return ang, vel, acc


def _trajectory(cfg: PendulumConfig, t: np.ndarray):
    (c, b, a), (dc, db, da), (ddc, ddb, dda) = _angles(cfg, t)
    sc, cc = np.sin(c), np.cos(c)
    sb, cb = np.sin(b), np.cos(b)
    sa, ca = np.sin(a), np.cos(a)

    # C = Rz(a) Ry(b) Rx(c), sensor -> global
    C = np.empty(t.shape + (3, 3))
    C[..., 0, 0] = ca * cb
    C[..., 0, 1] = ca * sb * sc - sa * cc
    C[..., 0, 2] = ca * sb * cc + sa * sc
    C[..., 1, 0] = sa * cb
    C[..., 1, 1] = sa * sb * sc + ca * cc
    C[..., 1, 2] = sa * sb * cc - ca * sc
    C[..., 2, 0] = -sb
    C[..., 2, 1] = cb * sc
    C[..., 2, 2] = cb * cc

    # body-frame rates of the Z-Y-X sequence
    omega = np.stack([
        dc - da * sb,
        db * cc + da * cb * sc,
        -db * sc + da * cb * cc,
    ], axis=-1)
    omegadot = np.stack([
        ddc - dda * sb - da * db * cb,
        ddb * cc - db * dc * sc + dda * cb * sc - da * db * sb * sc + da * dc * cb * cc,
        -ddb * sc - db * dc * cc + dda * cb * cc - da * db * sb * cc - da * dc * cb * sc,
    ], axis=-1)
    return C, omega, omegadot


def pendulum_trajectory(cfg: PendulumConfig, t: float):
    """Orientation, body angular velocity and angular acceleration at time ``t``.

    Returns
    -------
    C : (3, 3) array
        Sensor-to-global direction cosine matrix.
    omega, omegadot : (3,) arrays
        Exact body-frame rates, rad/s and rad/s^2.
    """
    if not 0.0 <= t <= cfg.duration:
        raise ValueError(f"t={t} outside [0, {cfg.duration}]")
    C, w, wd = _trajectory(cfg, np.asarray(float(t)))
    return C, w, wd


def sta_r(cfg: StaConfig, base, t):
    """IMU-joint vector at time(s) ``t``; returns shape (3,) or (N, 3)."""
    base = np.asarray(base, dtype=float)
    t = np.asarray(t, dtype=float)
    if not cfg.enabled:
        return np.broadcast_to(base, t.shape + (3,)).copy()
    arg = TWO_PI * cfg.freq * t[..., None] + np.asarray(cfg.phase)
    return base + np.asarray(cfg.amp) * np.sin(arg)


def _sta_derivatives(cfg: StaConfig, t: np.ndarray):
    w = TWO_PI * cfg.freq
    arg = w * t[:, None] + np.asarray(cfg.phase)
    amp = np.asarray(cfg.amp)
    return amp * w * np.cos(arg), -amp * w**2 * np.sin(arg)


def rigid_body_acceleration(omega, omegadot, r):
    """Linear acceleration of a point at ``-r`` from a fixed pivot, sensor frame."""
    return -np.cross(omegadot, r) - np.cross(omega, np.cross(omega, r))


def generate(cfg: PendulumConfig | None = None, sta: StaConfig | None = None,
             noise: NoiseSpec | None = None) -> SyntheticDataset:
    """Simulate one pendulum test.

    The same ``noise.seed`` always yields a bit-identical dataset. Each of the
    six sensor channels draws from its own child generator so channels stay
    independent of one another.
    """
    cfg = cfg or PendulumConfig()
    sta = sta or StaConfig()
    noise = noise or NoiseSpec()

    t = np.arange(cfg.n_samples) / cfg.fs
    C, omega, omegadot = _trajectory(cfg, t)
    r = sta_r(sta, cfg.r_base, t)
    a_A = rigid_body_acceleration(omega, omegadot, r)
    if sta.enabled and sta.physical:
        r_dot, r_ddot = _sta_derivatives(sta, t)
        a_A = a_A - r_ddot - 2.0 * np.cross(omega, r_dot)

    f = a_A - np.einsum("nji,j->ni", C, GRAVITY)

    children = np.random.SeedSequence(noise.seed).spawn(6)
    gens = [np.random.default_rng(s) for s in children]
    n = len(t)
    gyro_noise = np.column_stack([g.standard_normal(n) for g in gens[:3]]) * noise.gyro_sd
    acc_noise = np.column_stack([g.standard_normal(n) for g in gens[3:]]) * noise.accel_sd

    stream = ImuStream(t, omega + gyro_noise, f + acc_noise, cfg.fs)
    return SyntheticDataset(stream, r, C, omega, omegadot, a_A, cfg, sta, noise)
