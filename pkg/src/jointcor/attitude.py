"""Tilt estimation and gravity removal.

A direction cosine matrix is propagated with the gyroscope and nudged toward
the accelerometer's gravity direction at quasi-static instants, i.e. when the
specific-force norm is within ``gate_tol`` of the gravity norm. Heading is not
observable without a magnetometer and is left to the gyro alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImuSample, ImuStream, cross, orthonormalize, rotvec_to_matrix

G_NORM = 9.8
GRAVITY = np.array([0.0, 0.0, -G_NORM])  # global frame, pointing down
_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class GravityModel:
    g: tuple = (0.0, 0.0, -G_NORM)
    gate_tol: float = 0.04

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.g, dtype=float)


@dataclass(frozen=True)
class AttitudeConfig:
    """Tuning of the tilt filter.

    ``gyro_var`` is the orientation random-walk density in rad^2/s and
    ``acc_dir_var`` the variance (rad^2) assigned to the accelerometer's
    gravity direction at a gated instant; the latter is dominated by residual
    body acceleration, not sensor noise.
    """

    gravity: GravityModel = GravityModel()
    gyro_var: float = 1e-10
    acc_dir_var: float = 2e-2
    p0: float = 3e-3
    p_aligned: float = 1e-6  # tilt variance after a model-based alignment


@dataclass(frozen=True, eq=False)
class AttitudeState:
    C: np.ndarray  # sensor -> global
    P_att: np.ndarray  # rad^2, sensor frame
    omega_prev: np.ndarray | None = None  # last two gyro samples, for rate interpolation
    omega_prev2: np.ndarray | None = None

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.shape != (3, 3) or not np.all(np.isfinite(C)):
            raise ValueError("C must be a finite 3x3 matrix")
        if np.max(np.abs(C.T @ C - np.eye(3))) > 1e-9 or abs(np.linalg.det(C) - 1.0) > 1e-9:
            raise ValueError("C is not a proper rotation matrix")


def initial_attitude(f, cfg: AttitudeConfig = AttitudeConfig()) -> AttitudeState:
    """Tilt from a single accelerometer reading assuming the sensor is at rest; yaw = 0."""
    f = np.asarray(f, dtype=float)
    roll = np.arctan2(f[1], f[2])
    pitch = np.arctan2(-f[0], np.hypot(f[1], f[2]))
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return AttitudeState(Ry @ Rx, cfg.p0 * np.eye(3))


def propagation_rotation(omega_prev, omega, dt: float, omega_prev2=None) -> np.ndarray:
    """Body rotation over the last step from up to three gyro samples.

    The rate is integrated over the step from a quadratic through the last
    three samples (trapezoid with two, rectangle with one), plus the
    second-order coning term. Reduces to ``exp(skew(omega * dt))`` when the
    rate is constant.
    """
    if omega_prev is None:
        return rotvec_to_matrix(omega * dt)
    if omega_prev2 is None:
        inc = 0.5 * (omega_prev + omega) * dt
    else:
        inc = (5.0 * omega + 8.0 * omega_prev - omega_prev2) * (dt / 12.0)
    return rotvec_to_matrix(inc + cross(omega_prev, omega) * dt**2 / 12.0)


def gate_open(f, gravity: GravityModel) -> bool:
    g = np.linalg.norm(gravity.vector)
    return abs(np.linalg.norm(f) - g) <= gravity.gate_tol * g


def attitude_step(state: AttitudeState, sample: ImuSample, dt: float,
                  cfg: AttitudeConfig = AttitudeConfig()) -> AttitudeState:
    """Propagate with the gyro, then correct tilt if the gravity gate is open.

    The correction turns the predicted "up" direction toward the measured
    specific force by a fraction of the angle between them; the fraction is
    a scalar Kalman gain from the tilt part of ``P_att``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    omega = np.asarray(sample.omega, dtype=float)
    f = np.asarray(sample.f, dtype=float)
    if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(f))):
        raise ValueError("non-finite IMU sample")

    C = state.C @ propagation_rotation(state.omega_prev, omega, dt, state.omega_prev2)
    P = state.P_att + cfg.gyro_var * dt * np.eye(3)

    if gate_open(f, cfg.gravity):
        up_pred = C.T @ (-cfg.gravity.vector / np.linalg.norm(cfg.gravity.vector))
        up_meas = f / np.linalg.norm(f)
        axis = cross(up_pred, up_meas)
        s = np.linalg.norm(axis)
        if s > 1e-15:
            angle = np.arctan2(s, up_pred @ up_meas)
            proj = np.eye(3) - np.outer(up_pred, up_pred)
            p_tilt = 0.5 * np.trace(proj @ P @ proj)
            gain = p_tilt / (p_tilt + cfg.acc_dir_var)
            # rotating up_pred toward up_meas means a body rotation of -angle about axis
            C = C @ rotvec_to_matrix(-gain * angle * axis / s)
            P = P - gain * proj @ P @ proj
            P = 0.5 * (P + P.T)

    return AttitudeState(orthonormalize(C), P, omega.copy(), state.omega_prev)


def linear_acceleration(sample: ImuSample, state: AttitudeState,
                        gravity: GravityModel = GravityModel()) -> np.ndarray:
    """Remove gravity from the specific force: ``a = f + C^T g``."""
    return np.asarray(sample.f, dtype=float) + state.C.T @ gravity.vector


def propagate_only(state: AttitudeState, stream: ImuStream, stop: int) -> np.ndarray:
    """Gyro-only orientations for samples ``0 .. stop-1`` starting from ``state`` at sample 0."""
    Cs = np.empty((stop, 3, 3))
    C = state.C
    Cs[0] = C
    w = stream.omega
    for k in range(1, stop):
        if k >= 2:
            step = propagation_rotation(w[k - 1], w[k], stream.dt, w[k - 2])
        elif len(w) > 2:
            # first step: the quadratic through samples 0..2, read backwards in time
            step = propagation_rotation(w[1], w[0], -stream.dt, w[2]).T
        else:
            step = propagation_rotation(w[0], w[1], stream.dt)
        C = C @ step
        Cs[k] = C
    return Cs


def realign(state: AttitudeState, R_fix, p_tilt: float) -> AttitudeState:
    """Apply a global-frame correction rotation and reset the tilt variance."""
    return AttitudeState(orthonormalize(np.asarray(R_fix) @ state.C), p_tilt * np.eye(3),
                         state.omega_prev, state.omega_prev2)


def track(stream: ImuStream, cfg: AttitudeConfig = AttitudeConfig()):
    """Run the tilt filter over a stream.

    Returns
    -------
    C : (N, 3, 3) array
        Estimated orientation per sample.
    a_A : (N, 3) array
        Gravity-free linear acceleration per sample.
    """
    n = len(stream)
    Cs = np.empty((n, 3, 3))
    state = initial_attitude(stream.f[0], cfg)
    Cs[0] = state.C
    dt = stream.dt
    for k in range(1, n):
        state = attitude_step(state, stream[k], dt, cfg)
        Cs[k] = state.C
    a_A = stream.f + np.einsum("nji,j->ni", Cs, cfg.gravity.vector)
    return Cs, a_A
