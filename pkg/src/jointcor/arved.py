"""Adaptive EKF estimate of the IMU-to-joint-centre vector, one value per sample.

State layout (12): ``[r, r_dot, omega, omega_dot]``. Prediction integrates
``r_dot`` into ``r`` and ``omega_dot`` into ``omega``; the update compares the
gravity-free accelerometer signal with ``-omega_dot x r - omega x (omega x r)``
and the gyro with ``omega``. ``r_dot`` is never observed directly and moves
only through its covariance with ``r``.

The ``arve`` variant runs the same filter with ``r_dot`` frozen at zero
(no process noise, no initial uncertainty), so ``r`` can only follow the
data through its own random walk.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import mrvs
from .attitude import (AttitudeConfig, AttitudeState, attitude_step, initial_attitude,
                       propagate_only, realign)
from .core import ImuSample, ImuStream, cross, skew

R_SL = slice(0, 3)
RD_SL = slice(3, 6)
W_SL = slice(6, 9)
WD_SL = slice(9, 12)

VARIANTS = ("arved", "arve")


class InitializationError(RuntimeError):
    """The batch solve used to seed the filter failed."""


class FilterDivergenceError(FloatingPointError):
    """Innovation covariance could not be factorised."""


@dataclass(frozen=True)
class ArvedConfig:
    """Noise model and start-up settings.

    Process densities ``q_*`` are per axis, in (unit)^2/s of the
    corresponding state block; ``r_acc`` and ``r_gyro`` are measurement
    variances. ``p0_*`` are initial per-axis variances.
    """

    variant: str = "arved"
    q_r: float = 1e-6
    q_rdot: float = 1e-1
    q_omega: float = 1e-6
    q_omegadot: float = 1e3
    r_acc: float = 0.02**2
    r_gyro: float = np.deg2rad(0.0017) ** 2
    p0_r: float = 1e-4
    p0_rdot: float = 1e-2
    p0_omega: float = 1e-6
    p0_omegadot: float = 1.0
    init_samples: int = 60
    transitory: float = 1.0  # s of output flagged as converging

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        values = (self.q_r, self.q_rdot, self.q_omega, self.q_omegadot, self.r_acc,
                  self.r_gyro, self.p0_r, self.p0_rdot, self.p0_omega, self.p0_omegadot)
        if any(v < 0 for v in values):
            raise ValueError("covariance entries must be non-negative")
        if self.init_samples < 4:
            raise ValueError("init_samples must be at least 4")

    def effective(self) -> "ArvedConfig":
        """Config with the ablation applied (r_dot frozen for ``arve``)."""
        if self.variant == "arve":
            return replace(self, q_rdot=0.0, p0_rdot=0.0)
        return self

    def process_noise(self, dt: float) -> np.ndarray:
        c = self.effective()
        q = np.repeat([c.q_r, c.q_rdot, c.q_omega, c.q_omegadot], 3)
        return np.diag(q * dt)

    def measurement_noise(self) -> np.ndarray:
        return np.diag(np.repeat([self.r_acc, self.r_gyro], 3))

    def initial_covariance(self) -> np.ndarray:
        c = self.effective()
        return np.diag(np.repeat([c.p0_r, c.p0_rdot, c.p0_omega, c.p0_omegadot], 3))


@dataclass(frozen=True, eq=False)
class EstimatorState:
    x: np.ndarray
    P: np.ndarray

    @classmethod
    def from_parts(cls, r, r_dot, omega, omega_dot, P) -> "EstimatorState":
        x = np.concatenate([np.asarray(v, dtype=float) for v in (r, r_dot, omega, omega_dot)])
        return cls(x, np.asarray(P, dtype=float))

    @property
    def r(self) -> np.ndarray:
        return self.x[R_SL]

    @property
    def r_dot(self) -> np.ndarray:
        return self.x[RD_SL]

    @property
    def omega(self) -> np.ndarray:
        return self.x[W_SL]

    @property
    def omega_dot(self) -> np.ndarray:
        return self.x[WD_SL]


def transition_matrix(dt: float) -> np.ndarray:
    F = np.eye(12)
    F[R_SL, RD_SL] = dt * np.eye(3)
    F[W_SL, WD_SL] = dt * np.eye(3)
    return F


def predict(state: EstimatorState, dt: float, cfg: ArvedConfig,
            F: np.ndarray | None = None, Q: np.ndarray | None = None) -> EstimatorState:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if F is None:
        F = transition_matrix(dt)
    if Q is None:
        Q = cfg.process_noise(dt)
    x = F @ state.x
    P = F @ state.P @ F.T + Q
    return EstimatorState(x, 0.5 * (P + P.T))


def measurement_model(state: EstimatorState):
    """Predicted linear acceleration and turn rate."""
    r, w, wd = state.r, state.omega, state.omega_dot
    wxr = cross(w, r)
    a_pred = -cross(wd, r) - cross(w, wxr)
    return a_pred, w.copy()


def measurement_jacobian(state: EstimatorState) -> np.ndarray:
    """6x12 Jacobian of :func:`measurement_model` with respect to the state."""
    r, w, wd = state.r, state.omega, state.omega_dot
    Sw = skew(w)
    H = np.zeros((6, 12))
    H[0:3, R_SL] = -skew(wd) - Sw @ Sw
    H[0:3, W_SL] = skew(cross(w, r)) + Sw @ skew(r)
    H[0:3, WD_SL] = skew(r)
    H[3:6, W_SL] = np.eye(3)
    return H


def update(state: EstimatorState, obs_a, obs_omega, cfg: ArvedConfig,
           R: np.ndarray | None = None) -> EstimatorState:
    if R is None:
        R = cfg.measurement_noise()
    a_pred, w_pred = measurement_model(state)
    y = np.concatenate([np.asarray(obs_a, dtype=float) - a_pred,
                        np.asarray(obs_omega, dtype=float) - w_pred])
    H = measurement_jacobian(state)
    PHt = state.P @ H.T
    S = H @ PHt + R
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise FilterDivergenceError("innovation covariance is not positive definite") from exc
    if not np.all(np.isfinite(L)) or np.min(np.diag(L)) <= 1e-150:
        raise FilterDivergenceError("innovation covariance is singular")
    # K = P H^T S^-1 via two triangular solves
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    x = state.x + K @ y
    IKH = np.eye(12) - K @ H
    P = IKH @ state.P @ IKH.T + K @ R @ K.T
    P = 0.5 * (P + P.T)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
        raise FilterDivergenceError("non-finite state after update")
    return EstimatorState(x, P)


def initialize_r0(stream: ImuStream, a_A, n: int) -> np.ndarray:
    """Batch least-squares r over the first ``n`` samples."""
    if n < 4:
        raise ValueError("initialisation needs at least 4 samples")
    if len(stream) < n:
        raise ValueError(f"stream has {len(stream)} samples, initialisation needs {n}")
    head = stream.slice(0, n)
    try:
        return mrvs.solve_batch(head, np.asarray(a_A)[:n])
    except mrvs.DegenerateExcitationError as exc:
        raise InitializationError(f"cannot initialise r from the first {n} samples: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ArvedResult:
    """Per-sample output of :func:`run`.

    ``index`` holds the stream positions of each estimate, so truth series
    can be aligned with ``truth[result.index]``.
    """

    t: np.ndarray
    index: np.ndarray
    r: np.ndarray
    P_r: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray
    converging: np.ndarray
    r0: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return len(self.t)


def warm_up(stream: ImuStream, n: int, attitude: AttitudeConfig = AttitudeConfig()):
    """Seed both stages from the first ``n`` samples.

    The tilt taken from the first accelerometer sample is wrong by however
    much the limb is already accelerating. Orientation is therefore carried
    by the gyro alone over the window, which leaves a single constant tilt
    error; that error and r are then solved together by least squares.

    Returns
    -------
    r0 : (3,) array
    att : AttitudeState
        Aligned orientation at sample ``n - 1``.
    a_A : (n, 3) array
        Gravity-free acceleration over the window after alignment.
    """
    if n < 4:
        raise ValueError("initialisation needs at least 4 samples")
    if len(stream) < n:
        raise ValueError(f"stream has {len(stream)} samples, initialisation needs {n}")
    head = stream.slice(0, n)
    att0 = initial_attitude(stream.f[0], attitude)
    Cs = propagate_only(att0, head, n)
    try:
        r0, R_fix = mrvs.solve_batch_tilt(head, Cs, attitude.gravity.vector)
    except mrvs.DegenerateExcitationError as exc:
        raise InitializationError(f"cannot initialise from the first {n} samples: {exc}") from exc
    last = AttitudeState(Cs[-1], att0.P_att, stream.omega[n - 1].copy(), stream.omega[n - 2].copy())
    att = realign(last, R_fix, attitude.p_aligned)
    C_fixed = np.einsum("ij,njk->nik", R_fix, Cs)
    a_A = head.f + np.einsum("nji,j->ni", C_fixed, attitude.gravity.vector)
    return r0, att, a_A


def gravity_free_acceleration(stream: ImuStream, n: int,
                               attitude: AttitudeConfig = AttitudeConfig()):
    """Stage one: linear acceleration for every sample of ``stream``.

    Orientation over the first ``n`` samples comes from :func:`warm_up`;
    afterwards the gated tilt filter runs sample by sample.

    Returns
    -------
    a_A : (N, 3) array
    r0 : (3,) array
        The r found while aligning, a by-product of the warm-up.
    """
    r0, att, a_head = warm_up(stream, n, attitude)
    g = attitude.gravity.vector
    a_A = np.empty((len(stream), 3))
    a_A[:n] = a_head
    dt = stream.dt
    for k in range(n, len(stream)):
        sample = stream[k]
        att = attitude_step(att, sample, dt, attitude)
        a_A[k] = sample.f + att.C.T @ g
    return a_A, r0


class ArvedEstimator:
    """Sample-by-sample estimator for live use.

    Holds the tilt filter and EKF state of one stream. Create it with
    :meth:`start` from the first ``cfg.init_samples`` samples, then call
    :meth:`step` for each new sample. Not safe to share between threads.
    """

    def __init__(self, cfg: ArvedConfig, state: EstimatorState, dt: float,
                 attitude_state: AttitudeState | None = None,
                 attitude: AttitudeConfig = AttitudeConfig()):
        self.cfg = cfg
        self.state = state
        self.dt = dt
        self.attitude_state = attitude_state
        self.attitude = attitude
        c = cfg.effective()
        self._c = c
        self._F = transition_matrix(dt)
        self._Q = c.process_noise(dt)
        self._R = c.measurement_noise()

    @classmethod
    def start(cls, head: ImuStream, cfg: ArvedConfig = ArvedConfig(), a_A=None,
              attitude: AttitudeConfig = AttitudeConfig()) -> "ArvedEstimator":
        n = cfg.init_samples
        if a_A is None:
            r0, att, _ = warm_up(head, n, attitude)
        else:
            r0, att = initialize_r0(head, a_A, n), None
        wd0 = mrvs.numeric_omega_dot(head.slice(0, n))[-1]
        state = EstimatorState.from_parts(r0, np.zeros(3), head.omega[n - 1], wd0,
                                          cfg.initial_covariance())
        return cls(cfg, state, head.dt, att, attitude)

    def step(self, sample: ImuSample, a_A=None) -> EstimatorState:
        """Consume one sample; ``a_A`` overrides the internal gravity removal."""
        if a_A is None:
            if self.attitude_state is None:
                raise ValueError("estimator was started without a tilt filter; pass a_A")
            self.attitude_state = attitude_step(self.attitude_state, sample, self.dt, self.attitude)
            a_A = sample.f + self.attitude_state.C.T @ self.attitude.gravity.vector
        state = predict(self.state, self.dt, self._c, self._F, self._Q)
        self.state = update(state, a_A, sample.omega, self._c, self._R)
        return self.state


def run(stream: ImuStream, cfg: ArvedConfig = ArvedConfig(), a_A=None,
        attitude: AttitudeConfig = AttitudeConfig()) -> ArvedResult:
    """Two-stage estimation over a recorded stream.

    The first ``cfg.init_samples`` samples seed r and the orientation; one
    estimate is produced for every later sample, and the first
    ``cfg.transitory`` seconds of those are flagged as converging.

    ``a_A`` may be given to bypass the tilt filter, e.g. when the IMU
    reports its own orientation; r is then seeded by :func:`initialize_r0`.
    """
    n = cfg.init_samples
    if len(stream) <= n:
        raise ValueError(f"stream needs more than {n} samples")
    if a_A is not None:
        a_A = np.asarray(a_A, dtype=float)
        if a_A.shape != (len(stream), 3):
            raise ValueError("a_A must have one row per stream sample")
    est = ArvedEstimator.start(stream.slice(0, n), cfg, None if a_A is None else a_A[:n], attitude)
    r0 = est.state.r.copy()

    m = len(stream) - n
    r_out = np.empty((m, 3))
    P_out = np.empty((m, 3, 3))
    w_out = np.empty((m, 3))
    wd_out = np.empty((m, 3))
    for j, k in enumerate(range(n, len(stream))):
        state = est.step(stream[k], None if a_A is None else a_A[k])
        r_out[j] = state.r
        P_out[j] = state.P[R_SL, R_SL]
        w_out[j] = state.omega
        wd_out[j] = state.omega_dot

    t = stream.t[n:]
    converging = (t - t[0]) < cfg.transitory
    return ArvedResult(t, np.arange(n, len(stream)), r_out, P_out, w_out, wd_out, converging, r0)
