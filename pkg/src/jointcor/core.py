"""Vector helpers and the IMU time-series container shared by all estimators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


def cross(a, b) -> np.ndarray:
    """Right-handed cross product of two 3-vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def skew(v) -> np.ndarray:
    """Return S such that ``S @ u == cross(v, u)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def skew_many(v: np.ndarray) -> np.ndarray:
    """Stacked version of :func:`skew` for an (N, 3) array."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rotvec_to_matrix(phi) -> np.ndarray:
    """Rotation matrix ``exp(skew(phi))`` via the Rodrigues formula."""
    phi = np.asarray(phi, dtype=float)
    angle = float(np.linalg.norm(phi))
    K = skew(phi)
    if angle < 1e-8:
        # second-order series; exact to double precision at this size
        return np.eye(3) + K + 0.5 * K @ K
    s = np.sin(angle) / angle
    c = (1.0 - np.cos(angle)) / angle**2
    return np.eye(3) + s * K + c * K @ K


def orthonormalize(C: np.ndarray) -> np.ndarray:
    """Closest rotation matrix to ``C`` (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(C)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


@dataclass(frozen=True)
class ImuSample:
    t: float
    omega: np.ndarray
    f: np.ndarray


@dataclass(frozen=True, eq=False)
class ImuStream:
    """Uniformly sampled IMU recording in the sensor frame.

    Attributes
    ----------
    t : (N,) array
        Strictly increasing timestamps, s.
    omega : (N, 3) array
        Gyroscope turn rate, rad/s.
    f : (N, 3) array
        Accelerometer specific force, m/s^2.
    fs : float
        Nominal sampling rate, Hz.
    """

    t: np.ndarray
    omega: np.ndarray
    f: np.ndarray
    fs: float = 100.0

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        omega = np.array(self.omega, dtype=float).reshape(-1, 3)
        f = np.array(self.f, dtype=float).reshape(-1, 3)
        if t.ndim != 1 or len(t) != len(omega) or len(t) != len(f):
            raise ValueError("t, omega and f must have the same length")
        if self.fs <= 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(omega)) and np.all(np.isfinite(f))):
            raise ValueError("IMU stream contains non-finite values")
        if len(t) > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                k = int(np.argmax(dt <= 0)) + 1
                raise ValueError(f"timestamps not strictly increasing at sample {k}")
            period = 1.0 / self.fs
            if np.max(np.abs(dt - period)) > 0.1 * period:
                raise ValueError(
                    f"non-uniform sampling: spacing deviates from 1/fs={period:g} s by more than 10 %"
                )
        for arr in (t, omega, f):
            arr.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "f", f)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, k: int) -> ImuSample:
        return ImuSample(float(self.t[k]), self.omega[k], self.f[k])

    def __iter__(self) -> Iterator[ImuSample]:
        for k in range(len(self)):
            yield self[k]

    @property
    def dt(self) -> float:
        return 1.0 / self.fs

    def slice(self, start: int, stop: int | None = None) -> "ImuStream":
        return ImuStream(self.t[start:stop], self.omega[start:stop], self.f[start:stop], self.fs)

    @classmethod
    def from_samples(cls, samples, fs: float = 100.0) -> "ImuStream":
        samples = list(samples)
        return cls(
            np.array([s.t for s in samples]),
            np.array([s.omega for s in samples]),
            np.array([s.f for s in samples]),
            fs,
        )
