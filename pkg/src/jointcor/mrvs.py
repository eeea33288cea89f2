"""Least-squares joint-centre estimation, whole-test and sliding-window.

Each sample contributes ``a_A = M r`` where ``M`` depends on the turn rate
and its numerical derivative. Stacking samples gives an over-determined
linear system that is solved by SVD. A window whose stacked matrix is
nearly rank deficient (the turn rate is negligible or parallel to its
derivative throughout) is flagged invalid instead of solved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .attitude import AttitudeConfig, initial_attitude, propagate_only
from .core import ImuStream


class DegenerateExcitationError(ValueError):
    """The stacked system does not determine all three components of r."""


SIGMA_RATIO_MIN = 1e-3


@dataclass(frozen=True)
class WindowEstimate:
    t: float
    r: np.ndarray
    valid: bool
    conditioning: float  # smallest singular value of the stacked system


def build_M(omega, omega_dot) -> np.ndarray:
    """System matrix with ``M @ r == -omega_dot x r - omega x (omega x r)``.

    Accepts (3,) or (N, 3) inputs. With r pointing from the IMU to the joint
    centre this is ``-skew(omega_dot) - skew(omega) @ skew(omega)``.
    """
    w = np.asarray(omega, dtype=float)
    wd = np.asarray(omega_dot, dtype=float)
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    ax, ay, az = wd[..., 0], wd[..., 1], wd[..., 2]
    M = np.empty(w.shape[:-1] + (3, 3))
    M[..., 0, 0] = wy**2 + wz**2
    M[..., 0, 1] = az - wx * wy
    M[..., 0, 2] = -ay - wx * wz
    M[..., 1, 0] = -az - wx * wy
    M[..., 1, 1] = wx**2 + wz**2
    M[..., 1, 2] = ax - wy * wz
    M[..., 2, 0] = ay - wx * wz
    M[..., 2, 1] = -ax - wy * wz
    M[..., 2, 2] = wx**2 + wy**2
    return M


# five-point stencils: row j differentiates at offset j from the first of 5 points
_STENCILS = np.array([
    [-25.0, 48.0, -36.0, 16.0, -3.0],
    [-3.0, -10.0, 18.0, -6.0, 1.0],
    [1.0, -8.0, 0.0, 8.0, -1.0],
    [-1.0, 6.0, -18.0, 10.0, 3.0],
    [3.0, -16.0, 36.0, -48.0, 25.0],
]) / 12.0


def numeric_omega_dot(stream: ImuStream, smooth: int = 0) -> np.ndarray:
    """Angular acceleration by finite differences of the raw gyro.

    Fourth-order central differences inside and one-sided stencils of the
    same order over the first and last two samples; streams of 3 or 4
    samples fall back to second-order differences. Polynomials up to degree
    four are differentiated exactly. ``smooth`` > 1 applies a centred moving
    average of that length to the gyro first (off by default).
    """
    n = len(stream)
    if n < 3:
        raise ValueError("need at least 3 samples to differentiate")
    w = stream.omega
    if smooth and smooth > 1:
        kernel = np.ones(smooth) / smooth
        w = np.column_stack([np.convolve(w[:, i], kernel, mode="same") for i in range(3)])
    h = stream.dt
    if n < 5:
        return np.gradient(w, h, axis=0, edge_order=2)
    out = np.empty_like(w)
    out[2:-2] = (w[:-4] - 8.0 * w[1:-3] + 8.0 * w[3:-1] - w[4:]) / (12.0 * h)
    out[0] = _STENCILS[0] @ w[:5] / h
    out[1] = _STENCILS[1] @ w[:5] / h
    out[-2] = _STENCILS[3] @ w[-5:] / h
    out[-1] = _STENCILS[4] @ w[-5:] / h
    return out


def _lstsq_stacked(M: np.ndarray, a: np.ndarray):
    """Solve stacked (..., n, 3, 3) / (..., n, 3) systems; returns r and singular values."""
    A = M.reshape(M.shape[:-3] + (-1, 3))
    b = a.reshape(a.shape[:-2] + (-1,))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    Utb = np.einsum("...ji,...j->...i", U, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(s > 0, Utb / s, 0.0)
    r = np.einsum("...ji,...j->...i", Vt, coef)
    return r, s


def solve_batch(stream: ImuStream, a_A, omega_dot=None) -> np.ndarray:
    """Single r minimising the summed squared residual over all samples."""
    a_A = np.asarray(a_A, dtype=float)
    if len(stream) < 4:
        raise ValueError("need at least 4 samples")
    if len(a_A) != len(stream):
        raise ValueError("a_A length does not match stream")
    if omega_dot is None:
        omega_dot = numeric_omega_dot(stream)
    M = build_M(stream.omega, omega_dot)
    r, s = _lstsq_stacked(M, a_A)
    if s[0] == 0 or s[-1] < SIGMA_RATIO_MIN * s[0]:
        raise DegenerateExcitationError(
            f"stacked system is rank deficient (singular values {s})"
        )
    return r


def solve_window(stream: ImuStream, a_A, n: int, omega_dot=None,
                 sigma_ratio: float = SIGMA_RATIO_MIN) -> list[WindowEstimate]:
    """Sliding-window estimates; windows advance one sample and overlap by n - 1."""
    if n < 4:
        raise ValueError("window must hold at least 4 samples")
    if len(stream) < n:
        raise ValueError("stream shorter than window")
    r, s, valid = solve_window_arrays(stream, a_A, n, omega_dot, sigma_ratio)
    if not valid.any():
        raise DegenerateExcitationError("no window has sufficient excitation")
    t_end = stream.t[n - 1:]
    return [WindowEstimate(float(t_end[k]), r[k], bool(valid[k]), float(s[k, -1]))
            for k in range(len(t_end))]


def solve_window_arrays(stream: ImuStream, a_A, n: int, omega_dot=None,
                        sigma_ratio: float = SIGMA_RATIO_MIN):
    """Array form of :func:`solve_window`: ``(r, singular_values, valid)``, one row per window end."""
    a_A = np.asarray(a_A, dtype=float)
    if omega_dot is None:
        omega_dot = numeric_omega_dot(stream)
    M = build_M(stream.omega, omega_dot)
    Mw = np.moveaxis(sliding_window_view(M, n, axis=0), -1, 1)  # (W, n, 3, 3)
    aw = np.moveaxis(sliding_window_view(a_A, n, axis=0), -1, 1)  # (W, n, 3)
    r, s = _lstsq_stacked(Mw, aw)
    valid = (s[:, 0] > 0) & (s[:, -1] >= sigma_ratio * s[:, 0])
    return r, s, valid


def solve_batch_tilt(stream: ImuStream, C, gravity=(0.0, 0.0, -9.8), omega_dot=None,
                     iterations: int = 3):
    """Joint least-squares for r and a constant horizontal tilt error.

    ``C`` holds sensor-to-global orientations whose tilt is off by one
    unknown small rotation (e.g. gyro propagation from a poor initial
    tilt). The rigid-body model with a still pivot makes that rotation
    observable: ``M r - C^T skew(g) d = f + C^T g`` is linear in ``r`` and
    the horizontal components of ``d``. The solve is repeated on the
    re-rotated orientations to remove linearisation error.

    Returns
    -------
    r : (3,) array
    R_fix : (3, 3) array
        Rotation to left-multiply onto every ``C``.
    """
    from .core import rotvec_to_matrix, skew

    if len(stream) < 4:
        raise ValueError("need at least 4 samples")
    g = np.asarray(gravity, dtype=float)
    C = np.asarray(C, dtype=float)
    if omega_dot is None:
        omega_dot = numeric_omega_dot(stream)
    M = build_M(stream.omega, omega_dot)
    # only rotations about axes orthogonal to g change C^T g
    g_hat = g / np.linalg.norm(g)
    basis = np.linalg.svd(np.eye(3) - np.outer(g_hat, g_hat))[0][:, :2]
    R_fix = np.eye(3)
    for _ in range(iterations):
        Ck = np.einsum("ij,njk->nik", R_fix, C)
        a_est = stream.f + np.einsum("nji,j->ni", Ck, g)
        G = -np.einsum("nji,jk->nik", Ck, skew(g) @ basis)  # (N, 3, 2)
        A = np.concatenate([M, G], axis=2).reshape(-1, 5)
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        if s[-1] < SIGMA_RATIO_MIN * s[0]:
            raise DegenerateExcitationError(
                f"joint r/tilt system is rank deficient (singular values {s})"
            )
        sol = Vt.T @ ((U.T @ a_est.ravel()) / s)
        r = sol[:3]
        R_fix = rotvec_to_matrix(basis @ sol[3:]) @ R_fix
    return r, R_fix


def solve_batch_imu(stream: ImuStream, attitude: AttitudeConfig = AttitudeConfig(),
                    omega_dot=None) -> np.ndarray:
    """Batch r straight from raw IMU data.

    Being offline, the batch solve can carry orientation by the gyro over
    the whole record and estimate the one residual tilt error jointly with
    r, instead of relying on a causal tilt filter.
    """
    Cs = propagate_only(initial_attitude(stream.f[0], attitude), stream, len(stream))
    r, _ = solve_batch_tilt(stream, Cs, attitude.gravity.vector, omega_dot)
    return r
