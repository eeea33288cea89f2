"""Error metrics between estimated and reference IMU-joint vectors.

Inputs are in metres; reported distances are in millimetres and angles in
degrees, matching how results are usually tabulated.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

METRICS = ("d_vec", "d_norm", "gamma")
UNITS = {"d_vec": "mm", "d_norm": "mm", "abs_d_norm": "mm", "gamma": "deg"}


class UndefinedAngleError(ValueError):
    """A zero-length vector has no direction."""


@dataclass(frozen=True)
class ErrorSample:
    t: float
    d_vec: float
    d_norm: float
    gamma: float


@dataclass(frozen=True)
class Stats:
    mean: float
    sd: float
    max: float
    min: float

    @classmethod
    def of(cls, x) -> "Stats":
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return cls(np.nan, np.nan, np.nan, np.nan)
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        return cls(float(np.mean(x)), sd, float(np.max(x)), float(np.min(x)))


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Per-sample errors plus summaries over the included samples.

    ``include`` marks samples that enter the summaries (converging samples
    are normally left out).
    """

    t: np.ndarray
    d_vec: np.ndarray  # mm, |r_est - r_ref|
    d_norm: np.ndarray  # mm, |r_est| - |r_ref|
    gamma: np.ndarray  # deg
    include: np.ndarray
    ref_norm_mean: float  # mm

    def samples(self) -> list[ErrorSample]:
        return [ErrorSample(float(t), float(a), float(b), float(c))
                for t, a, b, c in zip(self.t, self.d_vec, self.d_norm, self.gamma)]

    def stats(self, metric: str) -> Stats:
        if metric == "abs_d_norm":
            return Stats.of(np.abs(self.d_norm[self.include]))
        return Stats.of(getattr(self, metric)[self.include])

    @property
    def upper_limit(self) -> float:
        """Largest acceptable mean |r_est - r_ref|: 10 % of the reference length, mm."""
        return 0.1 * self.ref_norm_mean

    @property
    def passed(self) -> bool:
        return self.stats("d_vec").mean <= self.upper_limit

    def summary(self) -> dict:
        out = {}
        for m in METRICS + ("abs_d_norm",):
            s = self.stats(m)
            out.update({f"{m}_mean": s.mean, f"{m}_sd": s.sd, f"{m}_max": s.max, f"{m}_min": s.min})
        out["upper_limit"] = self.upper_limit
        out["pass"] = self.passed
        out["n_samples"] = int(np.count_nonzero(self.include))
        return out


def _as_series(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return r.reshape(1, 3) if r.ndim == 1 else r


def compare(r_est, r_ref, t=None, exclude=None) -> ErrorReport:
    """Vector, norm and angle errors between aligned series.

    A single reference vector is broadcast against every estimate.
    ``exclude`` is an optional boolean mask of samples to leave out of the
    summaries.
    """
    est = _as_series(r_est)
    ref = _as_series(r_ref)
    if ref.shape[0] == 1:
        ref = np.broadcast_to(ref, est.shape)
    if est.shape != ref.shape:
        raise ValueError(f"series not aligned: {est.shape} vs {ref.shape}")
    n_est = np.linalg.norm(est, axis=1)
    n_ref = np.linalg.norm(ref, axis=1)
    if np.any(n_ref == 0) or np.any(n_est == 0):
        raise UndefinedAngleError("deviation angle undefined for a zero-length vector")
    cosang = np.einsum("ij,ij->i", est, ref) / (n_est * n_ref)
    gamma = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    d_vec = 1000.0 * np.linalg.norm(est - ref, axis=1)
    d_norm = 1000.0 * (n_est - n_ref)
    if t is None:
        t = np.arange(len(est), dtype=float)
    include = np.ones(len(est), dtype=bool) if exclude is None else ~np.asarray(exclude, dtype=bool)
    return ErrorReport(np.asarray(t, dtype=float), d_vec, d_norm, gamma, include,
                       1000.0 * float(np.mean(n_ref[include])) if include.any() else np.nan)


def pooled(reports) -> dict:
    """Summaries over the included samples of several runs taken together."""
    reports = list(reports)
    out = {}
    for m in METRICS + ("abs_d_norm",):
        key = "d_norm" if m == "abs_d_norm" else m
        vals = [getattr(r, key)[r.include] for r in reports]
        pooled_vals = np.concatenate(vals) if vals else np.array([])
        if m == "abs_d_norm":
            pooled_vals = np.abs(pooled_vals)
        s = Stats.of(pooled_vals)
        out.update({f"{m}_mean": s.mean, f"{m}_sd": s.sd, f"{m}_max": s.max, f"{m}_min": s.min})
    out["upper_limit"] = float(np.mean([r.upper_limit for r in reports]))
    out["n_runs"] = len(reports)
    return out


def sphere_containment(points, center, radius: float) -> float:
    """Fraction of ``points`` no farther than ``radius`` from ``center``.

    ``center`` may be one point or one per sample; all arguments share a unit.
    """
    points = _as_series(points)
    if len(points) == 0:
        raise ValueError("no points given")
    center = np.asarray(center, dtype=float)
    d = np.linalg.norm(points - center, axis=1)
    return float(np.mean(d <= radius))


@dataclass(frozen=True)
class Agreement:
    bias: np.ndarray  # per component, mean(b - a)
    loa_low: np.ndarray
    loa_high: np.ndarray


def bland_altman(a, b) -> Agreement:
    """Bias and 95 % limits of agreement (bias +/- 1.96 SD) per component."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("series not aligned")
    if len(a) < 2:
        raise ValueError("need at least two samples")
    diff = b - a
    bias = diff.mean(axis=0)
    sd = diff.std(axis=0, ddof=1)
    return Agreement(bias, bias - 1.96 * sd, bias + 1.96 * sd)


def report_table(report: ErrorReport, label: str = "") -> str:
    """One-row CSV table of per-metric mean, sd, max and min."""
    buf = io.StringIO()
    summary = report.summary()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label"] + list(summary))
    writer.writerow([label] + [_fmt(v) for v in summary.values()])
    return buf.getvalue()


def samples_table(report: ErrorReport) -> str:
    """Long-format per-sample table: t, metric, value, included."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "metric", "value", "included"])
    for m in METRICS:
        for t, v, inc in zip(report.t, getattr(report, m), report.include):
            writer.writerow([_fmt(t), m, _fmt(v), int(inc)])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return f"{float(v):.6g}"
