"""Plain-text CSV formats for IMU logs, reference vectors and estimates.

IMU files carry SI units (s, rad/s, m/s^2); vector files carry millimetres.
Values are written with 17 significant digits so a write/read cycle returns
the same doubles.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import ImuStream

IMU_HEADER = ["t", "gx", "gy", "gz", "ax", "ay", "az"]
REF_HEADER = ["t", "rx_mm", "ry_mm", "rz_mm"]
TRUTH_HEADER = REF_HEADER + [f"c{i}{j}" for i in range(1, 4) for j in range(1, 4)]
ESTIMATE_HEADER = ["t", "rx_mm", "ry_mm", "rz_mm", "converging", "valid"]


class CsvFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def _num(x) -> str:
    return repr(float(x))


def _write(path, header, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read(path, header, min_cols=None):
    """Parse a numeric CSV whose first columns must match ``header``."""
    path = Path(path)
    min_cols = len(header) if min_cols is None else min_cols
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise CsvFormatError(path, 1, "empty file, header row expected") from None
        found = [h.strip() for h in found]
        if found[:min_cols] != header[:min_cols]:
            raise CsvFormatError(path, 1, f"header {found} does not start with {header[:min_cols]}")
        width = len(found)
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise CsvFormatError(path, line, f"expected {width} columns, found {len(row)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise CsvFormatError(path, line, f"non-numeric value ({exc})") from None
            if not np.all(np.isfinite(values)):
                raise CsvFormatError(path, line, "non-finite value")
            rows.append(values)
    if not rows:
        raise CsvFormatError(path, 2, "no data rows")
    return found, np.array(rows)


def write_imu_csv(path, stream: ImuStream) -> None:
    rows = ([_num(t)] + [_num(v) for v in w] + [_num(v) for v in f]
            for t, w, f in zip(stream.t, stream.omega, stream.f))
    _write(path, IMU_HEADER, rows)


def read_imu_csv(path, fs: float | None = None) -> ImuStream:
    """Load an IMU log; ``fs`` defaults to the reciprocal of the median spacing."""
    _, data = _read(path, IMU_HEADER)
    t = data[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise CsvFormatError(path, int(bad[0]) + 3, "timestamps not strictly increasing")
    if fs is None:
        if len(t) < 2:
            raise CsvFormatError(path, 2, "cannot infer sampling rate from one row")
        fs = 1.0 / float(np.median(np.diff(t)))
    return ImuStream(t, data[:, 1:4], data[:, 4:7], fs)


def write_vectors_csv(path, t, r, C=None) -> None:
    """Reference/truth vectors; ``r`` in metres is stored in mm, ``C`` row-major if given."""
    r_mm = 1000.0 * np.asarray(r, dtype=float)
    if C is None:
        rows = ([_num(tk)] + [_num(v) for v in rk] for tk, rk in zip(t, r_mm))
        _write(path, REF_HEADER, rows)
    else:
        C = np.asarray(C, dtype=float).reshape(len(r_mm), 9)
        rows = ([_num(tk)] + [_num(v) for v in rk] + [_num(v) for v in ck]
                for tk, rk, ck in zip(t, r_mm, C))
        _write(path, TRUTH_HEADER, rows)


def read_vectors_csv(path):
    """Returns ``(t, r)`` with r in metres; extra columns (orientation) are ignored."""
    _, data = _read(path, REF_HEADER)
    return data[:, 0], data[:, 1:4] / 1000.0


def read_truth_csv(path):
    """Returns ``(t, r, C)``; ``C`` is None when the file has only vector columns."""
    header, data = _read(path, REF_HEADER)
    C = data[:, 4:13].reshape(-1, 3, 3) if header == TRUTH_HEADER else None
    return data[:, 0], data[:, 1:4] / 1000.0, C


def write_estimate_csv(path, t, r, converging, valid) -> None:
    r_mm = 1000.0 * np.asarray(r, dtype=float)
    rows = ([_num(tk)] + [_num(v) for v in rk] + [int(c), int(v)]
            for tk, rk, c, v in zip(t, r_mm, converging, valid))
    _write(path, ESTIMATE_HEADER, rows)


def read_estimate_csv(path):
    _, data = _read(path, ESTIMATE_HEADER)
    return data[:, 0], data[:, 1:4] / 1000.0, data[:, 4].astype(bool), data[:, 5].astype(bool)


def trim(stream: ImuStream, seconds: float) -> tuple[ImuStream, slice]:
    """Drop ``round(seconds * fs)`` samples from each end; returns the kept slice too."""
    if seconds < 0:
        raise ValueError("trim must be non-negative")
    k = int(round(seconds * stream.fs))
    if 2 * k >= len(stream):
        raise ValueError(f"trimming {k} samples from each end leaves no data")
    sl = slice(k, len(stream) - k)
    return stream.slice(sl.start, sl.stop), sl
