"""Command line front end.

Subcommands::

    jointcor simulate    write a simulated IMU log and its truth file
    jointcor estimate    estimate r from an IMU log, optionally score it
    jointcor experiment  Monte-Carlo tables, sweeps and self-checks
    jointcor bench       per-sample cost of the adaptive filter
    jointcor presets     print the embedded covariance presets

Exit codes: 0 success, 1 usage, 2 data error, 3 failed self-check.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import arved, config, csvio, experiment, metrics, mrvs
from .sim import NoiseSpec, PendulumConfig, StaConfig, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3
REAL_TRIM = 1.5  # seconds dropped from each end of a real recording

log = logging.getLogger("jointcor")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which here means a data error
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> tuple[int, ...]:
    """``5,10,20`` or an inclusive range ``start:stop:step``."""
    try:
        if ":" in text:
            start, stop, step = (int(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            return tuple(range(start, stop + 1, step))
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list like 5,10,20 or 5:100:5, got {text!r}") from None


def _cell(v):
    return v if isinstance(v, str) else metrics._fmt(v)


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        keys = list(dict.fromkeys(k for row in rows for k in row))
        writer = csv.DictWriter(fh, fieldnames=keys, restval="", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})


def _print_rows(title: str, rows: list[dict]) -> None:
    print(f"# {title}")
    if not rows:
        print("(empty)")
        return
    keys = list(dict.fromkeys(k for row in rows for k in row))
    print(",".join(keys))
    for row in rows:
        print(",".join(str(_cell(row.get(k, ""))) for k in keys))


# simulate

def cmd_simulate(args) -> int:
    pend = PendulumConfig(duration=args.duration, fs=args.fs)
    sta = StaConfig(enabled=args.scenario == "variable_r", physical=args.physical_sta)
    noise = NoiseSpec(seed=args.seed) if not args.noise_free else NoiseSpec(0.0, 0.0, args.seed)
    if args.gyro_sd is not None:
        noise = replace(noise, gyro_sd=np.deg2rad(args.gyro_sd))
    if args.accel_sd is not None:
        noise = replace(noise, accel_sd=args.accel_sd)
    ds = generate(pend, sta, noise)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    imu_path = out / f"{args.prefix}imu.csv"
    truth_path = out / f"{args.prefix}truth.csv"
    csvio.write_imu_csv(imu_path, ds.stream)
    csvio.write_vectors_csv(truth_path, ds.stream.t, ds.truth_r, ds.truth_C)

    r_mm = 1000.0 * ds.truth_r
    print(f"scenario   {args.scenario}  seed {args.seed}")
    print(f"samples    {len(ds.stream)} at {pend.fs:g} Hz ({pend.duration:g} s)")
    print(f"r mean mm  {np.array2string(r_mm.mean(axis=0), precision=2)}")
    print(f"r p2p mm   {np.array2string(np.ptp(r_mm, axis=0), precision=2)}")
    print(f"wrote      {imu_path}, {truth_path}")
    return EXIT_OK


# estimate

def _reference_at(t_ref, r_ref, t, path):
    """Reference rows matching the estimate times (a single row is a constant vector)."""
    if len(t_ref) == 1:
        return np.broadcast_to(r_ref[0], (len(t), 3))
    pos = np.clip(np.searchsorted(t_ref, t), 0, len(t_ref) - 1)
    prev = np.clip(pos - 1, 0, len(t_ref) - 1)
    pick = np.where(np.abs(t_ref[prev] - t) < np.abs(t_ref[pos] - t), prev, pos)
    tol = 1e-6 + 1e-9 * np.abs(t)
    missing = np.abs(t_ref[pick] - t) > tol
    if np.any(missing):
        raise csvio.CsvFormatError(path, 0, f"no reference row at t={t[np.argmax(missing)]!r}")
    return r_ref[pick]


def estimate_stream(stream, estimator: str, cfg: arved.ArvedConfig, window_n: int = 45):
    """Run one estimator; returns ``(t, r, converging, valid)`` per output row."""
    if estimator in ("arved", "arve"):
        res = arved.run(stream, cfg)
        return res.t, res.r, res.converging, np.ones(len(res.t), dtype=bool)
    if estimator == "mrvs_batch":
        r = mrvs.solve_batch_imu(stream)
        n = len(stream)
        return stream.t, np.broadcast_to(r, (n, 3)), np.zeros(n, dtype=bool), np.ones(n, dtype=bool)
    a_A, _ = arved.gravity_free_acceleration(stream, cfg.init_samples)
    r, _, valid = mrvs.solve_window_arrays(stream, a_A, window_n)
    return stream.t[window_n - 1:], r, np.zeros(len(r), dtype=bool), valid


def cmd_estimate(args) -> int:
    if args.report and not (args.truth or args.ref):
        raise UsageError("--report needs --truth or --ref")
    if args.truth and args.ref:
        raise UsageError("give either --truth or --ref, not both")
    stream = csvio.read_imu_csv(args.imu, fs=args.fs)
    trim_s = args.trim if args.trim is not None else (REAL_TRIM if args.preset == "real" else 0.0)
    stream, _ = csvio.trim(stream, trim_s)

    variant = args.estimator if args.estimator in arved.VARIANTS else "arved"
    overrides = {} if args.init_samples is None else {"init_samples": args.init_samples}
    if args.config:
        overrides = {**config.load_experiment_config(args.config).arved, **overrides}
    cfg = config.preset(args.preset, variant, **overrides)
    t, r, converging, valid = estimate_stream(stream, args.estimator, cfg, args.window)
    csvio.write_estimate_csv(args.out, t, r, converging, valid)
    print(f"wrote {len(t)} estimates to {args.out} (trimmed {trim_s:g} s per end)")

    ref_path = args.truth or args.ref
    if ref_path:
        t_ref, r_ref, _ = csvio.read_truth_csv(ref_path)
        ref = _reference_at(t_ref, r_ref, t, ref_path)
        rep = metrics.compare(r[valid], ref[valid], t=t[valid], exclude=converging[valid])
        table = metrics.report_table(rep, label=args.estimator)
        if args.report:
            Path(args.report).write_text(table, encoding="utf-8")
        print(table, end="")
        if args.samples:
            Path(args.samples).write_text(metrics.samples_table(rep), encoding="utf-8")
    return EXIT_OK


# experiment

def _experiment_config(args) -> config.ExperimentConfig:
    cfg = config.load_experiment_config(args.config) if args.config else config.ExperimentConfig()
    return cfg.with_overrides(
        scenario=args.scenario, n_tests=args.n_tests, estimators=args.estimators,
        window_sizes=args.window_sizes, init_samples=args.init_samples, seed=args.seed,
        preset=args.preset, workers=args.workers, window_n=args.window,
    )


def cmd_experiment(args) -> int:
    try:
        cfg = _experiment_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checks = []

    results = experiment.run_tests(cfg, keep_estimates=True)
    failed = [(r.seed, r.error) for r in results if r.error]
    for seed, err in failed:
        print(f"seed {seed} failed: {err}", file=sys.stderr)
    summary = experiment.summary_table(results, cfg.estimators)
    adaptive = [e for e in cfg.estimators if e in arved.VARIANTS]
    agreement = experiment.agreement_table(results, adaptive)
    contained = None
    if "arved" in cfg.estimators:
        contained = experiment.containment(results, "arved", cfg.sphere_radius_mm)
        for row in summary:
            if row["estimator"] == "arved":
                row["within_radius"] = contained
    _write_rows(out / "summary.csv", summary)
    _write_rows(out / "agreement.csv", agreement)
    _print_rows("summary (mm, deg)", summary)
    _print_rows("agreement (mm)", agreement)
    checks += experiment.check_summary(summary, cfg.scenario, contained)

    if cfg.window_sizes:
        rows = experiment.window_sweep(cfg, cfg.window_sizes)
        _write_rows(out / "window_sweep.csv", rows)
        _print_rows("window sweep (mm)", rows)
        checks += experiment.check_window_sweep(rows)
    if cfg.init_samples:
        rows = experiment.init_sweep(cfg, cfg.init_samples)
        _write_rows(out / "init_sweep.csv", rows)
        _print_rows("init sweep (mm, deg)", rows)
        checks += experiment.check_init_sweep(rows)

    if args.self_verify:
        print("# checks")
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
        if not all(c.passed for c in checks):
            return EXIT_CHECK
    return EXIT_OK


# bench

def bench(duration: float = 10.0, cfg: arved.ArvedConfig | None = None, seed: int = 0):
    """Per-sample wall time (s) of the streaming filter, tilt stage included."""
    cfg = cfg or config.preset("synthetic-sta")
    ds = generate(PendulumConfig(duration=duration), StaConfig(enabled=True), NoiseSpec(seed=seed))
    stream = ds.stream
    n = cfg.init_samples
    est = arved.ArvedEstimator.start(stream.slice(0, n), cfg)
    samples = list(stream)[n:]
    times = np.empty(len(samples))
    clock = time.perf_counter
    for j, s in enumerate(samples):
        t0 = clock()
        est.step(s)
        times[j] = clock() - t0
    return times


def cmd_bench(args) -> int:
    times = bench(args.duration)
    total = times.sum()
    mean_ms = 1000.0 * times.mean()
    p99_ms = 1000.0 * np.percentile(times, 99)
    print(f"samples    {len(times)}")
    print(f"total      {total:.3f} s")
    print(f"mean       {mean_ms:.4f} ms")
    print(f"p99        {p99_ms:.4f} ms")
    period_ms = 1000.0 / PendulumConfig().fs
    ok = mean_ms < period_ms
    print(f"{'PASS' if ok else 'FAIL'}  mean below sampling period ({period_ms:g} ms)")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_presets(args) -> int:
    print(config.dump_presets())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jointcor", description="Joint centre of rotation from one IMU.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a pendulum run")
    s.add_argument("--scenario", choices=("constant_r", "variable_r"), default="variable_r")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=PendulumConfig.duration)
    s.add_argument("--fs", type=float, default=PendulumConfig.fs)
    s.add_argument("--noise-free", action="store_true")
    s.add_argument("--gyro-sd", type=float, help="gyro noise sd, deg/s")
    s.add_argument("--accel-sd", type=float, help="accelerometer noise sd, m/s^2")
    s.add_argument("--physical-sta", action="store_true",
                   help="include the relative-motion terms of a moving sensor")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--prefix", default="", help="prefix for imu.csv and truth.csv")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate r from an IMU CSV")
    e.add_argument("imu")
    e.add_argument("--estimator", choices=config.ESTIMATORS, default="arved")
    e.add_argument("--preset", choices=sorted(config.PRESETS), default="real")
    e.add_argument("--config", help="JSON file; its 'arved' overrides apply")
    e.add_argument("--init-samples", type=int)
    e.add_argument("--window", type=int, default=45, help="sliding-window length")
    e.add_argument("--fs", type=float, help="sampling rate; inferred when omitted")
    e.add_argument("--trim", type=float, help="seconds dropped per end (1.5 for the real preset)")
    e.add_argument("--truth", help="truth CSV from simulate")
    e.add_argument("--ref", help="pre-aligned reference CSV t,rx_mm,ry_mm,rz_mm")
    e.add_argument("--out", default="estimate.csv")
    e.add_argument("--report", help="write the error summary here")
    e.add_argument("--samples", help="write per-sample errors here")
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("experiment", help="Monte-Carlo tables and sweeps")
    x.add_argument("--config", help="JSON experiment configuration")
    x.add_argument("--scenario", choices=config.SCENARIOS)
    x.add_argument("--n-tests", type=int)
    x.add_argument("--estimators", type=lambda v: tuple(v.split(",")))
    x.add_argument("--window-sizes", type=_int_list)
    x.add_argument("--init-samples", type=_int_list)
    x.add_argument("--window", type=int, help="window length for mrvs_window")
    x.add_argument("--seed", type=int)
    x.add_argument("--preset", choices=sorted(config.PRESETS))
    x.add_argument("--workers", type=int)
    x.add_argument("--out-dir", default="results")
    x.add_argument("--self-verify", action="store_true", help="exit 3 when a band is missed")
    x.set_defaults(func=cmd_experiment)

    b = sub.add_parser("bench", help="per-sample latency")
    b.add_argument("--duration", type=float, default=10.0)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("presets", help="dump covariance presets as JSON")
    r.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (csvio.CsvFormatError, OSError, ValueError, KeyError,
            arved.InitializationError, arved.FilterDivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
