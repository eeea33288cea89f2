import csv
import json

import numpy as np
import pytest

from jointcor import cli, csvio


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _simulate(tmp_path, *extra):
    assert cli.main(["simulate", "--out-dir", str(tmp_path), *extra]) == 0
    return tmp_path / "imu.csv", tmp_path / "truth.csv"


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        cli.main(["simulate", "--scenario", "variable_r", "--seed", "7", "--out-dir", str(d)])
    assert (a / "imu.csv").read_bytes() == (b / "imu.csv").read_bytes()
    assert (a / "truth.csv").read_bytes() == (b / "truth.csv").read_bytes()


def test_simulate_length(tmp_path):
    imu, _ = _simulate(tmp_path, "--duration", "10", "--fs", "100")
    assert len(_rows(imu)) == 1000


def test_simulate_sta_amplitude(tmp_path, capsys):
    _, truth = _simulate(tmp_path)
    _, r, C = csvio.read_truth_csv(truth)
    assert 1000 * np.ptp(r[:, 0]) == pytest.approx(40.0, abs=1e-9)
    assert C.shape == (1000, 3, 3)
    assert "1000 at 100 Hz" in capsys.readouterr().out


def test_simulate_noise_overrides(tmp_path):
    imu, _ = _simulate(tmp_path, "--scenario", "constant_r", "--gyro-sd", "0", "--accel-sd", "0")
    clean = csvio.read_imu_csv(imu)
    imu2, _ = _simulate(tmp_path / "n", "--scenario", "constant_r", "--noise-free")
    np.testing.assert_array_equal(clean.f, csvio.read_imu_csv(imu2).f)


def test_estimate_batch_noise_free(tmp_path, capsys):
    imu, truth = _simulate(tmp_path, "--scenario", "constant_r", "--noise-free")
    out = tmp_path / "est.csv"
    rc = cli.main(["estimate", str(imu), "--estimator", "mrvs_batch", "--preset", "synthetic-constant",
                   "--truth", str(truth), "--out", str(out), "--report", str(tmp_path / "rep.csv")])
    assert rc == 0
    _, r, _, valid = csvio.read_estimate_csv(out)
    assert valid.all()
    err_mm = 1000 * np.linalg.norm(r - np.array([-0.060, 0.020, 0.200]), axis=1)
    assert err_mm.max() < 1e-3
    rep = _rows(tmp_path / "rep.csv")[0]
    assert float(rep["d_vec_mean"]) < 1e-3


def test_estimate_adaptive_flags_first_second(tmp_path):
    imu, truth = _simulate(tmp_path, "--seed", "4")
    out = tmp_path / "est.csv"
    assert cli.main(["estimate", str(imu), "--preset", "synthetic-sta", "--truth", str(truth),
                     "--out", str(out)]) == 0
    t, r, conv, valid = csvio.read_estimate_csv(out)
    assert len(t) == 1000 - 60
    assert np.all(conv[t - t[0] < 1.0 - 1e-9])
    assert not np.any(conv[t - t[0] >= 1.0 - 1e-9])


def test_estimate_window_rows(tmp_path):
    imu, truth = _simulate(tmp_path, "--scenario", "constant_r")
    out = tmp_path / "est.csv"
    assert cli.main(["estimate", str(imu), "--estimator", "mrvs_window", "--window", "45",
                     "--preset", "synthetic-constant", "--truth", str(truth), "--out", str(out)]) == 0
    t, _, _, _ = csvio.read_estimate_csv(out)
    assert len(t) == 1000 - 44
    assert t[0] == pytest.approx(0.44)


def test_estimate_with_reference_file(tmp_path, capsys):
    imu, _ = _simulate(tmp_path, "--scenario", "constant_r")
    ref = tmp_path / "ref.csv"
    csvio.write_vectors_csv(ref, [0.0], np.array([[-0.060, 0.020, 0.200]]))
    rc = cli.main(["estimate", str(imu), "--preset", "synthetic-constant", "--ref", str(ref),
                   "--out", str(tmp_path / "e.csv"), "--samples", str(tmp_path / "s.csv")])
    assert rc == 0
    assert "d_vec_mean" in capsys.readouterr().out
    assert _rows(tmp_path / "s.csv")[0]["metric"] == "d_vec"


def test_estimate_trim_for_real_preset(tmp_path, capsys):
    imu, _ = _simulate(tmp_path)
    out = tmp_path / "e.csv"
    assert cli.main(["estimate", str(imu), "--out", str(out)]) == 0
    t, _, _, _ = csvio.read_estimate_csv(out)
    # 150 samples dropped per end, then 60 used for initialisation
    assert t[0] == pytest.approx(1.5 + 0.6)
    assert t[-1] == pytest.approx(9.99 - 1.5)
    assert "trimmed 1.5 s" in capsys.readouterr().out


def test_estimate_bad_row_is_data_error(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,9.8\n0.01,0,0,0,0,9.8\n")
    assert cli.main(["estimate", str(p)]) == 2
    assert "bad.csv:3:" in capsys.readouterr().err


def test_estimate_missing_reference_rows(tmp_path):
    imu, _ = _simulate(tmp_path, "--scenario", "constant_r")
    ref = tmp_path / "ref.csv"
    csvio.write_vectors_csv(ref, [0.0, 0.01], np.ones((2, 3)))
    rc = cli.main(["estimate", str(imu), "--preset", "synthetic-constant", "--ref", str(ref),
                   "--out", str(tmp_path / "e.csv")])
    assert rc == 2


def test_report_without_truth_is_usage_error(tmp_path):
    imu, _ = _simulate(tmp_path)
    with pytest.raises(SystemExit) as info:
        cli.main(["estimate", str(imu), "--report", str(tmp_path / "r.csv")])
    assert info.value.code == 1


def test_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["simulate", "--scenario", "walk"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 1


def test_int_list_parsing():
    assert cli._int_list("5:100:5") == tuple(range(5, 101, 5))
    assert len(cli._int_list("5:100:5")) == 20
    assert cli._int_list("20,40,60") == (20, 40, 60)


def test_experiment_summary_rows(tmp_path, capsys):
    out = tmp_path / "res"
    rc = cli.main(["experiment", "--scenario", "variable_r", "--n-tests", "2",
                   "--estimators", "arved,arve,mrvs_batch", "--out-dir", str(out)])
    assert rc == 0
    rows = _rows(out / "summary.csv")
    assert [r["estimator"] for r in rows] == ["arved", "arve", "mrvs_batch"]
    assert float(rows[0]["within_radius"]) >= 0
    ag = _rows(out / "agreement.csv")
    assert {r["component"] for r in ag} == {"rx", "ry", "rz"}


def test_experiment_window_sweep_rows(tmp_path):
    out = tmp_path / "res"
    rc = cli.main(["experiment", "--scenario", "constant_r", "--n-tests", "1",
                   "--estimators", "mrvs_batch", "--window-sizes", "5:100:5", "--out-dir", str(out)])
    assert rc == 0
    assert len(_rows(out / "window_sweep.csv")) == 20


def test_experiment_single_run(tmp_path):
    out = tmp_path / "res"
    rc = cli.main(["experiment", "--scenario", "constant_r", "--n-tests", "1",
                   "--estimators", "arved", "--init-samples", "40,60", "--out-dir", str(out)])
    assert rc == 0
    row = _rows(out / "summary.csv")[0]
    assert row["n_runs"] == "1"
    assert row["d_vec_sd"] != "" and np.isfinite(float(row["d_vec_sd"]))
    assert len(_rows(out / "init_sweep.csv")) == 2


def test_experiment_from_config_file(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"scenario": "constant_r", "n_tests": 1, "estimators": ["mrvs_batch"]}))
    out = tmp_path / "res"
    assert cli.main(["experiment", "--config", str(cfg), "--out-dir", str(out)]) == 0
    assert len(_rows(out / "summary.csv")) == 1


def test_experiment_self_verify_pass(tmp_path, capsys):
    rc = cli.main(["experiment", "--scenario", "constant_r", "--n-tests", "2", "--estimators", "arved",
                   "--out-dir", str(tmp_path), "--self-verify"])
    assert rc == 0
    assert "PASS  constant-r" in capsys.readouterr().out


def test_experiment_self_verify_fail(tmp_path, capsys):
    # the sliding window at n = 45 never reaches the 50 mm maxima on this trajectory
    rc = cli.main(["experiment", "--scenario", "constant_r", "--n-tests", "1", "--estimators", "arved",
                   "--window-sizes", "45", "--out-dir", str(tmp_path), "--self-verify"])
    assert rc == 3
    assert "FAIL  window n=45" in capsys.readouterr().out


def test_experiment_bad_config_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["experiment", "--window-sizes", "10,5", "--out-dir", str(tmp_path)])
    assert info.value.code == 1


def test_bench_reports_latency(capsys):
    assert cli.main(["bench", "--duration", "3"]) == 0
    out = capsys.readouterr().out
    assert "mean" in out and "ms" in out


def test_bench_scales_linearly():
    short = cli.bench(5.0).sum()
    long = cli.bench(50.0).sum()
    assert 5.0 < long / short < 20.0


def test_presets_command(capsys):
    assert cli.main(["presets"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert "synthetic-sta" in data
