import numpy as np
import pytest

from jointcor import arved, config, mrvs
from jointcor.arved import (ArvedConfig, ArvedEstimator, EstimatorState, measurement_jacobian,
                            measurement_model, predict, transition_matrix, update)


def _state(r=(0.0, 0.0, 0.0), rd=(0.0, 0.0, 0.0), w=(0.0, 0.0, 0.0), wd=(0.0, 0.0, 0.0), P=None):
    return EstimatorState.from_parts(r, rd, w, wd, np.eye(12) * 1e-3 if P is None else P)


def _random_state(rng):
    return _state(rng.normal(scale=0.2, size=3), rng.normal(scale=0.05, size=3),
                  rng.normal(scale=2.0, size=3), rng.normal(scale=10.0, size=3))


def test_predict_stationary():
    s = _state(r=(0.1, 0.2, 0.3), w=(1.0, 0.0, -1.0))
    out = predict(s, 0.01, ArvedConfig())
    np.testing.assert_array_equal(out.r, s.r)
    np.testing.assert_array_equal(out.omega, s.omega)


def test_predict_integrates_velocity():
    s = _state(rd=(1.0, 0.0, 0.0), wd=(0.0, 2.0, 0.0))
    out = predict(s, 0.01, ArvedConfig())
    assert out.r[0] == pytest.approx(0.01)
    assert out.omega[1] == pytest.approx(0.02)


def test_predict_inflates_covariance():
    s = _state()
    out = predict(s, 0.01, ArvedConfig())
    assert np.trace(out.P) > np.trace(s.P)


def test_transition_structure():
    F = transition_matrix(0.5)
    x = np.arange(12.0)
    y = F @ x
    np.testing.assert_array_equal(y[0:3], x[0:3] + 0.5 * x[3:6])
    np.testing.assert_array_equal(y[6:9], x[6:9] + 0.5 * x[9:12])
    np.testing.assert_array_equal(y[3:6], x[3:6])


def test_measurement_no_motion():
    a, w = measurement_model(_state(r=(0.1, -0.2, 0.3)))
    np.testing.assert_array_equal(a, 0.0)
    np.testing.assert_array_equal(w, 0.0)


def test_measurement_centripetal():
    wz = 2.0
    r = np.array([0.1, -0.2, 0.3])
    a, _ = measurement_model(_state(r=r, w=(0, 0, wz)))
    np.testing.assert_allclose(a, [wz**2 * r[0], wz**2 * r[1], 0.0], atol=1e-15)


def test_measurement_tangential():
    alpha = 3.0
    r = np.array([0.1, -0.2, 0.3])
    a, _ = measurement_model(_state(r=r, wd=(0, 0, alpha)))
    np.testing.assert_allclose(a, [alpha * r[1], -alpha * r[0], 0.0], atol=1e-15)


def _fd_jacobian(state, h=1e-6):
    J = np.zeros((6, 12))
    for i in range(12):
        xp, xm = state.x.copy(), state.x.copy()
        xp[i] += h
        xm[i] -= h
        yp = np.concatenate(measurement_model(EstimatorState(xp, state.P)))
        ym = np.concatenate(measurement_model(EstimatorState(xm, state.P)))
        J[:, i] = (yp - ym) / (2 * h)
    return J


def test_jacobian_matches_finite_differences(rng):
    for _ in range(200):
        s = _random_state(rng)
        H = measurement_jacobian(s)
        J = _fd_jacobian(s)
        scale = np.max(np.abs(H))
        assert np.max(np.abs(H - J)) <= 1e-6 * scale


def test_measurement_matches_system_matrix(rng):
    for _ in range(500):
        s = _random_state(rng)
        a, _ = measurement_model(s)
        M = mrvs.build_M(s.omega, s.omega_dot)
        np.testing.assert_allclose(M @ s.r, a, rtol=1e-12, atol=1e-12)


def test_update_zero_innovation_keeps_state(rng):
    s = _random_state(rng)
    a, w = measurement_model(s)
    out = update(s, a, w, ArvedConfig())
    np.testing.assert_allclose(out.x, s.x, atol=1e-12)
    assert np.trace(out.P) < np.trace(s.P)


def test_update_perfect_gyro(rng):
    s = _random_state(rng)
    obs_w = s.omega + 0.01
    out = update(s, measurement_model(s)[0], obs_w, ArvedConfig(r_gyro=1e-24))
    np.testing.assert_allclose(out.omega, obs_w, atol=1e-9)


def test_update_covariance_stays_symmetric_psd(rng):
    s = _random_state(rng)
    out = update(s, rng.normal(size=3), rng.normal(size=3), ArvedConfig())
    np.testing.assert_array_equal(out.P, out.P.T)
    assert np.linalg.eigvalsh(out.P).min() > 0


def test_update_detects_divergence():
    s = _state(P=np.full((12, 12), np.nan))
    with pytest.raises(arved.FilterDivergenceError):
        update(s, np.zeros(3), np.zeros(3), ArvedConfig())


def test_arve_freezes_rdot():
    c = ArvedConfig(variant="arve").effective()
    assert c.q_rdot == 0.0 and c.p0_rdot == 0.0
    Q = c.process_noise(0.01)
    np.testing.assert_array_equal(np.diag(Q)[3:6], 0.0)


@pytest.mark.parametrize("kw", [dict(variant="ukf"), dict(q_r=-1.0), dict(init_samples=3)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ArvedConfig(**kw)


def test_initialize_noise_free(clean_constant):
    ds = clean_constant
    r0 = arved.initialize_r0(ds.stream, ds.truth_aA, 60)
    assert np.linalg.norm(r0 - ds.truth_r[0]) < 1e-6


def test_initialize_needs_four_samples(clean_constant):
    with pytest.raises(ValueError):
        arved.initialize_r0(clean_constant.stream, clean_constant.truth_aA, 3)


def test_warm_up_noise_free(clean_constant):
    ds = clean_constant
    r0, att, a_head = arved.warm_up(ds.stream, 60)
    assert np.linalg.norm(r0 - ds.truth_r[0]) < 1e-6
    np.testing.assert_allclose(a_head, ds.truth_aA[:60], atol=1e-4)


def test_warm_up_on_still_sensor_fails():
    from jointcor.core import ImuStream
    n = 80
    s = ImuStream(np.arange(n) / 100.0, np.zeros((n, 3)), np.tile([0, 0, 9.8], (n, 1)))
    with pytest.raises(arved.InitializationError):
        arved.run(s, ArvedConfig())


def test_run_noise_free_constant(clean_constant):
    ds = clean_constant
    res = arved.run(ds.stream, config.preset("synthetic-constant"))
    err = 1000 * np.linalg.norm(res.r - ds.truth_r[res.index], axis=1)
    assert err[~res.converging].mean() < 0.5


def test_run_output_layout(noisy_sta):
    ds = noisy_sta
    cfg = config.preset("synthetic-sta")
    res = arved.run(ds.stream, cfg)
    n = cfg.init_samples
    assert len(res) == len(ds.stream) - n
    np.testing.assert_array_equal(res.index, np.arange(n, len(ds.stream)))
    np.testing.assert_array_equal(res.t, ds.stream.t[n:])
    # exactly the first second of output is flagged as converging
    assert res.converging.sum() == 100
    assert res.converging[:100].all()
    assert res.P_r.shape == (len(res), 3, 3)


def test_run_noisy_constant_accuracy(noisy_constant):
    ds = noisy_constant
    res = arved.run(ds.stream, config.preset("synthetic-constant"))
    err = 1000 * np.linalg.norm(res.r - ds.truth_r[res.index], axis=1)
    assert err[~res.converging].mean() < 5.0


def test_run_with_external_acceleration(clean_constant):
    ds = clean_constant
    res = arved.run(ds.stream, config.preset("synthetic-constant"), a_A=ds.truth_aA)
    err = 1000 * np.linalg.norm(res.r - ds.truth_r[res.index], axis=1)
    assert err[~res.converging].mean() < 0.5
    with pytest.raises(ValueError):
        arved.run(ds.stream, ArvedConfig(), a_A=ds.truth_aA[:10])


def test_streaming_matches_batch(noisy_sta):
    ds = noisy_sta
    cfg = config.preset("synthetic-sta")
    res = arved.run(ds.stream, cfg)
    n = cfg.init_samples
    est = ArvedEstimator.start(ds.stream.slice(0, n), cfg)
    out = np.array([est.step(s).r for s in list(ds.stream)[n:]])
    np.testing.assert_array_equal(out, res.r)


def test_streaming_without_tilt_filter_needs_acceleration(clean_constant):
    ds = clean_constant
    est = ArvedEstimator.start(ds.stream.slice(0, 60), ArvedConfig(), a_A=ds.truth_aA[:60])
    with pytest.raises(ValueError):
        est.step(ds.stream[60])
    est.step(ds.stream[60], ds.truth_aA[60])


def test_run_too_short(clean_constant):
    with pytest.raises(ValueError):
        arved.run(clean_constant.stream.slice(0, 60), ArvedConfig())


def test_adaptive_beats_ablation_on_sta(noisy_sta):
    ds = noisy_sta
    a_A, _ = arved.gravity_free_acceleration(ds.stream, 60)
    errs = {}
    for v in arved.VARIANTS:
        res = arved.run(ds.stream, config.preset("synthetic-sta", v), a_A=a_A)
        errs[v] = (1000 * np.linalg.norm(res.r - ds.truth_r[res.index], axis=1))[~res.converging].mean()
    assert errs["arved"] < errs["arve"]
