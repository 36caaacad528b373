import itertools

import numpy as np
import pytest

from cpchan.als import AlsOptions
from cpchan.channel import (PathParams, channel_matrices, delay_signature,
                            steering_from_sin)
from cpchan.estimation import (CorrelationSearch, estimate_aoa, estimate_aod,
                               estimate_delay, estimate_pipeline, match_paths,
                               metrics, nmse, resolve_gains)
from cpchan.exceptions import NumericalError
from cpchan.tensor_ops import CPModel
from cpchan.training import make_sounding, received_factors, synthesize

from conftest import complex_randn


def exact_column(kind, value, snd, cfg):
    if kind == "aoa":
        return snd.q.T @ steering_from_sin(np.sin(value), cfg.n_ms, cfg.spacing)
    if kind == "aod":
        return snd.p.T @ steering_from_sin(np.sin(value), cfg.n_bs, cfg.spacing)
    return delay_signature(value, cfg)


def test_angle_self_correlation(rng, cfg6):
    snd = make_sounding(rng, cfg6, 6, 6)
    for theta in [-1.2, -0.3, 0.0, 0.7, 1.4]:
        col = exact_column("aoa", theta, snd, cfg6)
        theta_hat, peak = estimate_aoa(col, snd, cfg6)
        assert abs(np.sin(theta_hat) - np.sin(theta)) < 1e-6
        assert peak > 1 - 1e-9
        col = exact_column("aod", theta, snd, cfg6)
        phi_hat, peak = estimate_aod(col, snd, cfg6)
        assert abs(np.sin(phi_hat) - np.sin(theta)) < 1e-6
        assert peak > 1 - 1e-9


def test_angle_scale_invariance(rng, cfg6):
    snd = make_sounding(rng, cfg6, 6, 6)
    col = exact_column("aoa", 0.41, snd, cfg6) + 0.05 * complex_randn(rng, 6)
    ref_angle, ref_peak = estimate_aoa(col, snd, cfg6)
    for c in [2.0, -1.0, 1j, 0.3 - 0.8j]:
        angle, peak = estimate_aoa(c * col, snd, cfg6)
        assert angle == pytest.approx(ref_angle, abs=1e-9)
        assert peak == pytest.approx(ref_peak, abs=1e-12)


def test_delay_self_correlation(rng, cfg6):
    for tau in [3e-9, 47e-9, 199e-9, 399e-9]:
        col = delay_signature(tau, cfg6)
        for alpha in [1.0, 2.0 - 3.0j, -0.01j]:
            tau_hat, peak = estimate_delay(alpha * col, cfg6)
            assert abs(tau_hat - tau) < 1e-6 * cfg6.tau_ambiguity
            assert peak > 1 - 1e-9


def test_delay_zero_canonicalized(cfg6):
    # A zero delay aliases with one full ambiguity period; the estimate
    # must come back as exactly zero, not as the period.
    tau_hat, peak = estimate_delay(delay_signature(0.0, cfg6), cfg6)
    assert tau_hat == 0.0
    assert peak > 1 - 1e-9


def test_delay_rejects_wrong_length(cfg6):
    with pytest.raises(ValueError):
        estimate_delay(np.ones(5, dtype=complex), cfg6)
    with pytest.raises(ValueError):
        estimate_delay(np.zeros(6, dtype=complex), cfg6)


def test_resolve_gains_exact(rng, cfg6):
    from cpchan.channel import sample_channel

    paths = sample_channel(rng, cfg6, 3)
    snd = make_sounding(rng, cfg6, 6, 6)
    factors = received_factors(paths, snd, cfg6)
    model = CPModel(factors)
    gains, scales = resolve_gains(model, paths.aoa, paths.aod, paths.delay,
                                  snd, cfg6)
    np.testing.assert_allclose(gains, paths.gain, rtol=1e-10)
    np.testing.assert_allclose(scales, np.ones((3, 3)), atol=1e-10)


def test_resolve_gains_rescale_invariance(rng, cfg6):
    from cpchan.channel import sample_channel

    paths = sample_channel(rng, cfg6, 3)
    snd = make_sounding(rng, cfg6, 6, 6)
    a, b, c = received_factors(paths, snd, cfg6)
    lam = np.array([2.0, -0.5j, 0.1 + 0.9j])
    model = CPModel((a * lam, b / lam, c.copy()))
    gains, _ = resolve_gains(model, paths.aoa, paths.aod, paths.delay,
                             snd, cfg6)
    np.testing.assert_allclose(gains, paths.gain, rtol=1e-10)


def test_resolve_gains_degenerate_column(rng, cfg6):
    from cpchan.channel import sample_channel

    paths = sample_channel(rng, cfg6, 2)
    snd = make_sounding(rng, cfg6, 6, 6)
    a, b, c = received_factors(paths, snd, cfg6)
    a[:, 1] = 0.0
    with pytest.raises(NumericalError):
        resolve_gains(CPModel((a, b, c)), paths.aoa, paths.aod, paths.delay,
                      snd, cfg6)


def test_match_paths_identity_and_swap(rng, cfg6):
    paths = PathParams(aoa=np.array([0.1, -0.7, 1.0]),
                       aod=np.array([0.4, 0.9, -1.2]),
                       delay=np.array([10e-9, 60e-9, 90e-9]),
                       gain=np.ones(3, dtype=complex))
    pairs, cost = match_paths(paths, paths, cfg6)
    assert pairs == [(0, 0), (1, 1), (2, 2)]
    assert cost == 0.0
    swapped = PathParams(aoa=paths.aoa[[1, 0, 2]], aod=paths.aod[[1, 0, 2]],
                         delay=paths.delay[[1, 0, 2]],
                         gain=paths.gain[[1, 0, 2]])
    pairs, cost = match_paths(paths, swapped, cfg6)
    assert sorted(pairs) == [(0, 1), (1, 0), (2, 2)]
    assert cost == 0.0


def random_paths(rng, n):
    return PathParams(aoa=rng.uniform(-1.5, 1.5, n),
                      aod=rng.uniform(-1.5, 1.5, n),
                      delay=rng.uniform(0, 100e-9, n),
                      gain=complex_randn(rng, n))


def test_match_paths_agrees_with_brute_force(rng, cfg6):
    def brute(truth, est):
        best, best_cost = None, np.inf
        for perm in itertools.permutations(range(4)):
            cost = sum(
                abs(np.sin(truth.aoa[i]) - np.sin(est.aoa[p]))
                + abs(np.sin(truth.aod[i]) - np.sin(est.aod[p]))
                + abs(truth.delay[i] - est.delay[p]) / cfg6.tau_ambiguity
                for i, p in enumerate(perm))
            if cost < best_cost:
                best, best_cost = perm, cost
        return best, best_cost

    for _ in range(20):
        truth = random_paths(rng, 4)
        est = random_paths(rng, 4)
        pairs, total = match_paths(truth, est, cfg6)
        perm, best_cost = brute(truth, est)
        # Equal-cost assignments can tie, so only the achieved cost is
        # compared against the exhaustive optimum, not the labels.
        assert total == pytest.approx(best_cost, rel=1e-12)
        assert sorted(p[0] for p in pairs) == [0, 1, 2, 3]
        assert sorted(p[1] for p in pairs) == [0, 1, 2, 3]


def test_match_paths_unequal_counts(rng, cfg6):
    truth = random_paths(rng, 4)
    est = random_paths(rng, 2)
    pairs, _ = match_paths(truth, est, cfg6)
    assert len(pairs) == 2
    assert sorted({p[1] for p in pairs}) == [0, 1]


def test_metrics_perfect_and_zero(rng, cfg6):
    truth = random_paths(rng, 3)
    h = channel_matrices(truth, cfg6)
    out = metrics(truth, truth, h, h, cfg6)
    for key in ["mse_aoa", "mse_aod", "mse_delay", "mse_gain", "nmse"]:
        assert out[key] == 0.0
    assert metrics(truth, truth, h, np.zeros_like(h), cfg6)["nmse"] == 1.0
    with pytest.raises(ValueError):
        nmse(np.zeros(3), np.ones(3))


def test_metrics_single_path_arithmetic(cfg6):
    truth = PathParams(aoa=np.array([0.2]), aod=np.array([-0.4]),
                       delay=np.array([30e-9]),
                       gain=np.array([1.0 + 2.0j]))
    est = PathParams(aoa=np.array([0.25]), aod=np.array([-0.38]),
                     delay=np.array([31e-9]),
                     gain=np.array([1.1 + 1.9j]))
    out = metrics(truth, est, np.array([2.0]), np.array([1.0]), cfg6)
    assert out["mse_aoa"] == pytest.approx((np.sin(0.2) - np.sin(0.25)) ** 2)
    assert out["mse_aod"] == pytest.approx((np.sin(-0.4) - np.sin(-0.38)) ** 2)
    assert out["mse_delay"] == pytest.approx(1e-18)
    assert out["mse_gain"] == pytest.approx(abs(-0.1 + 0.1j) ** 2)
    assert out["nmse"] == pytest.approx(0.25)


def pipeline_instance(seed, cfg, n_paths=4, snr_db=float("inf")):
    rng = np.random.default_rng(seed)
    from cpchan.channel import sample_channel

    paths = sample_channel(rng, cfg, n_paths)
    snd = make_sounding(rng, cfg, 6, 6)
    data = synthesize(rng, paths, snd, cfg, snr_db)
    return paths, snd, data, rng


def test_pipeline_noiseless_exact(cfg6):
    paths, snd, data, rng = pipeline_instance(42, cfg6)
    opts = AlsOptions(max_iters=2000, rel_fit_tol=1e-12, fit_stop=1e-12)
    search = CorrelationSearch(angle_tol=1e-9, delay_tol_frac=1e-10)
    res = estimate_pipeline(data.y, snd, cfg6, rng, n_paths=4, als_opts=opts,
                            search=search)
    h_true = channel_matrices(paths, cfg6)
    out = metrics(paths, res.paths, h_true, res.h_hat, cfg6)
    assert out["nmse"] < 1e-10
    assert out["mse_aoa"] < 1e-8 and out["mse_aod"] < 1e-8
    assert out["mse_delay"] < (1e-4 * cfg6.tau_ambiguity) ** 2
    pairs, _ = match_paths(paths, res.paths, cfg6)
    for t, e in pairs:
        rel = abs(res.paths.gain[e] - paths.gain[t]) / abs(paths.gain[t])
        assert rel < 1e-6
    assert np.all(res.peaks >= 0.0) and np.all(res.peaks <= 1.0)
    assert not res.low_confidence.any()


def test_pipeline_accepts_received_data(cfg6):
    paths, snd, data, _ = pipeline_instance(43, cfg6)
    opts = AlsOptions(max_iters=500, restarts=2)
    res_tensor = estimate_pipeline(data.y, snd, cfg6,
                                   np.random.default_rng(5), n_paths=4,
                                   als_opts=opts)
    res_data = estimate_pipeline(data, snd, cfg6,
                                 np.random.default_rng(5), n_paths=4,
                                 als_opts=opts)
    np.testing.assert_allclose(res_data.h_hat, res_tensor.h_hat, atol=0)


def test_pipeline_full_band_request(cfg6):
    paths, snd, data, rng = pipeline_instance(44, cfg6)
    subs = np.arange(1, cfg6.k_total + 1)
    res = estimate_pipeline(data.y, snd, cfg6, rng, n_paths=4,
                            subcarriers=subs)
    assert res.h_hat.shape[0] == cfg6.k_total
    np.testing.assert_allclose(
        res.h_hat, channel_matrices(res.paths, cfg6, subcarriers=subs))


def test_pipeline_rank_mode_validation(cfg6):
    paths, snd, data, rng = pipeline_instance(45, cfg6)
    with pytest.raises(ValueError):
        estimate_pipeline(data.y, snd, cfg6, rng)
    with pytest.raises(ValueError):
        estimate_pipeline(data.y, snd, cfg6, rng, n_paths=4, over_paths=8)


def test_pipeline_overestimated_branch(cfg6):
    paths, snd, data, rng = pipeline_instance(46, cfg6, snr_db=20.0)
    res = estimate_pipeline(data.y, snd, cfg6, rng, over_paths=8,
                            als_opts=AlsOptions(max_iters=500, restarts=2))
    assert res.paths.n_paths == res.model.rank
    assert res.peaks.shape == (res.model.rank, 3)


def test_pipeline_single_subcarrier_fails(monkeypatch):
    # One training subcarrier leaves the third mode with a single row, so
    # the decomposition cannot separate four paths; the estimate should be
    # useless rather than silently plausible.
    from cpchan.channel import SystemConfig, sample_channel

    cfg = SystemConfig(k_train=1)
    rng = np.random.default_rng(47)
    paths = sample_channel(rng, cfg, 4)
    snd = make_sounding(rng, cfg, 6, 6)
    data = synthesize(rng, paths, snd, cfg, float("inf"))
    res = estimate_pipeline(data.y, snd, cfg, rng, n_paths=4,
                            als_opts=AlsOptions(max_iters=300, restarts=2))
    h_true = channel_matrices(paths, cfg)
    assert nmse(h_true, res.h_hat) > 0.5
