import numpy as np
import pytest

from cpchan.channel import PathParams, sample_channel
from cpchan.crb import (CrbBounds, Fim, FimInputs, crb, crb_real_split,
                        derivative_factors, fim, fim_real_split,
                        mc_fim_oracle, noise_cross_cov)
from cpchan.exceptions import NumericalError
from cpchan.training import make_sounding, received_factors, synthesize

from conftest import complex_randn


def fim_instance(rng, cfg, n_paths=2, sigma2=1e-12):
    paths = sample_channel(rng, cfg, n_paths)
    snd = make_sounding(rng, cfg, 6, 6)
    return FimInputs(paths=paths, snd=snd, cfg=cfg, sigma2=sigma2)


def test_inputs_validation(rng, cfg6):
    paths = sample_channel(rng, cfg6, 2)
    snd = make_sounding(rng, cfg6, 6, 6)
    with pytest.raises(ValueError):
        FimInputs(paths=paths, snd=snd, cfg=cfg6, sigma2=0.0)
    with pytest.raises(ValueError):
        FimInputs(paths=paths, snd=snd, cfg=cfg6, sigma2=-1.0)
    dead = PathParams(aoa=paths.aoa, aod=paths.aod, delay=paths.delay,
                      gain=np.zeros(2, dtype=complex))
    with pytest.raises(ValueError):
        FimInputs(paths=dead, snd=snd, cfg=cfg6, sigma2=1e-12)


def test_endfire_angle_derivative_vanishes(rng, cfg6):
    paths = sample_channel(rng, cfg6, 2)
    endfire = PathParams(aoa=np.array([np.pi / 2, paths.aoa[1]]),
                         aod=paths.aod, delay=paths.delay, gain=paths.gain)
    snd = make_sounding(rng, cfg6, 6, 6)
    d = derivative_factors(FimInputs(paths=endfire, snd=snd, cfg=cfg6,
                                     sigma2=1e-12))
    assert np.abs(d.da[:, 0]).max() < 1e-12
    assert np.abs(d.da[:, 1]).max() > 1e-12


def test_derivatives_match_finite_differences(cfg6):
    h = 1e-6
    for seed in range(8):
        rng = np.random.default_rng([21, seed])
        paths = sample_channel(rng, cfg6, 3)
        snd = make_sounding(rng, cfg6, 6, 6)
        inputs = FimInputs(paths=paths, snd=snd, cfg=cfg6, sigma2=1e-12)
        d = derivative_factors(inputs)

        def factors_at(**shift):
            shifted = PathParams(
                aoa=paths.aoa + shift.get("aoa", 0.0),
                aod=paths.aod + shift.get("aod", 0.0),
                delay=paths.delay + shift.get("delay", 0.0),
                gain=paths.gain)
            return received_factors(shifted, snd, cfg6)

        step = np.zeros(3)
        for l in range(3):
            step[:] = 0.0
            step[l] = h
            fd_a = (factors_at(aoa=step)[0] - factors_at(aoa=-step)[0]) / (2 * h)
            fd_b = (factors_at(aod=step)[1] - factors_at(aod=-step)[1]) / (2 * h)
            tau_h = h * cfg6.tau_ambiguity
            fd_c = (factors_at(delay=step * cfg6.tau_ambiguity)[2]
                    - factors_at(delay=-step * cfg6.tau_ambiguity)[2]) / (2 * tau_h)
            for fd, an in [(fd_a[:, l], d.da[:, l]), (fd_b[:, l], d.db[:, l]),
                           (fd_c[:, l], d.dc[:, l])]:
                assert np.abs(fd - an).max() < 1e-6 * np.abs(an).max()


def test_noise_cross_cov_scalar_case():
    for pair in [(1, 2), (1, 3), (2, 3)]:
        mat = noise_cross_cov(1, 1, 1, pair, 0.3).toarray()
        np.testing.assert_allclose(mat, [[0.3]])


def test_noise_cross_cov_hand_enumeration():
    # M=T=2, K=1, stacking pair (1,2): entry (mi,ti) sits at row ti+2*mi,
    # column mi+2*ti, giving an identity with the middle two rows swapped.
    mat = noise_cross_cov(2, 2, 1, (1, 2), 2.0).toarray()
    expect = np.zeros((4, 4))
    expect[0, 0] = expect[1, 2] = expect[2, 1] = expect[3, 3] = 2.0
    np.testing.assert_allclose(mat, expect)


def test_noise_cross_cov_permutation_structure():
    for pair in [(1, 2), (1, 3), (2, 3)]:
        mat = noise_cross_cov(3, 4, 5, pair, 1.7)
        dense = mat.toarray()
        assert mat.nnz == 60
        np.testing.assert_allclose(dense.sum(axis=0), 1.7)
        np.testing.assert_allclose(dense.sum(axis=1), 1.7)
    with pytest.raises(ValueError):
        noise_cross_cov(2, 2, 2, (2, 1), 1.0)
    with pytest.raises(ValueError):
        noise_cross_cov(0, 2, 2, (1, 2), 1.0)
    with pytest.raises(ValueError):
        noise_cross_cov(2, 2, 2, (1, 2), 0.0)


def test_fim_hermitian_psd(rng, cfg6):
    f = fim(fim_instance(rng, cfg6))
    omega = f.omega
    np.testing.assert_allclose(omega, omega.conj().T, atol=0)
    eigs = np.linalg.eigvalsh(omega)
    assert eigs.min() >= -1e-8 * np.linalg.norm(omega, 2)


def test_fim_noise_homogeneity(rng, cfg6):
    inputs = fim_instance(rng, cfg6, sigma2=1e-12)
    doubled = FimInputs(paths=inputs.paths, snd=inputs.snd, cfg=inputs.cfg,
                        sigma2=2e-12)
    f1 = fim(inputs)
    f2 = fim(doubled)
    np.testing.assert_allclose(f2.omega, 0.5 * f1.omega, rtol=1e-12)
    b1 = crb(f1)
    b2 = crb(f2)
    for group in ["aoa", "aod", "delay", "gain"]:
        np.testing.assert_allclose(getattr(b2, group),
                                   2.0 * getattr(b1, group), rtol=1e-9)


def test_crb_diagonal_information():
    bounds = crb(Fim(omega=5.0 * np.eye(8, dtype=complex), n_paths=2))
    for group in ["aoa", "aod", "delay", "gain"]:
        np.testing.assert_allclose(getattr(bounds, group), 0.2)
    assert bounds.condition == pytest.approx(1.0)


def test_crb_rejects_endfire_singularity(rng, cfg6):
    paths = sample_channel(rng, cfg6, 2)
    endfire = PathParams(aoa=np.array([np.pi / 2, paths.aoa[1]]),
                         aod=paths.aod, delay=paths.delay, gain=paths.gain)
    snd = make_sounding(rng, cfg6, 6, 6)
    f = fim(FimInputs(paths=endfire, snd=snd, cfg=cfg6, sigma2=1e-12))
    with pytest.raises(NumericalError):
        crb(f)


def test_real_split_agrees_on_real_parameters(rng, cfg6):
    # The coupling blocks of the complex-gain assembly go through sparse
    # stacking covariances while the real-split form multiplies Gram
    # factors directly; their shared submatrix must agree regardless.
    inputs = fim_instance(rng, cfg6, n_paths=3)
    omega = fim(inputs).omega
    j = fim_real_split(inputs)
    n = 3 * inputs.paths.n_paths
    np.testing.assert_allclose(j[:n, :n], omega[:n, :n].real, rtol=1e-9)
    assert np.allclose(j, j.T)
    bounds = crb_real_split(j, inputs.paths.n_paths)
    assert bounds.condition > 1.0
    with pytest.raises(ValueError):
        crb_real_split(j, 2)


def test_oracle_validates_trials(rng, cfg6):
    inputs = fim_instance(rng, cfg6)
    with pytest.raises(ValueError):
        mc_fim_oracle(inputs, 100, rng)


def test_oracle_matches_closed_form_smoke(cfg6):
    # Small-count smoke version; the acceptance suite runs the full-size
    # comparison at 1e4 trials with the contract tolerances.
    from cpchan.channel import SystemConfig

    cfg = SystemConfig(k_train=3)
    rng = np.random.default_rng(77)
    paths = sample_channel(rng, cfg, 1)
    snd = make_sounding(rng, cfg, 3, 3)
    data = synthesize(rng, paths, snd, cfg, 20.0)
    inputs = FimInputs(paths=paths, snd=snd, cfg=cfg, sigma2=data.sigma2)
    omega = fim(inputs).omega
    est = mc_fim_oracle(inputs, 3000, rng)
    n = 3
    gap = np.linalg.norm(est[:n, :n] - omega[:n, :n])
    assert gap < 0.15 * np.linalg.norm(omega[:n, :n])
