import numpy as np
import pytest

from cpchan.channel import SystemConfig, channel_matrix, sample_channel
from cpchan.tensor_ops import cp_reconstruct, unfold
from cpchan.training import (Sounding, gen_unit_circle, make_sounding,
                             realized_snr, received_factors, synthesize)


def test_gen_unit_circle_modulus(rng):
    m = gen_unit_circle(rng, 5, 7, 0.25)
    np.testing.assert_allclose(np.abs(m), 0.25)
    with pytest.raises(ValueError):
        gen_unit_circle(rng, 0, 3, 1.0)
    with pytest.raises(ValueError):
        gen_unit_circle(rng, 2, 3, 0.0)


def test_make_sounding_shapes(rng, cfg6):
    snd = make_sounding(rng, cfg6, 6, 7)
    assert snd.q.shape == (cfg6.n_ms, 6)
    assert snd.p.shape == (cfg6.n_bs, 7)
    assert snd.m_subframes == 6
    assert snd.t_frames == 7
    np.testing.assert_allclose(np.abs(snd.q), 1.0 / cfg6.n_ms)
    np.testing.assert_allclose(np.abs(snd.p), 1.0 / cfg6.n_bs)


def test_sounding_rejects_wrong_modulus(rng, cfg6):
    snd = make_sounding(rng, cfg6, 4, 4)
    with pytest.raises(ValueError):
        Sounding(q=2.0 * snd.q, p=snd.p)


def test_received_slices_are_projected_channels(rng, cfg6):
    # Subcarrier k of the clean tensor must equal the combined/precoded
    # channel matrix for that subcarrier; this ties the factor construction
    # to the physical observation model.
    paths = sample_channel(rng, cfg6, 3)
    snd = make_sounding(rng, cfg6, 5, 4)
    y = cp_reconstruct(received_factors(paths, snd, cfg6))
    for k in range(1, cfg6.k_train + 1):
        expect = snd.q.T @ channel_matrix(paths, cfg6, k) @ snd.p
        np.testing.assert_allclose(y[:, :, k - 1], expect, atol=1e-12)


def test_received_mode3_rows_are_vectorized_slices(rng, cfg6):
    paths = sample_channel(rng, cfg6, 2)
    snd = make_sounding(rng, cfg6, 4, 3)
    y = cp_reconstruct(received_factors(paths, snd, cfg6))
    mat = unfold(y, 3)
    for k in range(cfg6.k_train):
        np.testing.assert_array_equal(mat[k], y[:, :, k].ravel(order="F"))


def test_synthesize_noiseless(rng, cfg6):
    paths = sample_channel(rng, cfg6, 2)
    snd = make_sounding(rng, cfg6, 4, 4)
    data = synthesize(rng, paths, snd, cfg6, float("inf"))
    assert data.sigma2 == 0.0
    np.testing.assert_array_equal(data.y, data.y_clean)


def test_synthesize_snr_calibration(cfg6):
    # Averaged over draws the realized SNR must sit on the requested value;
    # each single draw fluctuates by the chi-square spread of the noise.
    rng = np.random.default_rng(3)
    paths = sample_channel(rng, cfg6, 4)
    snd = make_sounding(rng, cfg6, 6, 6)
    vals = [realized_snr(synthesize(rng, paths, snd, cfg6, 10.0).y,
                         synthesize(rng, paths, snd, cfg6, float("inf")).y_clean)
            for _ in range(40)]
    assert np.mean(vals) == pytest.approx(10.0, abs=0.5)


def test_synthesize_noise_doubling(cfg6):
    # Halving SNR by 3.01 dB doubles sigma2.
    rng = np.random.default_rng(4)
    paths = sample_channel(rng, cfg6, 3)
    snd = make_sounding(rng, cfg6, 5, 5)
    s20 = synthesize(rng, paths, snd, cfg6, 20.0).sigma2
    s17 = synthesize(rng, paths, snd, cfg6, 20.0 - 10 * np.log10(2)).sigma2
    assert s17 == pytest.approx(2 * s20, rel=1e-12)


def test_realized_snr_edges(rng, cfg6):
    paths = sample_channel(rng, cfg6, 2)
    snd = make_sounding(rng, cfg6, 3, 3)
    clean = synthesize(rng, paths, snd, cfg6, float("inf")).y_clean
    assert realized_snr(clean, clean) == float("inf")
    with pytest.raises(ValueError):
        realized_snr(clean, np.zeros_like(clean))
