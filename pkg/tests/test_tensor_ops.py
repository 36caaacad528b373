import numpy as np
import pytest

from cpchan.exceptions import CapabilityError
from cpchan.tensor_ops import (CPModel, cp_reconstruct, fold, frob_norm,
                               k_rank, khatri_rao, kruskal_ok, relative_fit,
                               unfold)

from conftest import complex_randn


def seq_tensor():
    # x[i, j, k] = 1 + i + 2j + 4k, i.e. 1..8 laid out with the first index
    # fastest.  Every unfolding of it can be written down by hand.
    return np.arange(1, 9).reshape(2, 2, 2, order="F")


def test_unfold_mode1_frozen():
    np.testing.assert_array_equal(unfold(seq_tensor(), 1),
                                  [[1, 3, 5, 7], [2, 4, 6, 8]])


def test_unfold_mode2_frozen():
    np.testing.assert_array_equal(unfold(seq_tensor(), 2),
                                  [[1, 2, 5, 6], [3, 4, 7, 8]])


def test_unfold_mode3_frozen():
    np.testing.assert_array_equal(unfold(seq_tensor(), 3),
                                  [[1, 2, 3, 4], [5, 6, 7, 8]])


@pytest.mark.parametrize("mode", [1, 2, 3])
def test_fold_round_trip(rng, mode):
    x = complex_randn(rng, 3, 4, 5)
    back = fold(unfold(x, mode), mode, x.shape)
    np.testing.assert_array_equal(back, x)


def test_unfold_bad_mode():
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 2, 2)), 0)
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 2)), 1)


def test_fold_shape_mismatch():
    with pytest.raises(ValueError):
        fold(np.zeros((2, 5)), 1, (2, 2, 2))


def test_khatri_rao_single_column():
    x = np.array([[1.0], [2.0]])
    y = np.array([[3.0], [4.0]])
    np.testing.assert_array_equal(khatri_rao(x, y),
                                  [[3.0], [4.0], [6.0], [8.0]])


def test_khatri_rao_against_loop(rng):
    x = complex_randn(rng, 3, 4)
    y = complex_randn(rng, 5, 4)
    expect = np.empty((15, 4), dtype=complex)
    for r in range(4):
        expect[:, r] = np.kron(x[:, r], y[:, r])
    got = khatri_rao(x, y)
    assert np.max(np.abs(got - expect)) < 1e-12


def test_khatri_rao_column_mismatch():
    with pytest.raises(ValueError):
        khatri_rao(np.zeros((2, 3)), np.zeros((2, 4)))


def test_cp_reconstruct_against_loop(rng):
    a = complex_randn(rng, 3, 2)
    b = complex_randn(rng, 4, 2)
    c = complex_randn(rng, 5, 2)
    expect = np.zeros((3, 4, 5), dtype=complex)
    for r in range(2):
        expect += (a[:, r][:, None, None] * b[:, r][None, :, None]
                   * c[:, r][None, None, :])
    got = cp_reconstruct((a, b, c))
    assert np.max(np.abs(got - expect)) < 1e-12


@pytest.mark.parametrize("mode", [1, 2, 3])
def test_unfold_factor_identities(rng, mode):
    a = complex_randn(rng, 3, 4)
    b = complex_randn(rng, 5, 4)
    c = complex_randn(rng, 6, 4)
    x = cp_reconstruct((a, b, c))
    if mode == 1:
        expect = a @ khatri_rao(c, b).T
    elif mode == 2:
        expect = b @ khatri_rao(c, a).T
    else:
        expect = c @ khatri_rao(b, a).T
    err = frob_norm(unfold(x, mode) - expect) / frob_norm(x)
    assert err < 1e-12


def test_cpmodel_rank_mismatch():
    with pytest.raises(ValueError):
        CPModel(factors=(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2))))


def test_relative_fit_exact_and_zero(rng):
    a = complex_randn(rng, 3, 2)
    b = complex_randn(rng, 4, 2)
    c = complex_randn(rng, 5, 2)
    model = CPModel(factors=(a, b, c))
    assert relative_fit(model.reconstruct(), model) < 1e-14
    with pytest.raises(ValueError):
        relative_fit(np.zeros((3, 4, 5)), model)


def test_k_rank_full():
    assert k_rank(np.eye(4)) == 4


def test_k_rank_repeated_column():
    a = np.eye(3)
    a = np.hstack([a, a[:, :1]])
    assert k_rank(a) == 1


def test_k_rank_zero_column():
    a = np.zeros((3, 2))
    a[:, 0] = [1.0, 0.0, 0.0]
    assert k_rank(a) == 0


def test_k_rank_generic_rectangular(rng):
    # Random 4 x 6: any 4 columns are generically independent.
    a = complex_randn(rng, 4, 6)
    assert k_rank(a) == 4


def test_k_rank_refuses_wide():
    with pytest.raises(CapabilityError):
        k_rank(np.zeros((3, 9)))


def test_kruskal_ok(rng):
    a = complex_randn(rng, 6, 4)
    b = complex_randn(rng, 6, 4)
    c = complex_randn(rng, 6, 4)
    assert kruskal_ok(a, b, c, 4)
    # One-row third factor drops its k-rank to 1: 4 + 4 + 1 < 2*4 + 2.
    assert not kruskal_ok(a, b, complex_randn(rng, 1, 4), 4)
