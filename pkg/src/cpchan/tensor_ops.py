"""Dense third-order tensor algebra.

Tensors are plain complex (or real) numpy arrays of shape ``(I1, I2, I3)``.
Matricizations follow the column-ordering convention in which the leading
non-unfolded index varies fastest; all identities below are stated for that
convention and are exercised against brute-force enumerations in the tests.

For a rank-R model with factor matrices ``(A, B, C)`` of shapes
``(I1, R), (I2, R), (I3, R)`` the reconstruction satisfies

    unfold(X, 1) = A @ khatri_rao(C, B).T
    unfold(X, 2) = B @ khatri_rao(C, A).T
    unfold(X, 3) = C @ khatri_rao(B, A).T
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .exceptions import CapabilityError

__all__ = [
    "CPModel",
    "unfold",
    "fold",
    "khatri_rao",
    "cp_reconstruct",
    "frob_norm",
    "relative_fit",
    "k_rank",
    "kruskal_ok",
]

# Exhaustive subset enumeration of k_rank grows combinatorially; refuse
# beyond this many columns instead of silently taking forever.
K_RANK_MAX_COLS = 8

# A column subset counts as full rank when its smallest singular value
# exceeds this factor times the largest singular value of the whole matrix.
K_RANK_RTOL = 1e-10


def _require_3d(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected a third-order tensor, got ndim={x.ndim}")
    return x


def unfold(x: np.ndarray, mode: int) -> np.ndarray:
    """Matricize a third-order tensor along ``mode`` (1, 2, or 3).

    The result has shape ``(I_mode, prod(other dims))``.  Column ``c`` of the
    mode-1 unfolding holds ``X[:, i2, i3]`` with ``c = i2 + i3 * I2`` (zero
    based); modes 2 and 3 follow the same leading-index-fastest rule.
    """
    x = _require_3d(x)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2, or 3, got {mode}")
    ax = mode - 1
    return np.reshape(np.moveaxis(x, ax, 0), (x.shape[ax], -1), order="F")


def fold(mat: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the tensor of shape ``dims``."""
    mat = np.asarray(mat)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2, or 3, got {mode}")
    if len(dims) != 3:
        raise ValueError(f"dims must have length 3, got {dims}")
    ax = mode - 1
    rest = [d for i, d in enumerate(dims) if i != ax]
    expected = (dims[ax], rest[0] * rest[1])
    if mat.ndim != 2 or mat.shape != expected:
        raise ValueError(f"matrix shape {mat.shape} does not match unfolding "
                         f"shape {expected} for mode {mode} of dims {dims}")
    return np.moveaxis(np.reshape(mat, (dims[ax], rest[0], rest[1]), order="F"), 0, ax)


def khatri_rao(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product.

    For ``x`` of shape ``(P, R)`` and ``y`` of shape ``(Q, R)`` the result has
    shape ``(P*Q, R)``; column ``r`` is ``kron(x[:, r], y[:, r])``, so the
    entry ``x[p, r] * y[q, r]`` sits in row ``q + p * Q``.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"column counts differ: {x.shape[1]} vs {y.shape[1]}")
    p, r = x.shape
    q = y.shape[0]
    return (x[:, None, :] * y[None, :, :]).reshape(p * q, r)


def _check_factors(factors) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(factors) != 3:
        raise ValueError(f"expected 3 factor matrices, got {len(factors)}")
    mats = tuple(np.asarray(f) for f in factors)
    for f in mats:
        if f.ndim != 2:
            raise ValueError("factor matrices must be two-dimensional")
    ranks = {f.shape[1] for f in mats}
    if len(ranks) != 1:
        raise ValueError(f"factor matrices disagree on rank: "
                         f"{[f.shape[1] for f in mats]}")
    return mats


def cp_reconstruct(factors) -> np.ndarray:
    """Dense tensor of the rank-R model with the given factor matrices."""
    a, b, c = _check_factors(factors)
    return np.einsum("ir,jr,kr->ijk", a, b, c)


@dataclass
class CPModel:
    """Rank-R model of a third-order tensor, held as three factor matrices."""

    factors: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        self.factors = _check_factors(self.factors)

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(f.shape[0] for f in self.factors)

    def reconstruct(self) -> np.ndarray:
        return cp_reconstruct(self.factors)


def frob_norm(x: np.ndarray) -> float:
    """Frobenius norm of an array of any shape."""
    return float(np.linalg.norm(np.asarray(x).ravel()))


def relative_fit(x: np.ndarray, model: CPModel) -> float:
    """Relative reconstruction error ``||x - model|| / ||x||``.

    Zero for an exact model; errors out on a zero-norm reference tensor.
    """
    x = _require_3d(x)
    ref = frob_norm(x)
    if ref == 0.0:
        raise ValueError("relative fit is undefined for a zero reference tensor")
    return frob_norm(x - model.reconstruct()) / ref


def k_rank(a: np.ndarray) -> int:
    """Largest k such that every k-subset of columns is linearly independent.

    Decided by exhaustive subset enumeration with an SVD per subset, so the
    column count is capped at ``K_RANK_MAX_COLS``; wider matrices raise
    :class:`CapabilityError` (sample column subsets yourself if an estimate
    is acceptable).
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError("k_rank expects a matrix")
    rows, cols = a.shape
    if cols == 0:
        raise ValueError("k_rank is undefined for an empty matrix")
    if cols > K_RANK_MAX_COLS:
        raise CapabilityError(
            f"exhaustive k_rank supports at most {K_RANK_MAX_COLS} columns, "
            f"got {cols}; consider testing a random sample of subsets instead")
    s_whole = np.linalg.svd(a, compute_uv=False)
    if s_whole[0] == 0.0:
        return 0
    tol = K_RANK_RTOL * s_whole[0]
    best = 0
    for size in range(1, min(rows, cols) + 1):
        ok = True
        for subset in combinations(range(cols), size):
            s = np.linalg.svd(a[:, subset], compute_uv=False)
            if s[-1] <= tol:
                ok = False
                break
        if not ok:
            break
        best = size
    return best


def kruskal_ok(a: np.ndarray, b: np.ndarray, c: np.ndarray, rank: int) -> bool:
    """Whether the classic sufficient condition for essential uniqueness of a
    rank-``rank`` decomposition holds: the k-ranks of the three factor
    matrices sum to at least ``2 * rank + 2``.
    """
    if rank < 1:
        raise ValueError(f"rank must be positive, got {rank}")
    return k_rank(a) + k_rank(b) + k_rank(c) >= 2 * rank + 2
