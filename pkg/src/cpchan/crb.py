"""Estimation-theoretic lower bounds for the training model.

The observation is the noiseless rank-L training tensor plus circular white
Gaussian noise.  The information matrix over the stacked parameter vector
[aoa, aod, delay, gain] (4L entries, gains complex) is assembled from closed
forms: principal blocks reduce to elementwise products of small Gram-type
matrices, while blocks coupling different tensor modes are sandwiches of the
sparse noise cross-covariances between the three matricization orders.
Diagonal entries of the inverse give the per-parameter bounds.

Gain derivatives follow the convention for holomorphic dependence on the
complex gain with its conjugate held fixed; scores for the real parameters
are plain real derivatives.  A Monte Carlo oracle that re-derives the same
matrix from finite-difference log-likelihood scores lives alongside, and an
alternative over [aoa, aod, delay, Re gain, Im gain] is provided for
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .channel import PathParams, SystemConfig, steering_from_sin
from .exceptions import NumericalError
from .tensor_ops import cp_reconstruct, khatri_rao
from .training import Sounding, received_factors

__all__ = [
    "FimInputs",
    "Fim",
    "CrbBounds",
    "derivative_factors",
    "noise_cross_cov",
    "fim",
    "fim_real_split",
    "crb",
    "crb_real_split",
    "mc_fim_oracle",
]

# Information matrices with a worse condition number than this are refused
# instead of silently inverted.
MAX_CONDITION = 1e12
# Tolerated relative imaginary residue on inverse diagonal entries.
_IMAG_RTOL = 1e-8

_GROUPS = ("aoa", "aod", "delay", "gain")


@dataclass(frozen=True)
class FimInputs:
    """Ground-truth evaluation point of the bound computations."""

    paths: PathParams
    snd: Sounding
    cfg: SystemConfig
    sigma2: float

    def __post_init__(self):
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive and finite, "
                             f"got {self.sigma2!r}")
        if np.any(np.abs(self.paths.gain) == 0.0):
            raise ValueError("zero path gains make the bound singular")


@dataclass(frozen=True)
class FactorDerivatives:
    """Received-tensor factor matrices and their parameter derivatives.

    ``a, b, c`` are the factors of the clean tensor; ``ramps`` holds the
    unweighted delay phase ramps (``c`` equals ``ramps`` scaled by the
    gains).  ``da, db`` differentiate the first two factors by their angle,
    ``dc`` the third by its delay.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    ramps: np.ndarray
    da: np.ndarray
    db: np.ndarray
    dc: np.ndarray


def derivative_factors(inputs: FimInputs) -> FactorDerivatives:
    """Evaluate factor matrices and their derivatives at the true parameters."""
    paths, snd, cfg = inputs.paths, inputs.snd, inputs.cfg
    a, b, c = received_factors(paths, snd, cfg)
    ramps = c / paths.gain
    # d/d(angle) exp(j*2*pi*spacing*sin(angle)*n) pulls down
    # j*2*pi*spacing*cos(angle)*n.
    elements_ms = np.arange(cfg.n_ms)[:, None]
    elements_bs = np.arange(cfg.n_bs)[:, None]
    steer_ms = steering_from_sin(np.sin(paths.aoa), cfg.n_ms, cfg.spacing)
    steer_bs = steering_from_sin(np.sin(paths.aod), cfg.n_bs, cfg.spacing)
    factor = 2.0 * np.pi * cfg.spacing
    da = 1j * snd.q.T @ (factor * np.cos(paths.aoa) * elements_ms * steer_ms)
    db = 1j * snd.p.T @ (factor * np.cos(paths.aod) * elements_bs * steer_bs)
    # d/d(delay) of ramp entry k is -j*2*pi*f_s*k/k_total times the entry.
    k = np.arange(1, cfg.k_train + 1)[:, None]
    dc = -2j * np.pi * (cfg.f_s / cfg.k_total) * k * c
    return FactorDerivatives(a=a, b=b, c=c, ramps=ramps, da=da, db=db, dc=dc)


def _vec_indices(m: int, t: int, k: int):
    # Flat positions of entry (mi, ti, ki) in the three stacked orderings:
    # mode 1 stacks (t fast, then k, then m), mode 2 (m, k, t), mode 3 (m, t, k).
    mi, ti, ki = np.meshgrid(np.arange(m), np.arange(t), np.arange(k),
                             indexing="ij")
    mi, ti, ki = mi.ravel(), ti.ravel(), ki.ravel()
    r1 = ti + ki * t + mi * t * k
    r2 = mi + ki * m + ti * m * k
    r3 = mi + ti * m + ki * m * t
    return r1, r2, r3


def noise_cross_cov(m: int, t: int, k: int, pair: tuple[int, int],
                    sigma2: float) -> scipy.sparse.csr_matrix:
    """Covariance between two stacked orderings of the same white noise.

    ``pair`` picks which two of the three matricization stackings are
    correlated; the result is an (m*t*k) square sparse matrix with exactly
    one entry of value ``sigma2`` per row and per column.
    """
    if pair not in ((1, 2), (1, 3), (2, 3)):
        raise ValueError(f"pair must be (1,2), (1,3) or (2,3), got {pair}")
    if min(m, t, k) < 1:
        raise ValueError("dimensions must be positive")
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2!r}")
    indices = _vec_indices(m, t, k)
    rows = indices[pair[0] - 1]
    cols = indices[pair[1] - 1]
    n = m * t * k
    data = np.full(n, sigma2)
    return scipy.sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class Fim:
    """Information matrix over [aoa, aod, delay, gain], shape (4L, 4L)."""

    omega: np.ndarray
    n_paths: int


def _tt(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Transposed product against the conjugate; the building block of every
    # closed-form entry.
    return x.T @ y.conj()


def fim(inputs: FimInputs) -> Fim:
    """Assemble the information matrix at the true parameters.

    Principal blocks for the three real parameter groups are twice the real
    part of scaled Gram products; mode-coupling blocks sandwich the sparse
    stacking cross-covariances between the relevant column families, with
    the gain-coupled blocks conjugated and not doubled.  Off-diagonal blocks
    below the diagonal follow by conjugate symmetry.
    """
    d = derivative_factors(inputs)
    cfg = inputs.cfg
    n_paths = inputs.paths.n_paths
    m, t, k = d.a.shape[0], d.b.shape[0], cfg.k_train
    s2 = inputs.sigma2

    kr_cb = khatri_rao(d.c, d.b)
    kr_ca = khatri_rao(d.c, d.a)
    kr_ba = khatri_rao(d.b, d.a)
    u_aoa = khatri_rao(d.da, kr_cb)
    u_aod = khatri_rao(d.db, kr_ca)
    u_delay = khatri_rao(d.dc, kr_ba)
    u_gain = khatri_rao(d.ramps, kr_ba)
    s12 = noise_cross_cov(m, t, k, (1, 2), s2)
    s13 = noise_cross_cov(m, t, k, (1, 3), s2)
    s23 = noise_cross_cov(m, t, k, (2, 3), s2)

    def sandwich(u, s, v):
        return (u.T @ (s @ v.conj())) / s2 ** 2

    blocks = {}
    blocks[(0, 0)] = 2.0 / s2 * (_tt(d.da, d.da) * _tt(d.c, d.c)
                                 * _tt(d.b, d.b)).real
    blocks[(1, 1)] = 2.0 / s2 * (_tt(d.db, d.db) * _tt(d.c, d.c)
                                 * _tt(d.a, d.a)).real
    blocks[(2, 2)] = 2.0 / s2 * (_tt(d.dc, d.dc) * _tt(d.b, d.b)
                                 * _tt(d.a, d.a)).real
    blocks[(3, 3)] = np.conj(1.0 / s2 * _tt(d.ramps, d.ramps)
                             * _tt(d.b, d.b) * _tt(d.a, d.a))
    blocks[(0, 1)] = 2.0 * sandwich(u_aoa, s12, u_aod).real
    blocks[(0, 2)] = 2.0 * sandwich(u_aoa, s13, u_delay).real
    blocks[(0, 3)] = np.conj(sandwich(u_aoa, s13, u_gain))
    blocks[(1, 2)] = 2.0 * sandwich(u_aod, s23, u_delay).real
    blocks[(1, 3)] = np.conj(sandwich(u_aod, s23, u_gain))
    blocks[(2, 3)] = np.conj(1.0 / s2 * _tt(d.dc, d.ramps)
                             * _tt(d.b, d.b) * _tt(d.a, d.a))

    omega = np.zeros((4 * n_paths, 4 * n_paths), dtype=complex)
    for (bi, bj), blk in blocks.items():
        if not np.all(np.isfinite(blk)):
            raise NumericalError(f"non-finite entries in information block "
                                 f"({_GROUPS[bi]}, {_GROUPS[bj]})")
        ri = slice(bi * n_paths, (bi + 1) * n_paths)
        rj = slice(bj * n_paths, (bj + 1) * n_paths)
        omega[ri, rj] = blk
        if bi != bj:
            omega[rj, ri] = np.asarray(blk).conj().T
    herm_gap = np.linalg.norm(omega - omega.conj().T)
    if herm_gap > 1e-10 * max(np.linalg.norm(omega), 1e-300):
        raise NumericalError("assembled information matrix is not hermitian")
    omega = 0.5 * (omega + omega.conj().T)
    return Fim(omega=omega, n_paths=n_paths)


@dataclass(frozen=True)
class CrbBounds:
    """Per-path lower bounds on the estimator error variances.

    ``condition`` reports the condition number of the information matrix
    after symmetric diagonal equilibration (units on angles, delays and
    gains differ by many orders of magnitude, so the raw condition number
    says nothing about invertibility).
    """

    aoa: np.ndarray
    aod: np.ndarray
    delay: np.ndarray
    gain: np.ndarray
    condition: float

    def summed(self) -> dict:
        return {"aoa": float(self.aoa.sum()), "aod": float(self.aod.sum()),
                "delay": float(self.delay.sum()), "gain": float(self.gain.sum())}


def _null_space_hint(equilibrated: np.ndarray) -> str:
    # Name the parameter whose direction dominates the near-null space, so
    # degenerate geometries (an endfire path, duplicated delays) are
    # recognizable from the error message alone.
    if np.iscomplexobj(equilibrated):
        _, vectors = np.linalg.eigh(equilibrated)
    else:
        _, vectors = np.linalg.eigh(equilibrated.astype(float))
    worst = int(np.argmax(np.abs(vectors[:, 0])))
    size = equilibrated.shape[0]
    n_groups = 4 if size % 4 == 0 else 5
    n_paths = size // n_groups
    names = _GROUPS if n_groups == 4 else _GROUPS[:3] + ("gain_re", "gain_im")
    group, path = divmod(worst, n_paths)
    return f"near-null direction dominated by {names[group]} of path {path}"


def _checked_inverse_diagonal(matrix: np.ndarray, n_groups: int):
    diag_in = np.diagonal(matrix).real
    if diag_in.min() <= 0 or not np.all(np.isfinite(diag_in)):
        raise NumericalError("information matrix diagonal must be positive "
                             "and finite")
    # Equilibration hides a parameter whose information has collapsed
    # (endfire cos ~ 1e-17 squares to ~1e-33 on the diagonal), so compare
    # entries against their own unit group before scaling.
    groups = diag_in.reshape(n_groups, -1)
    weak = groups.min(axis=1) < 1e-30 * groups.max(axis=1)
    if np.any(weak):
        names = _GROUPS if n_groups == 4 else _GROUPS[:3] + ("gain_re",
                                                             "gain_im")
        bad = names[int(np.argmax(weak))]
        raise NumericalError(f"information about {bad} of one path is "
                             f"numerically zero (degenerate geometry such "
                             f"as an endfire angle); bounds are unbounded")
    scale = np.sqrt(diag_in)
    equilibrated = matrix / np.outer(scale, scale)
    cond = float(np.linalg.cond(equilibrated))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError(f"equilibrated information matrix condition "
                             f"{cond:.3e} exceeds {MAX_CONDITION:.1e}; "
                             f"bounds would be garbage "
                             f"({_null_space_hint(equilibrated)})")
    eye = np.eye(matrix.shape[0], dtype=equilibrated.dtype)
    diag = np.diagonal(np.linalg.solve(equilibrated, eye)) / scale ** 2
    if np.iscomplexobj(diag):
        residue = np.abs(diag.imag) / np.maximum(np.abs(diag.real), 1e-300)
        if residue.max() > _IMAG_RTOL:
            raise NumericalError("inverse diagonal has a non-negligible "
                                 "imaginary part")
        diag = diag.real
    if diag.min() < 0:
        raise NumericalError("inverse diagonal has negative entries")
    return np.asarray(diag, dtype=float), cond


def crb(f: Fim) -> CrbBounds:
    """Bounds from the complex-gain information matrix."""
    n_paths = f.n_paths
    diag, cond = _checked_inverse_diagonal(f.omega, 4)
    parts = diag.reshape(4, n_paths)
    return CrbBounds(aoa=parts[0], aod=parts[1], delay=parts[2],
                     gain=parts[3], condition=cond)


def _sampled_cross(inputs: FimInputs):
    # All ten upper-triangle sampled cross-covariance blocks, un-doubled and
    # un-conjugated; used by the real-split assembly.
    d = derivative_factors(inputs)
    s2 = inputs.sigma2
    fams = ((d.da, d.b, d.c), (d.a, d.db, d.c), (d.a, d.b, d.dc),
            (d.a, d.b, d.ramps))
    out = {}
    for i in range(4):
        for j in range(i, 4):
            xa, xb, xc = fams[i]
            ya, yb, yc = fams[j]
            out[(i, j)] = (_tt(xa, ya) * _tt(xb, yb) * _tt(xc, yc)) / s2
    return out


def fim_real_split(inputs: FimInputs) -> np.ndarray:
    """Real information matrix over [aoa, aod, delay, Re gain, Im gain].

    Shape (5L, 5L).  Agrees with :func:`fim` on the real parameter groups
    and resolves the gain block into real and imaginary parts instead of the
    complex-gain convention.
    """
    n_paths = inputs.paths.n_paths
    c = _sampled_cross(inputs)
    j = np.zeros((5 * n_paths, 5 * n_paths))

    def put(bi, bj, blk):
        j[bi * n_paths:(bi + 1) * n_paths,
          bj * n_paths:(bj + 1) * n_paths] = blk

    for bi in range(3):
        for bj in range(bi, 3):
            blk = 2.0 * c[(bi, bj)].real
            put(bi, bj, blk)
            if bi != bj:
                put(bj, bi, blk.T)
        re_blk = 2.0 * c[(bi, 3)].real
        im_blk = 2.0 * c[(bi, 3)].imag
        put(bi, 3, re_blk)
        put(3, bi, re_blk.T)
        put(bi, 4, im_blk)
        put(4, bi, im_blk.T)
    gg = c[(3, 3)]
    put(3, 3, 2.0 * gg.real)
    put(4, 4, 2.0 * gg.real)
    put(3, 4, 2.0 * gg.imag)
    put(4, 3, -2.0 * gg.imag)
    gap = np.linalg.norm(j - j.T)
    if gap > 1e-10 * max(np.linalg.norm(j), 1e-300):
        raise NumericalError("real-split information matrix is not symmetric")
    return 0.5 * (j + j.T)


def crb_real_split(j: np.ndarray, n_paths: int) -> CrbBounds:
    """Bounds from the real-split matrix; the gain bound sums the real and
    imaginary part variances."""
    if j.shape != (5 * n_paths, 5 * n_paths):
        raise ValueError(f"expected shape {(5 * n_paths,) * 2}, got {j.shape}")
    diag, cond = _checked_inverse_diagonal(j, 5)
    return CrbBounds(
        aoa=diag[0:n_paths],
        aod=diag[n_paths:2 * n_paths],
        delay=diag[2 * n_paths:3 * n_paths],
        gain=diag[3 * n_paths:4 * n_paths] + diag[4 * n_paths:5 * n_paths],
        condition=cond,
    )


def _clean_tensor(paths: PathParams, snd: Sounding, cfg: SystemConfig):
    return cp_reconstruct(received_factors(paths, snd, cfg)).ravel()


def _replace_path(paths: PathParams, field: str, index: int, value):
    arrays = {"aoa": paths.aoa.copy(), "aod": paths.aod.copy(),
              "delay": paths.delay.copy(), "gain": paths.gain.copy()}
    arrays[field][index] = value
    return PathParams(**arrays)


def mc_fim_oracle(inputs: FimInputs, trials: int, rng: np.random.Generator,
                  fd_step: float = 1e-6) -> np.ndarray:
    """Monte Carlo estimate of the information matrix from sampled scores.

    Scores are central finite differences of the Gaussian log-likelihood at
    the true parameters; the gain scores combine real and imaginary steps
    under the same convention as the closed form.  Steps are scaled per
    group: ``fd_step`` radians for angles, ``fd_step`` ambiguity periods for
    delays, ``fd_step`` relative for gains.  Completely independent of the
    closed-form assembly.
    """
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials for a usable estimate, "
                         f"got {trials}")
    paths, snd, cfg = inputs.paths, inputs.snd, inputs.cfg
    s2 = inputs.sigma2
    n_paths = paths.n_paths
    base = _clean_tensor(paths, snd, cfg)
    n = base.size

    def displacement(field, index, value):
        shifted = _replace_path(paths, field, index, value)
        return _clean_tensor(shifted, snd, cfg) - base

    # Per score column: (d_plus - d_minus, ||d_plus||^2 - ||d_minus||^2, h).
    columns = []
    steps = {"aoa": fd_step, "aod": fd_step,
             "delay": fd_step * cfg.tau_ambiguity}
    for field in ("aoa", "aod", "delay"):
        h = steps[field]
        vals = getattr(paths, field)
        for l in range(n_paths):
            dp = displacement(field, l, vals[l] + h)
            dm = displacement(field, l, vals[l] - h)
            columns.append((dp, dm, h))
    gain_steps = fd_step * np.abs(paths.gain)
    for l in range(n_paths):
        h = gain_steps[l]
        g = paths.gain[l]
        columns.append((displacement("gain", l, g + h),
                        displacement("gain", l, g - h), h))
        columns.append((displacement("gain", l, g + 1j * h),
                        displacement("gain", l, g - 1j * h), h))

    w = np.sqrt(s2 / 2.0) * (rng.standard_normal((trials, n))
                             + 1j * rng.standard_normal((trials, n)))
    raw = np.empty((trials, len(columns)))
    for idx, (dp, dm, h) in enumerate(columns):
        diff = dp - dm
        const = float(np.vdot(dp, dp).real - np.vdot(dm, dm).real)
        corr = (w @ diff.conj()).real
        raw[:, idx] = -(const - 2.0 * corr) / (s2 * 2.0 * h)

    scores = np.empty((trials, 4 * n_paths), dtype=complex)
    scores[:, :3 * n_paths] = raw[:, :3 * n_paths]
    for l in range(n_paths):
        sx = raw[:, 3 * n_paths + 2 * l]
        sy = raw[:, 3 * n_paths + 2 * l + 1]
        scores[:, 3 * n_paths + l] = 0.5 * (sx - 1j * sy)
    return (scores.conj().T @ scores) / trials
