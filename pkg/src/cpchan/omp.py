"""Greedy sparse recovery baseline on a gridded path dictionary.

The received tensor is vectorized and matched against a separable
dictionary indexed by (arrival sine, departure sine, delay).  The dictionary
is never materialized: each atom is a Kronecker product of a delay ramp, a
projected departure steering column and a projected arrival steering column,
so the correlation sweep factors into three small products per iteration and
memory stays bounded regardless of grid size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import PathParams, SystemConfig, delay_signature, steering_from_sin
from .exceptions import ConfigError
from .training import Sounding

__all__ = ["DictionaryGrid", "OmpResult", "dictionary_column", "omp",
           "omp_channel_estimate"]

# Working-set budget for the correlation sweep, in correlation values held at
# once.  Chosen so a 160x320x640 grid sweeps in a handful of chunks.
_SWEEP_BUDGET = 8_000_000
_RIDGE_SCALE = 1e-10


@dataclass(frozen=True)
class DictionaryGrid:
    """Uniform search grids on arrival sine, departure sine and delay."""

    aoa_sin: np.ndarray
    aod_sin: np.ndarray
    delay: np.ndarray

    def __post_init__(self):
        for name in ("aoa_sin", "aod_sin", "delay"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise ConfigError(f"{name} grid must be a non-empty vector")
            object.__setattr__(self, name, arr)
        if np.any(np.abs(self.aoa_sin) > 1) or np.any(np.abs(self.aod_sin) > 1):
            raise ConfigError("sine grids must stay within [-1, 1]")
        if np.any(self.delay < 0):
            raise ConfigError("delay grid must be non-negative")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.aoa_sin.size, self.aod_sin.size, self.delay.size)

    @property
    def size(self) -> int:
        n1, n2, n3 = self.shape
        return n1 * n2 * n3

    @classmethod
    def uniform(cls, n_aoa: int, n_aod: int, n_delay: int,
                tau_max: float) -> "DictionaryGrid":
        if min(n_aoa, n_aod, n_delay) < 1:
            raise ConfigError("grid sizes must be positive")
        if tau_max <= 0:
            raise ConfigError(f"tau_max must be positive, got {tau_max!r}")
        return cls(
            aoa_sin=-1.0 + 2.0 * np.arange(n_aoa) / n_aoa,
            aod_sin=-1.0 + 2.0 * np.arange(n_aod) / n_aod,
            delay=np.linspace(0.0, tau_max, n_delay),
        )


@dataclass(frozen=True)
class OmpResult:
    """Support and coefficients selected by the greedy sweep."""

    support: np.ndarray        # (n_sel, 3) int grid indices
    coeffs: np.ndarray         # (n_sel,) complex
    residual_norms: np.ndarray  # (n_sel + 1,) starting at ||y||
    gram_flagged: bool

    @property
    def n_selected(self) -> int:
        return self.support.shape[0]


def _projected_families(grid: DictionaryGrid, snd: Sounding,
                        cfg: SystemConfig):
    # Columns of the three atom families after the sounding projections,
    # plus their per-column norms.
    fam_a = snd.q.T @ steering_from_sin(grid.aoa_sin, cfg.n_ms, cfg.spacing)
    fam_b = snd.p.T @ steering_from_sin(grid.aod_sin, cfg.n_bs, cfg.spacing)
    fam_g = delay_signature(grid.delay, cfg)
    norm_a = np.linalg.norm(fam_a, axis=0)
    norm_b = np.linalg.norm(fam_b, axis=0)
    norm_g = np.linalg.norm(fam_g, axis=0)
    return fam_a, fam_b, fam_g, norm_a, norm_b, norm_g


def dictionary_column(grid: DictionaryGrid, index: tuple[int, int, int],
                      snd: Sounding, cfg: SystemConfig) -> np.ndarray:
    """Single vectorized atom for grid cell (aoa, aod, delay).

    The vectorization stacks arrival fastest, then time frame, then
    subcarrier, matching ``ravel(order='F')`` of the received tensor.
    """
    i, j, n = index
    col_a = snd.q.T @ steering_from_sin(float(grid.aoa_sin[i]), cfg.n_ms,
                                        cfg.spacing)
    col_b = snd.p.T @ steering_from_sin(float(grid.aod_sin[j]), cfg.n_bs,
                                        cfg.spacing)
    col_g = delay_signature(float(grid.delay[n]), cfg)
    return np.kron(col_g, np.kron(col_b, col_a))


def _correlate(residual_tensor: np.ndarray, fam_a, fam_b, fam_g,
               norms) -> tuple[int, int, int, float]:
    # Normalized correlation sweep over the whole grid, chunked along the
    # delay axis to respect the working-set budget.
    norm_a, norm_b, norm_g = norms
    n1, n2 = fam_a.shape[1], fam_b.shape[1]
    n3 = fam_g.shape[1]
    chunk = max(1, min(n3, _SWEEP_BUDGET // max(1, n1 * n2)))
    # (n1, t, k): arrival matched first, smallest intermediate.
    t1 = np.tensordot(fam_a.conj(), residual_tensor, axes=(0, 0))
    # (n1, k, n2)
    t2 = np.tensordot(t1, fam_b.conj(), axes=(1, 0)).transpose(0, 2, 1)
    t2 = np.ascontiguousarray(t2.reshape(n1 * n2, -1))
    best_val = -1.0
    best = (0, 0, 0)
    scale_ab = (norm_a[:, None] * norm_b[None, :]).reshape(n1 * n2)
    for start in range(0, n3, chunk):
        stop = min(start + chunk, n3)
        block = np.abs(t2 @ fam_g[:, start:stop].conj())
        block /= scale_ab[:, None]
        block /= norm_g[None, start:stop]
        flat = int(np.argmax(block))
        val = float(block.flat[flat])
        if val > best_val:
            ij, nn = divmod(flat, stop - start)
            i, j = divmod(ij, n2)
            best_val = val
            best = (i, j, start + nn)
    return best[0], best[1], best[2], best_val


def omp(y: np.ndarray, snd: Sounding, cfg: SystemConfig, grid: DictionaryGrid,
        n_atoms: int, residual_tol: float = 1e-6) -> OmpResult:
    """Greedy pursuit of ``n_atoms`` dictionary atoms.

    Each iteration picks the grid cell whose atom correlates best with the
    current residual, refits all selected coefficients by least squares and
    updates the residual.  Stops early once the residual drops below
    ``residual_tol`` relative to the input.  A tiny ridge is added if the
    selected atoms become numerically dependent; this is reported via
    ``gram_flagged``.
    """
    y = np.asarray(y, dtype=complex)
    if y.ndim != 3:
        raise ValueError(f"expected a third-order tensor, got shape {y.shape}")
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be positive, got {n_atoms}")
    if n_atoms > grid.size:
        raise ValueError(f"n_atoms {n_atoms} exceeds grid size {grid.size}")
    y_vec = y.ravel(order="F")
    y_norm = float(np.linalg.norm(y_vec))
    residual_norms = [y_norm]
    if y_norm == 0.0:
        return OmpResult(support=np.zeros((0, 3), dtype=int),
                         coeffs=np.zeros(0, dtype=complex),
                         residual_norms=np.asarray(residual_norms),
                         gram_flagged=False)

    fam_a, fam_b, fam_g, norm_a, norm_b, norm_g = _projected_families(
        grid, snd, cfg)
    norms = (norm_a, norm_b, norm_g)
    residual = y_vec.copy()
    support: list[tuple[int, int, int]] = []
    chosen: set[tuple[int, int, int]] = set()
    atoms = np.zeros((y_vec.size, n_atoms), dtype=complex)
    coeffs = np.zeros(0, dtype=complex)
    gram_flagged = False

    for it in range(n_atoms):
        residual_tensor = residual.reshape(y.shape, order="F")
        i, j, n = _correlate(residual_tensor, fam_a, fam_b, fam_g, norms)[:3]
        if (i, j, n) in chosen:
            # Residual is orthogonal to everything new the sweep can find.
            break
        chosen.add((i, j, n))
        support.append((i, j, n))
        atoms[:, it] = np.kron(fam_g[:, n], np.kron(fam_b[:, j], fam_a[:, i]))
        basis = atoms[:, :it + 1]
        gram = basis.conj().T @ basis
        rhs = basis.conj().T @ y_vec
        try:
            lo = scipy.linalg.cholesky(gram, lower=True)
        except scipy.linalg.LinAlgError:
            gram_flagged = True
            bump = _RIDGE_SCALE * float(np.abs(np.diagonal(gram)).max())
            lo = scipy.linalg.cholesky(
                gram + bump * np.eye(gram.shape[0]), lower=True)
        coeffs = scipy.linalg.cho_solve((lo, True), rhs)
        residual = y_vec - basis @ coeffs
        residual_norms.append(float(np.linalg.norm(residual)))
        if residual_norms[-1] <= residual_tol * y_norm:
            break

    return OmpResult(support=np.asarray(support, dtype=int).reshape(-1, 3),
                     coeffs=np.asarray(coeffs, dtype=complex),
                     residual_norms=np.asarray(residual_norms),
                     gram_flagged=gram_flagged)


def omp_channel_estimate(result: OmpResult, grid: DictionaryGrid,
                         cfg: SystemConfig,
                         subcarriers=None) -> tuple[PathParams, np.ndarray]:
    """Turn a pursuit result into path parameters and channel matrices.

    The selected grid cells become paths with the fitted coefficients as
    gains; the channel follows from the physical model at those parameters.
    """
    from .channel import channel_matrices

    if result.n_selected == 0:
        raise ValueError("pursuit selected no atoms; nothing to reconstruct")
    aoa = np.arcsin(grid.aoa_sin[result.support[:, 0]])
    aod = np.arcsin(grid.aod_sin[result.support[:, 1]])
    delay = grid.delay[result.support[:, 2]]
    paths = PathParams(aoa=aoa, aod=aod, delay=delay, gain=result.coeffs)
    return paths, channel_matrices(paths, cfg, subcarriers)
