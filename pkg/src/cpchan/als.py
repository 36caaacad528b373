"""Rank-constrained tensor decomposition by alternating least squares.

Two entry points cover the two ways the path count can be known:

* :func:`als_fixed_rank` decomposes at a known rank without regularization;
* :func:`als_regularized` decomposes at an overestimated rank with a ridge
  term on every normal-equation solve, after which :func:`prune_rank` drops
  the components whose energy collapsed.

Both restart from several random initializations and keep the best fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from ._als_kernels import als_run_loops, als_run_numpy
from .exceptions import NumericalError
from .tensor_ops import CPModel, unfold

__all__ = [
    "AlsOptions",
    "AlsReport",
    "als_fixed_rank",
    "als_regularized",
    "prune_rank",
    "estimate_noise_floor",
    "default_ridge",
    "warmup",
]

# Components whose energy falls below this fraction of the strongest one are
# dropped by prune_rank.
DEFAULT_PRUNE_EPS = 1e-2


@dataclass(frozen=True)
class AlsOptions:
    """Iteration controls shared by both decomposition entry points.

    ``rel_fit_tol`` stops a run once the relative fit improves by less than
    that fraction of its previous value between sweeps; ``fit_stop`` both
    ends a run early on an essentially exact fit and short-circuits the
    remaining restarts.

    ``init`` selects the starting point: ``"random"`` draws fresh complex
    Gaussian factors for every restart; ``"given"`` starts the first run from
    ``init_factors`` (a tuple of three arrays, one per mode) and any further
    restarts from random draws.
    """

    max_iters: int = 1000
    rel_fit_tol: float = 1e-8
    restarts: int = 5
    fit_stop: float = 1e-10
    init: str = "random"
    init_factors: tuple | None = None
    normalize_columns: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.rel_fit_tol > 0:
            raise ValueError(f"rel_fit_tol must be > 0, got {self.rel_fit_tol}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.fit_stop < 0:
            raise ValueError(f"fit_stop must be >= 0, got {self.fit_stop}")
        if self.init not in ("random", "given"):
            raise ValueError(f"init must be 'random' or 'given', "
                             f"got {self.init!r}")
        if (self.init == "given") != (self.init_factors is not None):
            raise ValueError("init='given' requires init_factors and "
                             "vice versa")
        if self.init_factors is not None and len(self.init_factors) != 3:
            raise ValueError("init_factors must hold three factor matrices")


@dataclass
class AlsReport:
    """Outcome of a decomposition: best-restart fit trace and diagnostics."""

    fit: float
    sweeps: int
    converged: bool
    ridge_used: bool
    restart_fits: list[float] = field(default_factory=list)
    fit_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    mu: float = 0.0
    backend: str = ""


def _validate_input(y: np.ndarray, rank: int) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=np.complex128)
    if y.ndim != 3:
        raise ValueError(f"expected a third-order tensor, got ndim={y.ndim}")
    if rank < 1:
        raise ValueError(f"rank must be positive, got {rank}")
    if not np.all(np.isfinite(y.view(np.float64))):
        raise ValueError("tensor contains non-finite entries")
    if not np.any(y):
        raise ValueError("cannot decompose an all-zero tensor")
    return y


def _random_factors(rng: np.random.Generator, dims, rank: int):
    scale = np.sqrt(0.5)
    return [scale * (rng.standard_normal((d, rank))
                     + 1j * rng.standard_normal((d, rank)))
            for d in dims]


def _run_single(y, a, b, c, mu, opts: AlsOptions):
    if backend.backend_name() == "numba":
        fits, converged, ridge, fatal = als_run_loops(
            y, a, b, c, mu, opts.max_iters, opts.rel_fit_tol, opts.fit_stop,
            opts.normalize_columns)
    else:
        a, b, c, fits, converged, ridge, fatal = als_run_numpy(
            y, a, b, c, mu, opts.max_iters, opts.rel_fit_tol, opts.fit_stop,
            opts.normalize_columns)
    if fatal:
        raise NumericalError("normal equations stayed singular despite ridge "
                             "fallback; the tensor or rank is degenerate")
    return (a, b, c), fits, converged, ridge


def _given_factors(opts: AlsOptions, dims, rank: int):
    out = []
    for mode, (f, d) in enumerate(zip(opts.init_factors, dims)):
        f = np.ascontiguousarray(f, dtype=np.complex128)
        if f.shape != (d, rank):
            raise ValueError(f"init_factors[{mode}] has shape {f.shape}, "
                             f"expected {(d, rank)}")
        out.append(f.copy())
    return out


def _decompose(y, rank, rng, mu, opts):
    y = _validate_input(y, rank)
    opts = opts or AlsOptions()
    energy = float(np.sum(np.abs(y) ** 2))
    best = None
    best_key = np.inf
    restart_fits = []
    for start in range(opts.restarts):
        if start == 0 and opts.init == "given":
            a0, b0, c0 = _given_factors(opts, y.shape, rank)
        else:
            a0, b0, c0 = _random_factors(rng, y.shape, rank)
        factors, fits, converged, ridge = _run_single(y, a0, b0, c0, mu, opts)
        final = float(fits[-1]) if len(fits) else np.inf
        restart_fits.append(final)
        # With a ridge active, restarts are ranked by the penalized
        # objective the sweeps actually minimize; raw fit alone would
        # prefer solutions that keep surplus components alive.
        key = final
        if mu > 0.0 and np.isfinite(final):
            penalty = sum(float(np.sum(np.abs(f) ** 2)) for f in factors)
            key = final * final * energy + mu * penalty
        if best is None or key < best_key:
            best = (factors, fits, converged, ridge)
            best_key = key
        if final <= opts.fit_stop:
            break
    factors, fits, converged, ridge = best
    report = AlsReport(
        fit=min(restart_fits),
        sweeps=int(len(fits)),
        converged=bool(converged),
        ridge_used=bool(ridge),
        restart_fits=restart_fits,
        fit_history=fits,
        mu=float(mu),
        backend=backend.backend_name(),
    )
    return CPModel(factors=tuple(factors)), report


def als_fixed_rank(y: np.ndarray, rank: int, rng: np.random.Generator,
                   opts: AlsOptions | None = None):
    """Decompose ``y`` at exactly ``rank`` components, no regularization.

    Returns ``(model, report)``.  Every factor update solves the exact least
    squares subproblem, so the relative fit is non-increasing across sweeps
    up to roundoff.
    """
    return _decompose(y, rank, rng, 0.0, opts)


def estimate_noise_floor(y: np.ndarray) -> float:
    """Per-entry noise standard deviation estimated from the smallest
    singular value of the mode-3 unfolding."""
    y = np.ascontiguousarray(y, dtype=np.complex128)
    mat = unfold(y, 3)
    s = np.linalg.svd(mat, compute_uv=False)
    return float(s[-1]) / np.sqrt(mat.shape[1])


def default_ridge(y: np.ndarray) -> float:
    """Default ridge weight for :func:`als_regularized`:
    ``1e-2 * noise_floor * sqrt(tensor size)``."""
    return 1e-2 * estimate_noise_floor(y) * np.sqrt(float(np.asarray(y).size))


def als_regularized(y: np.ndarray, rank_over: int, rng: np.random.Generator,
                    opts: AlsOptions | None = None, mu: float | None = None):
    """Decompose at an overestimated rank with ridge-regularized updates.

    ``mu`` defaults to :func:`default_ridge`.  Surplus components decay
    toward zero energy and can be removed with :func:`prune_rank`.  Note the
    per-sweep column renormalization re-balances factor scales, so only the
    residual series, not the penalized objective, is reported.
    """
    if mu is None:
        mu = default_ridge(y)
    if mu < 0 or not np.isfinite(mu):
        raise ValueError(f"mu must be finite and >= 0, got {mu!r}")
    return _decompose(y, rank_over, rng, float(mu), opts)


def prune_rank(model: CPModel, eps_rank: float = DEFAULT_PRUNE_EPS) -> CPModel:
    """Drop components whose energy falls below ``eps_rank`` times the
    strongest component's energy.

    Component energy is the product of its three factor column norms.  The
    strongest component always survives.
    """
    if not 0 < eps_rank < 1:
        raise ValueError(f"eps_rank must lie in (0, 1), got {eps_rank!r}")
    a, b, c = model.factors
    energy = (np.linalg.norm(a, axis=0) * np.linalg.norm(b, axis=0)
              * np.linalg.norm(c, axis=0))
    top = energy.max()
    if top == 0.0:
        raise NumericalError("all components have zero energy; nothing to keep")
    keep = energy > eps_rank * top
    return CPModel(factors=(a[:, keep], b[:, keep], c[:, keep]))


def warmup() -> None:
    """Trigger jit compilation of the hot kernels on a tiny problem so that
    later timing measurements exclude compilation."""
    rng = np.random.default_rng(0)
    y = (rng.standard_normal((2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2)))
    als_fixed_rank(y, 1, rng, AlsOptions(max_iters=3, restarts=1))
