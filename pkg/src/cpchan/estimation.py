"""Path parameter extraction from a decomposed training tensor.

Each recovered factor column is matched against the corresponding parametric
family (compressed array response, or delay phase ramp) by maximizing the
normalized correlation magnitude over a coarse grid followed by golden
section refinement.  The per-column scale ambiguities of the decomposition
multiply to one across the three modes, which lets the complex path gains be
recovered by small least squares fits once the angles and delays are known.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .als import (DEFAULT_PRUNE_EPS, AlsOptions, als_fixed_rank,
                  als_regularized, prune_rank)
from .channel import (PathParams, SystemConfig, channel_matrices,
                      delay_signature, steering_from_sin)
from .exceptions import NumericalError
from .tensor_ops import CPModel
from .training import Sounding

__all__ = [
    "CorrelationSearch",
    "EstimateResult",
    "estimate_aoa",
    "estimate_aod",
    "estimate_delay",
    "resolve_gains",
    "estimate_pipeline",
    "match_paths",
    "metrics",
    "nmse",
]

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CorrelationSearch:
    """Grid sizes and refinement tolerances of the correlation searches.

    ``angle_tol`` is the final bracket width in sine-of-angle units,
    ``delay_tol_frac`` in fractions of the delay ambiguity period.  Columns
    whose best correlation stays under ``low_confidence`` are flagged.
    """

    angle_grid: int = 2048
    delay_grid: int = 4096
    angle_tol: float = 1e-7
    delay_tol_frac: float = 1e-8
    low_confidence: float = 0.1

    def __post_init__(self):
        if self.angle_grid < 8 or self.delay_grid < 8:
            raise ValueError("correlation grids need at least 8 points")
        if not 0 < self.angle_tol < 1 or not 0 < self.delay_tol_frac < 1:
            raise ValueError("refinement tolerances must lie in (0, 1)")


def _golden_max(f, lo, hi, tol):
    # Golden section maximization of a unimodal scalar function on [lo, hi].
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


@lru_cache(maxsize=8)
def _sin_grid(n_points: int):
    return np.linspace(-1.0, 1.0, n_points)

@lru_cache(maxsize=8)
def _steering_grid(n_elements: int, spacing: float, n_points: int):
    return steering_from_sin(_sin_grid(n_points), n_elements, spacing)


@lru_cache(maxsize=8)
def _delay_grid(k_train: int, f_s: float, k_total: int, n_points: int):
    cfg = SystemConfig(k_train=k_train, f_s=f_s, k_total=k_total)
    taus = np.linspace(0.0, cfg.tau_ambiguity, n_points, endpoint=False)
    return taus, delay_signature(taus, cfg)


def _normalize_column(col):
    col = np.asarray(col, dtype=complex).ravel()
    norm = np.linalg.norm(col)
    if norm == 0.0:
        raise ValueError("cannot match an all-zero factor column")
    return col / norm


def _estimate_angle(col, sounding_mat, cfg, search):
    col = _normalize_column(col)
    n_elements = sounding_mat.shape[0]
    compress = sounding_mat.T
    grid = _steering_grid(n_elements, cfg.spacing, search.angle_grid)
    u_grid = _sin_grid(search.angle_grid)
    responses = compress @ grid
    num = np.abs(col.conj() @ responses)
    den = np.linalg.norm(responses, axis=0)
    obj_grid = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    best = int(np.argmax(obj_grid))
    step = u_grid[1] - u_grid[0]
    # At half-wavelength spacing the response has period 2 in u, so a peak
    # near one endfire edge continues at the other; the bracket may then
    # cross the edge and the maximizer is wrapped back into [-1, 1].
    wrap = abs(1.0 / cfg.spacing - 2.0) < 1e-12
    if wrap:
        lo = u_grid[best] - step
        hi = u_grid[best] + step
    else:
        lo = max(-1.0, u_grid[best] - step)
        hi = min(1.0, u_grid[best] + step)

    def objective(u):
        if wrap:
            u = (u + 1.0) % 2.0 - 1.0
        resp = compress @ steering_from_sin(u, n_elements, cfg.spacing)
        den1 = np.linalg.norm(resp)
        if den1 == 0.0:
            return 0.0
        return abs(np.vdot(col, resp)) / den1

    u_hat = _golden_max(objective, lo, hi, search.angle_tol)
    if wrap:
        u_hat = (u_hat + 1.0) % 2.0 - 1.0
    peak = min(objective(u_hat), 1.0)
    return float(np.arcsin(np.clip(u_hat, -1.0, 1.0))), float(peak)


def estimate_aoa(col, snd: Sounding, cfg: SystemConfig,
                 search: CorrelationSearch = CorrelationSearch()):
    """Angle of arrival behind one receive-side factor column.

    Returns ``(angle_rad, peak)`` with the angle in [-pi/2, pi/2] and the
    peak normalized correlation in [0, 1].
    """
    return _estimate_angle(col, snd.q, cfg, search)


def estimate_aod(col, snd: Sounding, cfg: SystemConfig,
                 search: CorrelationSearch = CorrelationSearch()):
    """Angle of departure behind one transmit-side factor column."""
    return _estimate_angle(col, snd.p, cfg, search)


def estimate_delay(col, cfg: SystemConfig,
                   search: CorrelationSearch = CorrelationSearch()):
    """Path delay behind one subcarrier-mode factor column.

    The delay is identifiable only within one ambiguity period; the estimate
    is canonicalized into [0, tau_ambiguity), with values within a relative
    1e-6 of the period wrapped to exactly zero.
    """
    col = _normalize_column(col)
    if len(col) != cfg.k_train:
        raise ValueError(f"column length {len(col)} does not match "
                         f"k_train={cfg.k_train}")
    taus, ramps = _delay_grid(cfg.k_train, cfg.f_s, cfg.k_total,
                              search.delay_grid)
    sqrt_k = np.sqrt(cfg.k_train)
    obj_grid = np.abs(col.conj() @ ramps) / sqrt_k
    best = int(np.argmax(obj_grid))
    step = taus[1] - taus[0]

    def objective(tau):
        return abs(np.vdot(col, delay_signature(tau, cfg))) / sqrt_k

    # The objective is periodic, so the bracket may cross either domain edge.
    tau_hat = _golden_max(objective, taus[best] - step, taus[best] + step,
                          search.delay_tol_frac * cfg.tau_ambiguity)
    peak = min(objective(tau_hat), 1.0)
    tau_hat = tau_hat % cfg.tau_ambiguity
    if cfg.tau_ambiguity - tau_hat < 1e-6 * cfg.tau_ambiguity:
        tau_hat = 0.0
    return float(tau_hat), float(peak)


def resolve_gains(model: CPModel, aoa, aod, delay, snd: Sounding,
                  cfg: SystemConfig):
    """Recover complex path gains given estimated angles and delays.

    Fits the per-column scale of the first two modes against the parametric
    responses, closes the three-mode scale product to one, and projects the
    rescaled third-mode columns onto the delay ramps.  Returns ``(gains,
    scales)`` where ``scales`` has shape (3, L) holding the fitted per-mode
    scale factors.
    """
    a_hat, b_hat, c_hat = model.factors
    n_paths = model.rank
    gains = np.zeros(n_paths, dtype=complex)
    scales = np.zeros((3, n_paths), dtype=complex)
    for l in range(n_paths):
        ra = snd.q.T @ steering_from_sin(np.sin(aoa[l]), cfg.n_ms, cfg.spacing)
        rb = snd.p.T @ steering_from_sin(np.sin(aod[l]), cfg.n_bs, cfg.spacing)
        lam1 = np.vdot(ra, a_hat[:, l]) / np.vdot(ra, ra).real
        lam2 = np.vdot(rb, b_hat[:, l]) / np.vdot(rb, rb).real
        denom = lam1 * lam2
        if abs(denom) < 1e-12:
            raise NumericalError(
                f"path {l} is degenerate: the fitted mode scales have "
                f"product {abs(denom):.3e}, so the gain cannot be resolved")
        lam3 = 1.0 / denom
        ramp = delay_signature(delay[l], cfg)
        gains[l] = np.vdot(ramp, c_hat[:, l] / lam3) / np.vdot(ramp, ramp).real
        scales[:, l] = (lam1, lam2, lam3)
    return gains, scales


@dataclass
class EstimateResult:
    """Full output of the decomposition-based estimator."""

    paths: PathParams
    h_hat: np.ndarray
    peaks: np.ndarray
    low_confidence: np.ndarray
    model: CPModel
    report: object


def estimate_pipeline(y: np.ndarray, snd: Sounding, cfg: SystemConfig,
                      rng: np.random.Generator, n_paths: int | None = None,
                      over_paths: int | None = None,
                      als_opts: AlsOptions | None = None,
                      search: CorrelationSearch = CorrelationSearch(),
                      mu: float | None = None,
                      prune_eps: float = DEFAULT_PRUNE_EPS,
                      subcarriers: np.ndarray | None = None,
                      ) -> EstimateResult:
    """Estimate the channel from one noisy training tensor.

    Exactly one of ``n_paths`` (known path count) and ``over_paths``
    (overestimate, decompose with regularization, prune) must be given.
    ``mu`` and ``prune_eps`` only apply to the overestimated branch.
    ``y`` may be the observation tensor itself or a
    :class:`~cpchan.training.ReceivedData` carrying one.
    """
    y = getattr(y, "y", y)
    if (n_paths is None) == (over_paths is None):
        raise ValueError("specify exactly one of n_paths and over_paths")
    if n_paths is not None:
        model, report = als_fixed_rank(y, n_paths, rng, als_opts)
    else:
        model, report = als_regularized(y, over_paths, rng, als_opts, mu=mu)
        model = prune_rank(model, eps_rank=prune_eps)
    rank = model.rank
    aoa = np.zeros(rank)
    aod = np.zeros(rank)
    delay = np.zeros(rank)
    peaks = np.zeros((rank, 3))
    for l in range(rank):
        aoa[l], peaks[l, 0] = estimate_aoa(model.factors[0][:, l], snd, cfg, search)
        aod[l], peaks[l, 1] = estimate_aod(model.factors[1][:, l], snd, cfg, search)
        delay[l], peaks[l, 2] = estimate_delay(model.factors[2][:, l], cfg, search)
    gains, _ = resolve_gains(model, aoa, aod, delay, snd, cfg)
    paths = PathParams(aoa=aoa, aod=aod, delay=delay, gain=gains)
    h_hat = channel_matrices(paths, cfg, subcarriers=subcarriers)
    low_conf = peaks.min(axis=1) < search.low_confidence
    return EstimateResult(paths=paths, h_hat=h_hat, peaks=peaks,
                          low_confidence=low_conf, model=model, report=report)


# Pairs left over when the two path sets have different sizes are charged
# this cost, above the largest cost a genuine pair can reach.
_PAD_COST = 10.0


def _pair_cost(truth: PathParams, est: PathParams, cfg: SystemConfig):
    du = np.abs(np.subtract.outer(np.sin(truth.aoa), np.sin(est.aoa)))
    dv = np.abs(np.subtract.outer(np.sin(truth.aod), np.sin(est.aod)))
    dt = np.abs(np.subtract.outer(truth.delay, est.delay)) / cfg.tau_ambiguity
    return du + dv + dt


def match_paths(truth: PathParams, est: PathParams, cfg: SystemConfig):
    """Assign estimated paths to true paths at minimum total cost.

    The pairwise cost sums sine-of-angle distances on both ends and the
    delay distance in ambiguity periods.  Returns ``(pairs, total_cost)``
    where ``pairs`` maps true-path indices to estimate indices; with unequal
    counts the surplus stays unmatched.
    """
    cost = _pair_cost(truth, est, cfg)
    nt, ne = cost.shape
    size = max(nt, ne)
    padded = np.full((size, size), _PAD_COST)
    padded[:nt, :ne] = cost
    rows, cols = linear_sum_assignment(padded)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if r < nt and c < ne]
    total = float(sum(cost[r, c] for r, c in pairs))
    return pairs, total


def nmse(h_true: np.ndarray, h_hat: np.ndarray) -> float:
    """Normalized channel error: total squared error over total energy of
    the stacked per-subcarrier channel matrices."""
    h_true = np.asarray(h_true)
    h_hat = np.asarray(h_hat)
    ref = float(np.vdot(h_true, h_true).real)
    if ref == 0.0:
        raise ValueError("nmse is undefined for a zero reference channel")
    diff = h_true - h_hat
    return float(np.vdot(diff, diff).real) / ref


def metrics(truth: PathParams, est: PathParams, h_true: np.ndarray,
            h_hat: np.ndarray, cfg: SystemConfig) -> dict:
    """Matched per-parameter squared errors plus the channel NMSE.

    Angle errors are measured between sine values, delays in seconds, gains
    as complex magnitudes; each ``mse_*`` entry sums the squared errors over
    the matched pairs.
    """
    pairs, _ = match_paths(truth, est, cfg)
    ti = [p[0] for p in pairs]
    ei = [p[1] for p in pairs]
    d_aoa = np.sin(truth.aoa[ti]) - np.sin(est.aoa[ei])
    d_aod = np.sin(truth.aod[ti]) - np.sin(est.aod[ei])
    d_delay = truth.delay[ti] - est.delay[ei]
    d_gain = truth.gain[ti] - est.gain[ei]
    return {
        "mse_aoa": float(np.sum(d_aoa ** 2)),
        "mse_aod": float(np.sum(d_aod ** 2)),
        "mse_delay": float(np.sum(d_delay ** 2)),
        "mse_gain": float(np.sum(np.abs(d_gain) ** 2)),
        "nmse": nmse(h_true, h_hat),
        "n_paths_true": truth.n_paths,
        "n_paths_est": est.n_paths,
        "n_matched": len(pairs),
    }
