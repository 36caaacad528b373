"""Geometric wideband channel model for a mmWave MIMO-OFDM downlink.

A channel realization is a small set of propagation paths, each carrying an
angle of arrival, an angle of departure, a delay, and a complex gain.  Both
ends use half-wavelength uniform linear arrays.  The per-subcarrier channel
matrix combines the path contributions with a linear phase ramp across
subcarriers set by the path delay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

SPEED_OF_LIGHT = 2.99792458e8

# Channel draws are rejected until all pairwise separations hold; see
# sample_channel.  Angle separation is measured between sine values.
MIN_SIN_SEPARATION = 1e-3
MIN_DELAY_SEPARATION_FRAC = 1e-3
_MAX_RESAMPLE_ATTEMPTS = 1000


@dataclass(frozen=True)
class SystemConfig:
    """Static system parameters of the downlink training setup.

    ``k_total`` is the full OFDM subcarrier count; ``k_train`` of them
    (subcarriers 1..k_train) carry training symbols.  ``spacing`` is the
    array element spacing in carrier wavelengths.
    """

    n_bs: int = 64
    n_ms: int = 32
    k_total: int = 128
    k_train: int = 6
    f_s: float = 0.32e9
    f_c: float = 28e9
    distance_m: float = 100.0
    spacing: float = 0.5

    def __post_init__(self):
        for name in ("n_bs", "n_ms", "k_total", "k_train"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.k_train > self.k_total:
            raise ConfigError(
                f"k_train ({self.k_train}) cannot exceed k_total ({self.k_total})")
        for name in ("f_s", "f_c", "distance_m", "spacing"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ConfigError(f"{name} must be positive and finite, got {v!r}")

    @property
    def tau_ambiguity(self) -> float:
        """Delay period beyond which the subcarrier phase ramp repeats."""
        return self.k_total / self.f_s

    @property
    def free_space_loss(self) -> float:
        """Power attenuation of an isotropic link at the configured distance;
        path gains are drawn with variance equal to its inverse."""
        wavelength = SPEED_OF_LIGHT / self.f_c
        return (4.0 * np.pi * self.distance_m / wavelength) ** 2


@dataclass(frozen=True)
class PathParams:
    """Per-path channel parameters; all arrays share length L."""

    aoa: np.ndarray
    aod: np.ndarray
    delay: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "aoa", np.atleast_1d(np.asarray(self.aoa, dtype=float)))
        object.__setattr__(self, "aod", np.atleast_1d(np.asarray(self.aod, dtype=float)))
        object.__setattr__(self, "delay", np.atleast_1d(np.asarray(self.delay, dtype=float)))
        object.__setattr__(self, "gain", np.atleast_1d(np.asarray(self.gain, dtype=complex)))
        n = len(self.aoa)
        if not (len(self.aod) == len(self.delay) == len(self.gain) == n):
            raise ValueError("path parameter arrays must share one length")
        if n == 0:
            raise ValueError("at least one path is required")
        if np.any(self.delay < 0):
            raise ValueError("path delays must be non-negative")

    @property
    def n_paths(self) -> int:
        return len(self.aoa)


def steering_from_sin(sin_angle, n_elements: int, spacing: float = 0.5) -> np.ndarray:
    """Array response for given sine(s) of the angle.

    Returns shape ``(n_elements,)`` for a scalar input and
    ``(n_elements, len(sin_angle))`` for a vector of sines.
    """
    if n_elements < 1:
        raise ValueError(f"n_elements must be positive, got {n_elements}")
    u = np.asarray(sin_angle, dtype=float)
    elements = np.arange(n_elements)
    phase = 2.0 * np.pi * spacing * np.multiply.outer(elements, u)
    return np.exp(1j * phase)


def steering_vector(angle, n_elements: int, spacing: float = 0.5) -> np.ndarray:
    """Array response of a uniform linear array toward ``angle`` (radians)."""
    return steering_from_sin(np.sin(np.asarray(angle, dtype=float)), n_elements, spacing)


def delay_signature(tau, cfg: SystemConfig) -> np.ndarray:
    """Phase ramp across the training subcarriers for path delay ``tau``.

    Entry k (k = 1..k_train) is ``exp(-2j*pi*tau*f_s*k/k_total)``.  Returns
    shape ``(k_train,)`` for scalar ``tau`` and ``(k_train, len(tau))`` for a
    vector of delays.
    """
    t = np.asarray(tau, dtype=float)
    k = np.arange(1, cfg.k_train + 1)
    phase = -2.0 * np.pi * (cfg.f_s / cfg.k_total) * np.multiply.outer(k, t)
    return np.exp(1j * phase)


def channel_matrix(paths: PathParams, cfg: SystemConfig, subcarrier: int) -> np.ndarray:
    """Channel matrix (n_ms x n_bs) seen on one subcarrier (1-based index)."""
    if not 1 <= subcarrier <= cfg.k_total:
        raise ValueError(f"subcarrier must be in 1..{cfg.k_total}, got {subcarrier}")
    a_ms = steering_vector(paths.aoa, cfg.n_ms, cfg.spacing)
    a_bs = steering_vector(paths.aod, cfg.n_bs, cfg.spacing)
    ramp = np.exp(-2j * np.pi * paths.delay * cfg.f_s * subcarrier / cfg.k_total)
    return (a_ms * (paths.gain * ramp)) @ a_bs.T


def channel_matrices(paths: PathParams, cfg: SystemConfig,
                     subcarriers=None) -> np.ndarray:
    """Stack of channel matrices, shape (len(subcarriers), n_ms, n_bs).

    Defaults to the training subcarriers 1..k_train.
    """
    if subcarriers is None:
        subcarriers = range(1, cfg.k_train + 1)
    return np.stack([channel_matrix(paths, cfg, k) for k in subcarriers])


def _min_pairwise_gap(values: np.ndarray) -> float:
    if len(values) < 2:
        return np.inf
    v = np.sort(values)
    return float(np.min(np.diff(v)))


def sample_channel(rng: np.random.Generator, cfg: SystemConfig, n_paths: int,
                   tau_max: float = 100e-9) -> PathParams:
    """Draw a random channel with well-separated paths.

    Angles are uniform on [0, 2*pi), delays uniform on [0, tau_max], and
    gains circular complex Gaussian with variance 1/free_space_loss.  Draws
    are rejected until pairwise sine-of-angle gaps reach at least
    ``MIN_SIN_SEPARATION`` on both ends and delay gaps reach
    ``MIN_DELAY_SEPARATION_FRAC`` of ``tau_max``.
    """
    if n_paths < 1:
        raise ConfigError(f"n_paths must be positive, got {n_paths}")
    if not 0 < tau_max <= cfg.tau_ambiguity:
        raise ConfigError(
            f"tau_max must lie in (0, {cfg.tau_ambiguity:.3e}], got {tau_max!r}")
    min_delay_gap = MIN_DELAY_SEPARATION_FRAC * tau_max
    for _ in range(_MAX_RESAMPLE_ATTEMPTS):
        aoa = rng.uniform(0.0, 2.0 * np.pi, size=n_paths)
        aod = rng.uniform(0.0, 2.0 * np.pi, size=n_paths)
        delay = rng.uniform(0.0, tau_max, size=n_paths)
        if (_min_pairwise_gap(np.sin(aoa)) >= MIN_SIN_SEPARATION
                and _min_pairwise_gap(np.sin(aod)) >= MIN_SIN_SEPARATION
                and _min_pairwise_gap(delay) >= min_delay_gap):
            break
    else:
        raise ConfigError(
            f"could not draw {n_paths} paths satisfying the separation rules; "
            f"reduce n_paths or widen tau_max")
    sigma = np.sqrt(0.5 / cfg.free_space_loss)
    gain = sigma * (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths))
    return PathParams(aoa=aoa, aod=aod, delay=delay, gain=gain)
