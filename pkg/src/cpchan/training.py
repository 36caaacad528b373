"""Downlink training: sounding matrices and the received training tensor.

During training the transmitter sends one pilot per (time frame, subcarrier)
through a random precoding column while the receiver applies random combining
columns across sub-frames.  Collecting the combined observations over
sub-frames, frames, and training subcarriers yields a third-order tensor
whose factor matrices carry the compressed array responses on each end and
the gain-weighted delay ramps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PathParams, SystemConfig, delay_signature, steering_vector
from .tensor_ops import cp_reconstruct

__all__ = [
    "Sounding",
    "ReceivedData",
    "gen_unit_circle",
    "make_sounding",
    "received_factors",
    "synthesize",
    "realized_snr",
]


def gen_unit_circle(rng: np.random.Generator, rows: int, cols: int,
                    scale: float) -> np.ndarray:
    """Matrix with entries ``scale * exp(j*phase)``, phase uniform on [-pi, pi)."""
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
    if not np.isfinite(scale) or scale <= 0:
        raise ValueError(f"scale must be positive and finite, got {scale!r}")
    phase = rng.uniform(-np.pi, np.pi, size=(rows, cols))
    return scale * np.exp(1j * phase)


@dataclass(frozen=True)
class Sounding:
    """Training matrices: ``q`` combines at the receiver (n_ms x M sub-frames),
    ``p`` precodes at the transmitter (n_bs x T frames).  Entries have constant
    modulus 1/n_ms and 1/n_bs respectively."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=complex)
        p = np.asarray(self.p, dtype=complex)
        if q.ndim != 2 or p.ndim != 2:
            raise ValueError("sounding matrices must be two-dimensional")
        for name, mat in (("q", q), ("p", p)):
            expected = 1.0 / mat.shape[0]
            if not np.allclose(np.abs(mat), expected, rtol=1e-6, atol=0):
                raise ValueError(f"sounding matrix {name} must have constant "
                                 f"modulus {expected:.3e}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def m_subframes(self) -> int:
        return self.q.shape[1]

    @property
    def t_frames(self) -> int:
        return self.p.shape[1]


def make_sounding(rng: np.random.Generator, cfg: SystemConfig,
                  m_subframes: int, t_frames: int) -> Sounding:
    """Draw fresh constant-modulus sounding matrices for one training run."""
    q = gen_unit_circle(rng, cfg.n_ms, m_subframes, 1.0 / cfg.n_ms)
    p = gen_unit_circle(rng, cfg.n_bs, t_frames, 1.0 / cfg.n_bs)
    return Sounding(q=q, p=p)


def received_factors(paths: PathParams, snd: Sounding, cfg: SystemConfig):
    """Factor matrices of the noiseless received tensor.

    Returns ``(a, b, c)`` with shapes (M, L), (T, L), (k_train, L): the
    combined receive responses, the precoded transmit responses, and the
    gain-weighted delay ramps.
    """
    a = snd.q.T @ steering_vector(paths.aoa, cfg.n_ms, cfg.spacing)
    b = snd.p.T @ steering_vector(paths.aod, cfg.n_bs, cfg.spacing)
    c = delay_signature(paths.delay, cfg) * paths.gain
    return a, b, c


@dataclass(frozen=True)
class ReceivedData:
    """One training observation: noisy tensor ``y`` of shape (M, T, k_train),
    its noiseless part, and the per-entry noise variance used."""

    y: np.ndarray
    y_clean: np.ndarray
    sigma2: float


def synthesize(rng: np.random.Generator, paths: PathParams, snd: Sounding,
               cfg: SystemConfig, snr_db: float) -> ReceivedData:
    """Simulate one training run at the requested SNR.

    The noise variance is calibrated per realization so that the ratio of
    signal energy to expected noise energy equals ``snr_db``; pass
    ``float("inf")`` to disable noise.
    """
    a, b, c = received_factors(paths, snd, cfg)
    y_clean = cp_reconstruct((a, b, c))
    energy = float(np.vdot(y_clean, y_clean).real)
    if not np.isfinite(energy) or energy == 0.0:
        raise ValueError("received signal is degenerate (zero or non-finite energy)")
    if np.isinf(snr_db):
        return ReceivedData(y=y_clean, y_clean=y_clean, sigma2=0.0)
    sigma2 = energy / (y_clean.size * 10.0 ** (snr_db / 10.0))
    w = np.sqrt(sigma2 / 2.0) * (rng.standard_normal(y_clean.shape)
                                 + 1j * rng.standard_normal(y_clean.shape))
    return ReceivedData(y=y_clean + w, y_clean=y_clean, sigma2=sigma2)


def realized_snr(y: np.ndarray, y_clean: np.ndarray) -> float:
    """Measured SNR in dB of a noisy observation against its clean part."""
    y = np.asarray(y)
    y_clean = np.asarray(y_clean)
    signal = float(np.vdot(y_clean, y_clean).real)
    noise = float(np.vdot(y - y_clean, y - y_clean).real)
    if signal == 0.0:
        raise ValueError("realized SNR is undefined for a zero clean signal")
    if noise == 0.0:
        return float("inf")
    return 10.0 * np.log10(signal / noise)
