"""Fast built-in invariant checks, runnable from the command line.

Each check is a seeded, self-contained assertion over one module's core
contract.  The suite is a smoke screen for broken installs, not a substitute
for the test suite; everything here finishes in a few seconds.
"""

from __future__ import annotations

import sys
import tempfile
import traceback
from pathlib import Path

import numpy as np

__all__ = ["run_selftest", "CHECKS"]


def _check_tensor_algebra():
    from .tensor_ops import cp_reconstruct, fold, khatri_rao, unfold

    rng = np.random.default_rng(11)
    y = rng.standard_normal((4, 5, 3)) + 1j * rng.standard_normal((4, 5, 3))
    for mode in (1, 2, 3):
        assert np.array_equal(fold(unfold(y, mode), mode, y.shape), y)
    a, b, c = (rng.standard_normal((d, 3)) + 1j * rng.standard_normal((d, 3))
               for d in y.shape)
    x = cp_reconstruct((a, b, c))
    idents = (unfold(x, 1) - a @ khatri_rao(c, b).T,
              unfold(x, 2) - b @ khatri_rao(c, a).T,
              unfold(x, 3) - c @ khatri_rao(b, a).T)
    for gap in idents:
        assert np.linalg.norm(gap) < 1e-12 * np.linalg.norm(x)


def _check_khatri_rao_oracle():
    from .tensor_ops import khatri_rao

    rng = np.random.default_rng(12)
    x = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    y = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    out = khatri_rao(x, y)
    for r in range(3):
        assert np.allclose(out[:, r], np.kron(x[:, r], y[:, r]), atol=1e-14)


def _check_steering_and_delay():
    from .channel import SystemConfig, delay_signature, steering_from_sin

    assert np.allclose(steering_from_sin(0.0, 5), np.ones(5))
    assert np.allclose(steering_from_sin(1.0, 4), [1, -1, 1, -1])
    cfg = SystemConfig(k_train=4)
    assert np.allclose(delay_signature(0.0, cfg), np.ones(4))
    half = cfg.k_total / (2 * cfg.f_s)
    assert np.allclose(delay_signature(half, cfg), [-1, 1, -1, 1])


def _check_decomposition_exact():
    from .als import AlsOptions, als_fixed_rank
    from .tensor_ops import cp_reconstruct, relative_fit

    rng = np.random.default_rng(13)
    factors = [np.sqrt(0.5) * (rng.standard_normal((d, 2))
                               + 1j * rng.standard_normal((d, 2)))
               for d in (5, 6, 4)]
    y = cp_reconstruct(factors)
    model, report = als_fixed_rank(y, 2, rng,
                                   AlsOptions(max_iters=200, restarts=3))
    assert relative_fit(y, model) < 1e-9, f"fit {report.fit}"


def _check_noise_calibration():
    from .channel import SystemConfig, sample_channel
    from .training import make_sounding, realized_snr, synthesize

    rng = np.random.default_rng(14)
    cfg = SystemConfig(k_train=6)
    snrs = []
    for _ in range(40):
        paths = sample_channel(rng, cfg, 3)
        snd = make_sounding(rng, cfg, 6, 6)
        data = synthesize(rng, paths, snd, cfg, 10.0)
        snrs.append(realized_snr(data.y, data.y_clean))
    gap = abs(float(np.mean(snrs)) - 10.0)
    assert gap < 0.5, f"mean realized SNR off target by {gap:.3f} dB"


def _check_pipeline_noiseless():
    from .channel import SystemConfig, channel_matrices, sample_channel
    from .estimation import estimate_pipeline, metrics
    from .training import make_sounding, synthesize

    rng = np.random.default_rng(15)
    cfg = SystemConfig(k_train=6)
    paths = sample_channel(rng, cfg, 2)
    snd = make_sounding(rng, cfg, 6, 6)
    data = synthesize(rng, paths, snd, cfg, np.inf)
    est = estimate_pipeline(data.y, snd, cfg, rng, n_paths=2)
    met = metrics(paths, est.paths, channel_matrices(paths, cfg), est.h_hat,
                  cfg)
    assert met["nmse"] < 1e-8, f"noiseless nmse {met['nmse']:.3e}"
    assert met["n_matched"] == 2


def _check_bound_matrix():
    from .channel import SystemConfig, sample_channel
    from .crb import FimInputs, crb, fim
    from .training import make_sounding, synthesize

    rng = np.random.default_rng(16)
    cfg = SystemConfig(k_train=4)
    paths = sample_channel(rng, cfg, 2)
    snd = make_sounding(rng, cfg, 4, 4)
    data = synthesize(rng, paths, snd, cfg, 10.0)
    f = fim(FimInputs(paths=paths, snd=snd, cfg=cfg, sigma2=data.sigma2))
    gap = np.linalg.norm(f.omega - f.omega.conj().T)
    assert gap == 0.0
    eigs = np.linalg.eigvalsh(f.omega)
    assert eigs.min() > -1e-8 * eigs.max(), "information matrix not PSD"
    bounds = crb(f)
    for arr in (bounds.aoa, bounds.aod, bounds.delay, bounds.gain):
        assert np.all(arr > 0)


def _check_greedy_on_grid():
    from .channel import PathParams, SystemConfig
    from .omp import DictionaryGrid, omp
    from .training import make_sounding, synthesize

    rng = np.random.default_rng(17)
    cfg = SystemConfig(k_train=6)
    grid = DictionaryGrid.uniform(16, 16, 16, 100e-9)
    idx = [(2, 11, 5), (9, 4, 12)]
    paths = PathParams(aoa=np.arcsin(grid.aoa_sin[[i for i, _, _ in idx]]),
                       aod=np.arcsin(grid.aod_sin[[j for _, j, _ in idx]]),
                       delay=grid.delay[[n for _, _, n in idx]],
                       gain=np.array([1e-5 + 0j, 2e-5 + 0j]))
    snd = make_sounding(rng, cfg, 6, 6)
    data = synthesize(rng, paths, snd, cfg, np.inf)
    res = omp(data.y, snd, cfg, grid, 2)
    assert sorted(map(tuple, res.support)) == sorted(idx)
    assert res.residual_norms[-1] < 1e-8 * res.residual_norms[0]


def _check_determinism():
    from .experiments import RESULT_COLUMNS, ExperimentConfig, run_experiment, \
        write_csv

    cfg = ExperimentConfig.from_dict({
        "system": {"n_bs": 8, "n_ms": 8, "k_total": 32, "k_train": 4},
        "n_paths": 2, "trials": 2, "seed": 7,
        "sweep": {"variable": "snr_db", "values": [20.0]},
        "methods": ["cp", "crb"], "m_subframes": 4, "t_frames": 4,
        "als": {"restarts": 2, "max_iters": 100},
        "deterministic_output": True,
    })
    rows_a, _ = run_experiment(cfg)
    rows_b, _ = run_experiment(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        pa, pb = Path(tmp, "a.csv"), Path(tmp, "b.csv")
        write_csv(str(pa), RESULT_COLUMNS, rows_a)
        write_csv(str(pb), RESULT_COLUMNS, rows_b)
        assert pa.read_bytes() == pb.read_bytes(), "output is not reproducible"


CHECKS = [
    ("tensor_algebra", _check_tensor_algebra),
    ("khatri_rao_oracle", _check_khatri_rao_oracle),
    ("steering_and_delay", _check_steering_and_delay),
    ("decomposition_exact", _check_decomposition_exact),
    ("noise_calibration", _check_noise_calibration),
    ("pipeline_noiseless", _check_pipeline_noiseless),
    ("bound_matrix", _check_bound_matrix),
    ("greedy_on_grid", _check_greedy_on_grid),
    ("determinism", _check_determinism),
]


def run_selftest(quiet: bool = False) -> bool:
    """Run every check; returns True when all pass."""
    failures = 0
    for name, check in CHECKS:
        try:
            check()
        except Exception:  # noqa: BLE001 - report and keep going
            failures += 1
            print(f"FAIL {name}", file=sys.stderr)
            if not quiet:
                traceback.print_exc()
        else:
            if not quiet:
                print(f"PASS {name}")
    if failures:
        print(f"{failures} of {len(CHECKS)} checks failed", file=sys.stderr)
    elif not quiet:
        print(f"all {len(CHECKS)} checks passed")
    return failures == 0
