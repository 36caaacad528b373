"""Seeded Monte-Carlo sweeps with deterministic CSV output.

A JSON config picks one sweep variable (training SNR, subcarrier count,
sub-frame count or time-frame count), the fixed values of everything else,
the methods to run and the trial count.  Every trial draws its own random
stream from ``[seed, point_index, trial]``, so results are independent of
execution order and a fixed (config, seed) pair reproduces the output files
byte for byte.  Failures inside a trial are recorded in the row's status
column and the run continues.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .als import DEFAULT_PRUNE_EPS, AlsOptions
from .channel import SystemConfig, channel_matrices, sample_channel
from .crb import FimInputs, crb, fim
from .estimation import CorrelationSearch, estimate_pipeline, metrics
from .exceptions import ConfigError
from .omp import DictionaryGrid, omp, omp_channel_estimate
from .training import make_sounding, realized_snr, synthesize

__all__ = [
    "THREADS_ENV_VAR", "RESULT_COLUMNS", "SUMMARY_COLUMNS", "TIMING_COLUMNS",
    "BENCH_COLUMNS", "OmpSettings", "AlsSettings", "TimingSettings",
    "ExperimentConfig", "load_config", "run_experiment", "run_timing",
    "time_als_sweeps", "backend_bench", "write_csv", "summary_path",
]

THREADS_ENV_VAR = "CPCHAN_THREADS"

RESULT_COLUMNS = [
    "sweep_var", "sweep_value", "trial", "method", "status",
    "mse_aoa", "mse_aod", "mse_delay", "mse_gain", "nmse",
    "crb_aoa", "crb_aod", "crb_delay", "crb_gain",
    "realized_snr_db", "wall_time_s", "seed",
]
_MEAN_COLUMNS = RESULT_COLUMNS[5:16]
SUMMARY_COLUMNS = (["sweep_var", "sweep_value", "method", "n_trials", "n_ok"]
                   + _MEAN_COLUMNS)
TIMING_COLUMNS = ["task", "label", "trials", "mean_s", "std_s", "min_s",
                  "max_s", "per_iteration_s"]
BENCH_COLUMNS = ["label", "backend", "reps", "sweeps", "per_sweep_s",
                 "speedup"]

_SWEEP_VARIABLES = ("snr_db", "k_train", "m_subframes", "t_frames")
_METHOD_NAMES = ("cp", "omp", "crb")
# Timing contract: at least this many repetitions per timed task.
_MIN_TIMING_TRIALS = 20


class _Section:
    """Dict wrapper that rejects unknown keys once parsing finishes."""

    def __init__(self, name: str, data):
        if not isinstance(data, dict):
            raise ConfigError(f"'{name}' must be a JSON object, "
                              f"got {type(data).__name__}")
        self._name = name
        self._data = data
        self._seen: set[str] = set()

    def get(self, key, default=None):
        self._seen.add(key)
        return self._data.get(key, default)

    def finish(self):
        extra = sorted(set(self._data) - self._seen)
        if extra:
            raise ConfigError(f"unknown keys in '{self._name}': "
                              f"{', '.join(extra)}")


def _as_int(name, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{name}' must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{name}' must be >= {minimum}, got {value}")
    return value


def _as_float(name, value, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"'{name}' must be a number, got {value!r}")
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"'{name}' is not a number: {value!r}") from None
    if math.isnan(out):
        raise ConfigError(f"'{name}' must not be NaN")
    if positive and out <= 0:
        raise ConfigError(f"'{name}' must be positive, got {out}")
    return out


@dataclasses.dataclass(frozen=True)
class OmpSettings:
    """Grids and stopping rule for the greedy baseline."""

    grids: tuple[tuple[int, int, int], ...] = ((64, 128, 256),)
    n_atoms: int | None = None
    residual_tol: float = 1e-6

    @classmethod
    def from_dict(cls, data) -> "OmpSettings":
        sec = _Section("omp", data)
        raw_grids = sec.get("grids", [[64, 128, 256]])
        if not isinstance(raw_grids, list) or not raw_grids:
            raise ConfigError("'omp.grids' must be a non-empty list")
        grids = []
        for g in raw_grids:
            if not isinstance(g, list) or len(g) != 3:
                raise ConfigError(f"each omp grid must be [n_aoa, n_aod, "
                                  f"n_delay], got {g!r}")
            grids.append(tuple(_as_int("omp.grids[]", v, minimum=1)
                               for v in g))
        n_atoms = sec.get("n_atoms")
        if n_atoms is not None:
            n_atoms = _as_int("omp.n_atoms", n_atoms, minimum=1)
        tol = _as_float("omp.residual_tol", sec.get("residual_tol", 1e-6))
        sec.finish()
        return cls(grids=tuple(grids), n_atoms=n_atoms, residual_tol=tol)


@dataclasses.dataclass(frozen=True)
class AlsSettings:
    """Decomposition knobs; ``over_paths`` switches to the overestimated
    regularized branch."""

    max_iters: int = 1000
    rel_fit_tol: float = 1e-8
    restarts: int = 5
    fit_stop: float = 1e-10
    over_paths: int | None = None
    mu: float | None = None
    prune_eps: float = DEFAULT_PRUNE_EPS

    @classmethod
    def from_dict(cls, data) -> "AlsSettings":
        sec = _Section("als", data)
        max_iters = _as_int("als.max_iters", sec.get("max_iters", 1000),
                             minimum=1)
        rel_fit_tol = _as_float("als.rel_fit_tol",
                                sec.get("rel_fit_tol", 1e-8), positive=True)
        restarts = _as_int("als.restarts", sec.get("restarts", 5), minimum=1)
        fit_stop = _as_float("als.fit_stop", sec.get("fit_stop", 1e-10))
        over_paths = sec.get("over_paths")
        if over_paths is not None:
            over_paths = _as_int("als.over_paths", over_paths, minimum=1)
        mu = sec.get("mu")
        if mu is not None:
            mu = _as_float("als.mu", mu)
        prune_eps = _as_float("als.prune_eps",
                              sec.get("prune_eps", DEFAULT_PRUNE_EPS),
                              positive=True)
        sec.finish()
        return cls(max_iters=max_iters, rel_fit_tol=rel_fit_tol,
                   restarts=restarts, fit_stop=fit_stop,
                   over_paths=over_paths, mu=mu, prune_eps=prune_eps)

    def options(self) -> AlsOptions:
        return AlsOptions(max_iters=self.max_iters,
                          rel_fit_tol=self.rel_fit_tol,
                          restarts=self.restarts, fit_stop=self.fit_stop)


@dataclasses.dataclass(frozen=True)
class TimingSettings:
    """Extra knobs consumed only by :func:`run_timing`."""

    k_values: tuple[int, ...] = (8, 16, 32, 64)
    sweeps_per_run: int = 10
    reps: int = 5

    @classmethod
    def from_dict(cls, data) -> "TimingSettings":
        sec = _Section("timing", data)
        raw = sec.get("k_values", [8, 16, 32, 64])
        if not isinstance(raw, list) or not raw:
            raise ConfigError("'timing.k_values' must be a non-empty list")
        k_values = tuple(_as_int("timing.k_values[]", v, minimum=1)
                         for v in raw)
        sweeps = _as_int("timing.sweeps_per_run",
                         sec.get("sweeps_per_run", 10), minimum=1)
        reps = _as_int("timing.reps", sec.get("reps", 5), minimum=1)
        sec.finish()
        return cls(k_values=k_values, sweeps_per_run=sweeps, reps=reps)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment description."""

    system: SystemConfig
    n_paths: int
    tau_max: float
    sweep_variable: str
    sweep_values: tuple
    snr_db: float
    m_subframes: int
    t_frames: int
    trials: int
    seed: int
    methods: tuple[str, ...]
    omp: OmpSettings
    als: AlsSettings
    timing: TimingSettings
    out: str | None
    threads: int | None
    deterministic_output: bool

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        sec = _Section("config", data)
        sys_sec = _Section("system", sec.get("system", {}))
        sys_kwargs = {}
        for key in ("n_bs", "n_ms", "k_total", "k_train"):
            val = sys_sec.get(key)
            if val is not None:
                sys_kwargs[key] = _as_int(f"system.{key}", val, minimum=1)
        for key in ("f_s", "f_c", "distance_m", "spacing"):
            val = sys_sec.get(key)
            if val is not None:
                sys_kwargs[key] = _as_float(f"system.{key}", val,
                                            positive=True)
        sys_sec.finish()
        try:
            system = SystemConfig(**sys_kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad system section: {exc}") from exc

        n_paths = _as_int("n_paths", sec.get("n_paths", 4), minimum=1)
        tau_max = _as_float("tau_max", sec.get("tau_max", 100e-9),
                            positive=True)

        sweep_sec = _Section("sweep", sec.get("sweep", {}))
        variable = sweep_sec.get("variable", "snr_db")
        if variable not in _SWEEP_VARIABLES:
            raise ConfigError(f"sweep.variable must be one of "
                              f"{_SWEEP_VARIABLES}, got {variable!r}")
        raw_values = sweep_sec.get("values", [0, 5, 10, 15, 20, 25, 30]
                                   if variable == "snr_db" else None)
        sweep_sec.finish()
        if not isinstance(raw_values, list) or not raw_values:
            raise ConfigError("'sweep.values' must be a non-empty list")
        if variable == "snr_db":
            values = tuple(_as_float("sweep.values[]", v) for v in raw_values)
        else:
            values = tuple(_as_int("sweep.values[]", v, minimum=1)
                           for v in raw_values)
            if variable == "k_train" and max(values) > system.k_total:
                raise ConfigError(f"swept k_train exceeds k_total="
                                  f"{system.k_total}")

        snr_db = _as_float("snr_db", sec.get("snr_db", 20.0))
        m_subframes = _as_int("m_subframes", sec.get("m_subframes", 6),
                              minimum=1)
        t_frames = _as_int("t_frames", sec.get("t_frames", 6), minimum=1)
        trials = _as_int("trials", sec.get("trials", 100), minimum=1)
        seed = _as_int("seed", sec.get("seed", 0), minimum=0)

        raw_methods = sec.get("methods", ["cp", "omp", "crb"])
        if not isinstance(raw_methods, list) or not raw_methods:
            raise ConfigError("'methods' must be a non-empty list")
        methods = []
        for m in raw_methods:
            if m not in _METHOD_NAMES:
                raise ConfigError(f"unknown method {m!r}; valid: "
                                  f"{_METHOD_NAMES}")
            if m not in methods:
                methods.append(m)

        omp_settings = OmpSettings.from_dict(sec.get("omp", {}))
        als_settings = AlsSettings.from_dict(sec.get("als", {}))
        timing_settings = TimingSettings.from_dict(sec.get("timing", {}))
        if als_settings.over_paths is not None \
                and als_settings.over_paths < n_paths:
            raise ConfigError("als.over_paths must be >= n_paths")

        out = sec.get("out")
        if out is not None and not isinstance(out, str):
            raise ConfigError(f"'out' must be a string path, got {out!r}")
        threads = sec.get("threads")
        if threads is not None:
            threads = _as_int("threads", threads, minimum=1)
        deterministic = sec.get("deterministic_output", False)
        if not isinstance(deterministic, bool):
            raise ConfigError("'deterministic_output' must be a boolean")
        sec.finish()

        if tau_max > system.tau_ambiguity:
            raise ConfigError(f"tau_max {tau_max} exceeds the unambiguous "
                              f"delay range {system.tau_ambiguity}")
        return cls(system=system, n_paths=n_paths, tau_max=tau_max,
                   sweep_variable=variable, sweep_values=values,
                   snr_db=snr_db, m_subframes=m_subframes, t_frames=t_frames,
                   trials=trials, seed=seed, methods=tuple(methods),
                   omp=omp_settings, als=als_settings,
                   timing=timing_settings, out=out, threads=threads,
                   deterministic_output=deterministic)

    def resolve_threads(self, override: int | None = None) -> int:
        if override is not None:
            return max(1, override)
        if self.threads is not None:
            return self.threads
        env = os.environ.get(THREADS_ENV_VAR)
        if env is not None:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"{THREADS_ENV_VAR}={env!r} is not an "
                                  f"integer") from None
        return 1


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a JSON config file, applying CLI-style overrides first."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return ExperimentConfig.from_dict(data)


def _point_values(cfg: ExperimentConfig, value):
    # Fixed knobs with the swept one replaced.
    system, snr_db = cfg.system, cfg.snr_db
    m, t = cfg.m_subframes, cfg.t_frames
    if cfg.sweep_variable == "snr_db":
        snr_db = float(value)
    elif cfg.sweep_variable == "k_train":
        system = dataclasses.replace(system, k_train=int(value))
    elif cfg.sweep_variable == "m_subframes":
        m = int(value)
    else:
        t = int(value)
    return system, snr_db, m, t


def _blank_row(cfg: ExperimentConfig, value, trial: int, method: str) -> dict:
    row = {col: "" for col in RESULT_COLUMNS}
    row.update(sweep_var=cfg.sweep_variable, sweep_value=value, trial=trial,
               method=method, status="ok", seed=cfg.seed)
    return row


def _fail(row: dict, exc: Exception) -> dict:
    row["status"] = f"{type(exc).__name__}: {exc}"
    return row


def _run_trial(cfg: ExperimentConfig, point_idx: int, trial: int) -> list[dict]:
    """All requested method rows for one (sweep point, trial) cell."""
    value = cfg.sweep_values[point_idx]
    rng = np.random.default_rng([cfg.seed, point_idx, trial])
    rows = []
    try:
        system, snr_db, m, t = _point_values(cfg, value)
        paths = sample_channel(rng, system, cfg.n_paths, tau_max=cfg.tau_max)
        snd = make_sounding(rng, system, m, t)
        data = synthesize(rng, paths, snd, system, snr_db)
        h_true = channel_matrices(paths, system)
        r_snr = realized_snr(data.y, data.y_clean)
    except Exception as exc:  # noqa: BLE001 - failed trials become rows
        return [_fail(_blank_row(cfg, value, trial, method), exc)
                for method in cfg.methods]

    crb_sums = None
    crb_time = None
    crb_error = None
    if "crb" in cfg.methods:
        start = time.perf_counter()
        try:
            bounds = crb(fim(FimInputs(paths=paths, snd=snd, cfg=system,
                                       sigma2=data.sigma2)))
            crb_sums = bounds.summed()
            # The mse_* columns measure angle errors on sin values, so the
            # angle bounds are mapped to the same domain (delta method at
            # the true angles) before they are summed next to them.
            crb_sums["aoa"] = float(
                (np.cos(paths.aoa) ** 2 * bounds.aoa).sum())
            crb_sums["aod"] = float(
                (np.cos(paths.aod) ** 2 * bounds.aod).sum())
        except Exception as exc:  # noqa: BLE001
            crb_error = exc
        crb_time = time.perf_counter() - start

    def attach_crb(row):
        if crb_sums is not None:
            row.update(crb_aoa=crb_sums["aoa"], crb_aod=crb_sums["aod"],
                       crb_delay=crb_sums["delay"], crb_gain=crb_sums["gain"])

    def finish_row(row, est_paths, h_hat, elapsed):
        met = metrics(paths, est_paths, h_true, h_hat, system)
        row.update(mse_aoa=met["mse_aoa"], mse_aod=met["mse_aod"],
                   mse_delay=met["mse_delay"], mse_gain=met["mse_gain"],
                   nmse=met["nmse"])
        attach_crb(row)
        row["wall_time_s"] = elapsed

    for method in cfg.methods:
        if method == "crb":
            row = _blank_row(cfg, value, trial, method)
            row["realized_snr_db"] = r_snr
            if crb_error is not None:
                _fail(row, crb_error)
            else:
                attach_crb(row)
            row["wall_time_s"] = crb_time
            rows.append(row)
        elif method == "cp":
            row = _blank_row(cfg, value, trial, method)
            row["realized_snr_db"] = r_snr
            start = time.perf_counter()
            try:
                if cfg.als.over_paths is None:
                    est = estimate_pipeline(
                        data.y, snd, system, rng, n_paths=cfg.n_paths,
                        als_opts=cfg.als.options())
                else:
                    est = estimate_pipeline(
                        data.y, snd, system, rng,
                        over_paths=cfg.als.over_paths,
                        als_opts=cfg.als.options(), mu=cfg.als.mu,
                        prune_eps=cfg.als.prune_eps)
                finish_row(row, est.paths, est.h_hat,
                           time.perf_counter() - start)
            except Exception as exc:  # noqa: BLE001
                row["wall_time_s"] = time.perf_counter() - start
                _fail(row, exc)
            rows.append(row)
        else:
            n_atoms = cfg.omp.n_atoms or cfg.n_paths
            for n1, n2, n3 in cfg.omp.grids:
                row = _blank_row(cfg, value, trial, method)
                if len(cfg.omp.grids) > 1:
                    row["method"] = f"omp_{n1}x{n2}x{n3}"
                row["realized_snr_db"] = r_snr
                start = time.perf_counter()
                try:
                    grid = DictionaryGrid.uniform(n1, n2, n3, cfg.tau_max)
                    res = omp(data.y, snd, system, grid, n_atoms,
                              cfg.omp.residual_tol)
                    est_paths, h_hat = omp_channel_estimate(res, grid, system)
                    finish_row(row, est_paths, h_hat,
                               time.perf_counter() - start)
                except Exception as exc:  # noqa: BLE001
                    row["wall_time_s"] = time.perf_counter() - start
                    _fail(row, exc)
                rows.append(row)
    return rows


def _format_cell(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path: str, columns: list[str], rows: list[dict]) -> None:
    """Write rows with a fixed column order, LF line endings, 17 significant
    digits for reals."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(col, "")) for col in columns])


def summary_path(out: str) -> str:
    base = out[:-4] if out.endswith(".csv") else out
    return base + ".summary.csv"


def _summarize(cfg: ExperimentConfig, rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["sweep_value"], row["method"]), []).append(row)
    summary = []
    for value in cfg.sweep_values:
        methods = []
        for row in rows:
            if row["sweep_value"] == value and row["method"] not in methods:
                methods.append(row["method"])
        for method in methods:
            bunch = groups[(value, method)]
            ok = [r for r in bunch if r["status"] == "ok"]
            out = {"sweep_var": cfg.sweep_variable, "sweep_value": value,
                   "method": method, "n_trials": len(bunch), "n_ok": len(ok)}
            for col in _MEAN_COLUMNS:
                vals = [r[col] for r in ok
                        if r[col] != "" and r[col] is not None]
                out[col] = (sum(float(v) for v in vals) / len(vals)
                            if vals else "")
            summary.append(out)
    return summary


def _zero_wall_time(rows: list[dict]) -> None:
    for row in rows:
        if row.get("wall_time_s", "") != "":
            row["wall_time_s"] = 0.0


def run_experiment(cfg: ExperimentConfig, threads: int | None = None,
                   quiet: bool = True) -> tuple[list[dict], list[dict]]:
    """Run the configured sweep; returns (rows, summary_rows).

    When ``cfg.out`` is set the rows go to that CSV and the per-point means
    to a companion ``<out>.summary.csv``.  With ``threads > 1`` trials fan
    out over a process pool; rows are gathered and ordered by (sweep point,
    trial) so scheduling cannot affect the output.
    """
    n_threads = cfg.resolve_threads(threads)
    tasks = [(point_idx, trial)
             for point_idx in range(len(cfg.sweep_values))
             for trial in range(cfg.trials)]
    if n_threads <= 1:
        results = [_run_trial(cfg, p, t) for p, t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_threads) as pool:
            chunk = max(1, len(tasks) // (4 * n_threads))
            results = list(pool.map(_run_trial_star,
                                    [(cfg, p, t) for p, t in tasks],
                                    chunksize=chunk))
    rows = [row for batch in results for row in batch]
    if cfg.deterministic_output:
        _zero_wall_time(rows)
    summary = _summarize(cfg, rows)
    if not quiet:
        for s in summary:
            print(f"{s['sweep_var']}={s['sweep_value']} method={s['method']} "
                  f"ok={s['n_ok']}/{s['n_trials']} nmse={s['nmse']}",
                  file=sys.stderr)
    if cfg.out is not None:
        write_csv(cfg.out, RESULT_COLUMNS, rows)
        write_csv(summary_path(cfg.out), SUMMARY_COLUMNS, summary)
    return rows, summary


def _run_trial_star(args):
    return _run_trial(*args)


def time_als_sweeps(y: np.ndarray, rank: int, sweeps: int,
                    rng: np.random.Generator) -> float:
    """Wall time of exactly ``sweeps`` decomposition sweeps on ``y``.

    Early-convergence checks are disabled so the sweep count is exact.
    Factors are freshly drawn from ``rng``; callers should warm the backend
    up first so compilation stays out of the measurement.
    """
    from . import backend
    from ._als_kernels import als_run_loops, als_run_numpy
    from .als import _random_factors

    y = np.ascontiguousarray(np.asarray(y, dtype=complex))
    a, b, c = _random_factors(rng, y.shape, rank)
    start = time.perf_counter()
    if backend.backend_name() == "numba":
        als_run_loops(y, a, b, c, 0.0, sweeps, -1.0, 0.0, True)
    else:
        als_run_numpy(y, a, b, c, 0.0, sweeps, -1.0, 0.0, True)
    return time.perf_counter() - start


def _stats_row(task: str, label: str, times: list[float],
               per_iteration) -> dict:
    arr = np.asarray(times)
    return {"task": task, "label": label, "trials": len(times),
            "mean_s": float(arr.mean()), "std_s": float(arr.std()),
            "min_s": float(arr.min()), "max_s": float(arr.max()),
            "per_iteration_s": per_iteration}


def run_timing(cfg: ExperimentConfig, quiet: bool = True) -> list[dict]:
    """Wall-time benchmarks: the full decomposition pipeline, the greedy
    baseline per grid, and the per-sweep decomposition cost across
    subcarrier counts.

    Every task repeats at least 20 times (or ``cfg.trials`` if larger); the
    per-sweep task reports ``min_s / sweeps`` as its per-iteration cost.
    Run-to-run times are machine load dependent, so nothing here is
    deterministic except the row structure.
    """
    from .als import warmup

    warmup()
    trials = max(cfg.trials, _MIN_TIMING_TRIALS)
    rows = []

    def log(msg):
        if not quiet:
            print(msg, file=sys.stderr)

    def dataset(system, index):
        rng = np.random.default_rng([cfg.seed, 977, index])
        paths = sample_channel(rng, system, cfg.n_paths, tau_max=cfg.tau_max)
        snd = make_sounding(rng, system, cfg.m_subframes, cfg.t_frames)
        data = synthesize(rng, paths, snd, system, cfg.snr_db)
        return rng, snd, data

    if "cp" in cfg.methods:
        times = []
        for i in range(trials):
            rng, snd, data = dataset(cfg.system, i)
            start = time.perf_counter()
            estimate_pipeline(data.y, snd, cfg.system, rng,
                              n_paths=cfg.n_paths, als_opts=cfg.als.options())
            times.append(time.perf_counter() - start)
        rows.append(_stats_row("cp_pipeline",
                               f"M{cfg.m_subframes}T{cfg.t_frames}"
                               f"K{cfg.system.k_train}", times, ""))
        log(f"cp_pipeline: {rows[-1]['mean_s']:.4f} s")

    if "omp" in cfg.methods:
        n_atoms = cfg.omp.n_atoms or cfg.n_paths
        for n1, n2, n3 in cfg.omp.grids:
            grid = DictionaryGrid.uniform(n1, n2, n3, cfg.tau_max)
            times = []
            for i in range(trials):
                _, snd, data = dataset(cfg.system, i)
                start = time.perf_counter()
                omp(data.y, snd, cfg.system, grid, n_atoms,
                    cfg.omp.residual_tol)
                times.append(time.perf_counter() - start)
            rows.append(_stats_row("omp", f"grid{n1}x{n2}x{n3}", times, ""))
            log(f"omp {n1}x{n2}x{n3}: {rows[-1]['mean_s']:.4f} s")

    sweeps = cfg.timing.sweeps_per_run
    for k in cfg.timing.k_values:
        system = dataclasses.replace(cfg.system, k_train=k,
                                     k_total=max(cfg.system.k_total, k))
        times = []
        for rep in range(cfg.timing.reps):
            rng, snd, data = dataset(system, 10_000 + rep)
            times.append(time_als_sweeps(data.y, cfg.n_paths, sweeps, rng))
        size = (cfg.m_subframes * cfg.t_frames * k)
        rows.append(_stats_row("als_sweep", f"MTK{size}", times,
                               min(times) / sweeps))
        log(f"als_sweep K={k}: {rows[-1]['per_iteration_s']:.6f} s/sweep")

    if cfg.out is not None:
        write_csv(cfg.out, TIMING_COLUMNS, rows)
    return rows


def backend_bench(k_values=(8, 16, 32, 64), sweeps: int = 10, reps: int = 5,
                  seed: int = 0, m_subframes: int = 6, t_frames: int = 6,
                  n_paths: int = 4, quiet: bool = True) -> list[dict]:
    """Per-sweep decomposition cost of every compute backend, side by side.

    Each tensor size is drawn once and handed to all backends with identical
    starting factors, so rows differ only in the implementation being timed.
    ``speedup`` is relative to the plain numpy fallback at the same size; the
    fallback row itself reads 1.  Restores the previously active backend on
    exit.
    """
    from . import backend
    from .als import warmup

    if not k_values:
        raise ConfigError("k_values must be a non-empty list")
    if sweeps < 1 or reps < 1:
        raise ConfigError("sweeps and reps must be >= 1")
    names = ["numpy"]
    if backend.numba_available():
        names.append("numba")
    previous = backend.backend_name()
    rows = []
    try:
        for k in k_values:
            k = _as_int("k_values entry", k, minimum=1)
            system = SystemConfig(k_train=k, k_total=max(128, k))
            rng = np.random.default_rng([seed, 1311, k])
            paths = sample_channel(rng, system, n_paths)
            snd = make_sounding(rng, system, m_subframes, t_frames)
            data = synthesize(rng, paths, snd, system, 20.0)
            size = m_subframes * t_frames * k
            per_sweep = {}
            for name in names:
                backend.set_backend(name)
                warmup()
                times = [time_als_sweeps(data.y, n_paths, sweeps,
                                         np.random.default_rng([seed, 1312,
                                                                k, rep]))
                         for rep in range(reps)]
                per_sweep[name] = min(times) / sweeps
            for name in names:
                rows.append({"label": f"MTK{size}", "backend": name,
                             "reps": reps, "sweeps": sweeps,
                             "per_sweep_s": per_sweep[name],
                             "speedup": per_sweep["numpy"] / per_sweep[name]})
                if not quiet:
                    print(f"MTK{size} {name}: "
                          f"{per_sweep[name]:.6f} s/sweep", file=sys.stderr)
    finally:
        backend.set_backend(previous)
    return rows
