"""Tensor-decomposition channel estimation workbench.

Synthesizes frequency-selective multi-antenna training data, factorizes the
received third-order tensor by alternating least squares, extracts path
angles, delays and gains from the factors, and compares against a greedy
sparse-recovery baseline and estimation-theoretic lower bounds.  A seeded
Monte-Carlo harness with CSV output drives reproducible sweeps.
"""

from .als import (AlsOptions, AlsReport, als_fixed_rank, als_regularized,
                  default_ridge, estimate_noise_floor, prune_rank, warmup)
from .backend import backend_name, numba_available, set_backend
from .channel import (PathParams, SystemConfig, channel_matrices,
                      channel_matrix, delay_signature, sample_channel,
                      steering_from_sin, steering_vector)
from .crb import (CrbBounds, Fim, FimInputs, crb, crb_real_split,
                  derivative_factors, fim, fim_real_split, mc_fim_oracle,
                  noise_cross_cov)
from .estimation import (CorrelationSearch, EstimateResult, estimate_aoa,
                         estimate_aod, estimate_delay, estimate_pipeline,
                         match_paths, metrics, nmse, resolve_gains)
from .exceptions import CapabilityError, ConfigError, NumericalError
from .experiments import (ExperimentConfig, load_config, run_experiment,
                          run_timing, time_als_sweeps)
from .omp import DictionaryGrid, OmpResult, dictionary_column, omp, \
    omp_channel_estimate
from .tensor_ops import (CPModel, cp_reconstruct, fold, k_rank, khatri_rao,
                         kruskal_ok, relative_fit, unfold)
from .training import (ReceivedData, Sounding, gen_unit_circle, make_sounding,
                       realized_snr, received_factors, synthesize)

__version__ = "0.1.0"

__all__ = [
    "AlsOptions", "AlsReport", "als_fixed_rank", "als_regularized",
    "default_ridge", "estimate_noise_floor", "prune_rank", "warmup",
    "backend_name", "numba_available", "set_backend",
    "PathParams", "SystemConfig", "channel_matrices", "channel_matrix",
    "delay_signature", "sample_channel", "steering_from_sin",
    "steering_vector",
    "CrbBounds", "Fim", "FimInputs", "crb", "crb_real_split",
    "derivative_factors", "fim", "fim_real_split", "mc_fim_oracle",
    "noise_cross_cov",
    "CorrelationSearch", "EstimateResult", "estimate_aoa", "estimate_aod",
    "estimate_delay", "estimate_pipeline", "match_paths", "metrics", "nmse",
    "resolve_gains",
    "CapabilityError", "ConfigError", "NumericalError",
    "ExperimentConfig", "load_config", "run_experiment", "run_timing",
    "time_als_sweeps",
    "DictionaryGrid", "OmpResult", "dictionary_column", "omp",
    "omp_channel_estimate",
    "CPModel", "cp_reconstruct", "fold", "k_rank", "khatri_rao", "kruskal_ok",
    "relative_fit", "unfold",
    "ReceivedData", "Sounding", "gen_unit_circle", "make_sounding",
    "realized_snr", "received_factors", "synthesize",
    "__version__",
]
