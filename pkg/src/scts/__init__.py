"""Synthetically controlled Thompson sampling.

Adaptive single-unit experiments where the counterfactual comes from a
synthetic control built on donor units that share latent factors with the
experimental unit.
"""

from __future__ import annotations

from .bench import (BenchmarkConfig, BenchmarkReport, emit_series, run_benchmark,
                    run_inference_benchmark)
from .errors import ConfigError, DataError, RankError
from .estimation import (EffectEstimate, ScWeights, estimate_diff_in_means, estimate_ridge_final,
                         estimate_sc, estimate_scts, fit_sc_weights, hp_interval_sc)
from .inference import (ConfidenceSet, RerandomizationConfig, TestReport, invert_to_ci,
                        rerandomize_test)
from .latent import LatentEstimate, estimate_factors, procrustes_align, spectral_noise_bound
from .panel import (FactorModelSpec, PanelData, canonicalize_decomposition, generate_instance,
                    ingest_panel_csv, make_semi_synthetic)
from .policies import (ExperimentResult, PolicyState, RegretTrace, run_experiment, scts_step,
                       switchback_step, ucb_step)
from .ridge import BetaSchedule, RidgeFit, beta_t, elliptical_potential_bound, fit_ridge

__version__ = "0.1.0"
