"""Samplers, surrogates and tuning loops."""

from .acquisition import expected_improvement
from .bo import OptimizationAborted, TunerBudget, smac_run, vbo_run
from .forest import ForestModel, forest_fit
from .gp import FitFailed, GPModel, gp_fit, gp_predict
from .lhs import lhs_sample
from .llm_loop import llm_tuning_run
from .mapping import NoHistory, workload_mapping_init

__all__ = [
    "FitFailed",
    "ForestModel",
    "GPModel",
    "NoHistory",
    "OptimizationAborted",
    "TunerBudget",
    "expected_improvement",
    "forest_fit",
    "gp_fit",
    "gp_predict",
    "lhs_sample",
    "llm_tuning_run",
    "smac_run",
    "vbo_run",
    "workload_mapping_init",
]
