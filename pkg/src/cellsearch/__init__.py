"""Cell-based differentiable architecture search with per-layer stable-rank
probing, an adaptive per-layer learning-rate optimizer, discretization and
evaluation, and sweep orchestration."""

from .adas import AdasState, adas_init, adas_update
from .bilevel import SearchState, alpha_step, make_search_state, search_epoch, weight_step
from .complexity import ComplexityReport, count_macs, count_params
from .config import RunConfig, config_hash, parse_config
from .evaluation import (EvalConfig, build_eval_network, evaluate_metrics,
                         resolution_sweep, train_eval)
from .genotype import Genotype, discretize, parse, render, serialize, skip_fraction
from .ops import ALL_OPS, OpKind, candidate_op_output, make_op
from .probing import (LayerProbeSeries, estimate_rank, probe_network, stable_rank,
                      unfold_conv_weight)
from .searchspace import (ArchitectureParams, CellSpec, MixedEdge, SupernetSpec,
                          Supernet, assemble_supernet, init_alpha)
from .sweep import orchestrate_sweep, run_evaluation, run_search

__all__ = [
    "AdasState", "adas_init", "adas_update",
    "SearchState", "alpha_step", "make_search_state", "search_epoch", "weight_step",
    "ComplexityReport", "count_macs", "count_params",
    "RunConfig", "config_hash", "parse_config",
    "EvalConfig", "build_eval_network", "evaluate_metrics", "resolution_sweep",
    "train_eval",
    "Genotype", "discretize", "parse", "render", "serialize", "skip_fraction",
    "ALL_OPS", "OpKind", "candidate_op_output", "make_op",
    "LayerProbeSeries", "estimate_rank", "probe_network", "stable_rank",
    "unfold_conv_weight",
    "ArchitectureParams", "CellSpec", "MixedEdge", "SupernetSpec", "Supernet",
    "assemble_supernet", "init_alpha",
    "orchestrate_sweep", "run_evaluation", "run_search",
]
