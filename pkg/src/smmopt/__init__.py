"""Stochastic majorization-minimization for composite and non-convex problems.

Solvers keep a weighted aggregate of quadratic upper bounds on the sampled
losses and minimize it in closed form each step; batch baselines, a
group-sparse dictionary learner, and a rate-checking harness round out the
toolkit.
"""

from .config import ConfigError, build_solver_config, load_effective_config
from .data_io import (Dataset, MetricsRow, epoch_stream,
                      generate_synthetic_logreg, parse_libsvm, read_metrics,
                      serialize_libsvm, substream_rng, write_metrics)
from .dictlearn import (DictConfig, DictRunRecord, build_tile_groups, encode,
                        encode_batch, encoding_loss, dict_grad, dict_lipschitz,
                        dict_step, extract_patches, generate_synthetic_patches,
                        read_patches, read_pgm, run_dict, whiten_patches,
                        write_patches)
from .harness import (BoundCheck, Problem, assumption_e_report, check_cor32,
                      check_prop31, check_prop33, check_stability,
                      fit_loglog_slope, surrogate_property_suite)
from .losses import (LOSS_KINDS, ProblemConstants, Sample, SparseVec,
                     batch_objective, lipschitz_constant, value_grad)
from .prox import (ElasticNet, GroupLinf, L1, Ridge, WeightedL1, penalty_value,
                   project_l1_ball, prox, soft_threshold)
from .schedule import (AveragingState, ConstantFiniteHorizon, SqrtDecay,
                       StronglyConvex, TunedSqrt, tune_n0, update_averages,
                       weight)
from .solvers import (NumericalFailure, RunRecord, SolverConfig,
                      StabilityViolation, dc_objective, fista_reference, run,
                      run_batch_dc, run_fista, run_fobos, run_online_dc,
                      run_rda, run_smm)
from .surrogate import (AggregateSurrogate, SurrogateKind, dc_reweight,
                        envelope_curvature, init_aggregate, log_penalty_value,
                        minimize_aggregate, surrogate_value, target_value,
                        update_aggregate)

__version__ = "0.1.0"

__all__ = [
    "AggregateSurrogate", "AveragingState", "BoundCheck", "ConfigError",
    "ConstantFiniteHorizon", "Dataset", "DictConfig", "DictRunRecord",
    "ElasticNet", "GroupLinf", "L1", "LOSS_KINDS", "MetricsRow",
    "NumericalFailure", "Problem", "ProblemConstants", "Ridge", "RunRecord",
    "Sample", "SolverConfig", "SparseVec", "SqrtDecay", "StabilityViolation",
    "StronglyConvex", "SurrogateKind", "TunedSqrt", "WeightedL1",
    "assumption_e_report", "batch_objective", "build_solver_config",
    "build_tile_groups", "check_cor32", "check_prop31", "check_prop33",
    "check_stability", "dc_objective", "dc_reweight", "dict_grad",
    "dict_lipschitz", "dict_step", "encode", "encode_batch", "encoding_loss",
    "envelope_curvature", "epoch_stream", "extract_patches", "fista_reference",
    "fit_loglog_slope", "generate_synthetic_logreg",
    "generate_synthetic_patches", "init_aggregate", "lipschitz_constant",
    "load_effective_config", "log_penalty_value", "minimize_aggregate",
    "parse_libsvm", "penalty_value", "project_l1_ball", "prox",
    "read_metrics", "read_patches", "read_pgm", "run", "run_batch_dc",
    "run_dict", "run_fista", "run_fobos", "run_online_dc", "run_rda",
    "run_smm", "serialize_libsvm", "soft_threshold", "substream_rng",
    "surrogate_property_suite", "surrogate_value", "target_value", "tune_n0",
    "update_aggregate", "update_averages", "value_grad", "weight",
    "whiten_patches", "write_metrics", "write_patches",
]
