"""Influence analysis for off-policy evaluation.

Estimate a target policy's value from logged trajectories, then ask how
much each logged unit (transition or trajectory) moved the estimate. The
per-unit influence is computed in closed form, validated against a
brute-force leave-one-out oracle, and drives a diagnosis: either the
estimate is reliable, or specific units need expert review, or the data
cannot support evaluation at all.
"""

from .data import (
    AnalysisConfig,
    ConstantPolicy,
    Dataset,
    DatasetError,
    EvaluationError,
    EvaluationPolicy,
    FunctionPolicy,
    InfluenceUndefinedError,
    NearestNeighborPolicy,
    StateActionMetric,
    TablePolicy,
    Transition,
    initial_eval_set,
    load_dataset,
    save_dataset,
)
from .diagnostics import Diagnosis, Outcome, collapse_sequences, diagnose
from .importance_sampling import (
    BaselineTables,
    FunctionBaselines,
    LinearModelBaselines,
    MissingBehaviorProbError,
    TrajectoryWeights,
    ValueBaselines,
    ZeroBaselines,
    compute_weights,
    estimate,
    is_influence_report,
    trajectory_influence,
)
from .kernel_fqe import (
    FQEResult,
    NeighborGraph,
    PropagationMatrices,
    build_neighbor_graph,
    compute_propagation,
    kernel_fqe_from_config,
    propagation_rows,
    run_kernel_fqe,
)
from .kernel_influence import (
    cutoff_threshold,
    individual_influence,
    kernel_influence_report,
    total_influence,
)
from .linear_fqe import (
    FeatureMap,
    LinearModel,
    ModelUnidentifiableError,
    PolynomialStateActionFeatures,
    RemovalUnidentifiableError,
    StateActionFeatures,
    TableFeatures,
    fit_linear_fqe,
    leave_one_out_weights,
    linear_influence_report,
    linear_individual_influence,
    linear_total_influence,
)
from .oracle import OracleResult, OracleSweep, brute_force_all, brute_force_influence, estimate_value
from .pipeline import Analysis, analyze, validate
from .report import InfluenceReport

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "Analysis",
    "BaselineTables",
    "ConstantPolicy",
    "Dataset",
    "DatasetError",
    "Diagnosis",
    "EvaluationError",
    "EvaluationPolicy",
    "FeatureMap",
    "FQEResult",
    "FunctionBaselines",
    "FunctionPolicy",
    "InfluenceReport",
    "InfluenceUndefinedError",
    "LinearModel",
    "LinearModelBaselines",
    "MissingBehaviorProbError",
    "ModelUnidentifiableError",
    "NearestNeighborPolicy",
    "NeighborGraph",
    "OracleResult",
    "OracleSweep",
    "Outcome",
    "PolynomialStateActionFeatures",
    "PropagationMatrices",
    "RemovalUnidentifiableError",
    "StateActionFeatures",
    "StateActionMetric",
    "TableFeatures",
    "TablePolicy",
    "TrajectoryWeights",
    "Transition",
    "ValueBaselines",
    "ZeroBaselines",
    "analyze",
    "brute_force_all",
    "brute_force_influence",
    "build_neighbor_graph",
    "collapse_sequences",
    "compute_propagation",
    "compute_weights",
    "cutoff_threshold",
    "diagnose",
    "estimate",
    "estimate_value",
    "fit_linear_fqe",
    "individual_influence",
    "initial_eval_set",
    "is_influence_report",
    "kernel_fqe_from_config",
    "kernel_influence_report",
    "leave_one_out_weights",
    "linear_individual_influence",
    "linear_influence_report",
    "linear_total_influence",
    "load_dataset",
    "propagation_rows",
    "run_kernel_fqe",
    "save_dataset",
    "total_influence",
    "trajectory_influence",
    "validate",
]
