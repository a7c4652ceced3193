"""Brute-force leave-one-out oracle.

The referee for every closed-form influence: remove the unit, rerun the
configured estimator end to end through its public entry points, and
difference the values. Removal means one transition for the fitted Q
estimators and one whole trajectory for the importance sampling family.
Nothing here shares code with the closed forms it checks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .data import AnalysisConfig, Dataset, EvaluationError, EvaluationPolicy
from .importance_sampling import compute_weights, estimate
from .kernel_fqe import build_neighbor_graph, run_kernel_fqe
from .linear_fqe import FeatureMap, fit_linear_fqe

STATUS_OK = "ok"
STATUS_UNDEFINED = "undefined_after_removal"


@dataclass(frozen=True)
class OracleResult:
    unit_id: str
    v_hat_full: float
    v_hat_removed: float | None
    influence: float | None
    status: str

    def to_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "v_hat_full": self.v_hat_full,
            "v_hat_removed": self.v_hat_removed,
            "influence": self.influence,
            "status": self.status,
        }


@dataclass(frozen=True)
class OracleSweep:
    results: tuple[OracleResult, ...]
    truncated: bool

    def influences(self) -> dict[str, float]:
        return {r.unit_id: r.influence for r in self.results if r.status == STATUS_OK}

    def undefined(self) -> set[str]:
        return {r.unit_id for r in self.results if r.status == STATUS_UNDEFINED}


def estimate_value(
    dataset: Dataset,
    config: AnalysisConfig,
    policy: EvaluationPolicy,
    feature_map: FeatureMap | None = None,
    baselines=None,
) -> float:
    """Run the configured estimator from scratch and return v_hat."""
    if config.estimator == "kernel-fqe":
        graph = build_neighbor_graph(dataset, config.metric(), policy, config.radius)
        fqe = run_kernel_fqe(dataset, graph, policy, config.gamma, config.resolve_horizon(dataset))
        return fqe.v_hat
    if config.estimator == "linear-fqe":
        if feature_map is None:
            raise ValueError("linear-fqe needs a feature map")
        model = fit_linear_fqe(dataset, policy, feature_map, config.gamma)
        return model.v_hat
    weights = compute_weights(dataset, policy, config.gamma)
    return estimate(config.estimator, weights, baselines)


def removal_units(dataset: Dataset, config: AnalysisConfig) -> tuple[str, ...]:
    """Units the sweep iterates, in dataset order."""
    if config.unit_kind == "transition":
        return dataset.ids
    return dataset.trajectory_ids


def remove_unit(dataset: Dataset, config: AnalysisConfig, unit_id: str) -> Dataset:
    if config.unit_kind == "transition":
        return dataset.remove_transition(unit_id)
    return dataset.remove_trajectory(unit_id)


def brute_force_influence(
    dataset: Dataset,
    config: AnalysisConfig,
    policy: EvaluationPolicy,
    unit_id: str,
    feature_map: FeatureMap | None = None,
    baselines=None,
    v_hat_full: float | None = None,
) -> OracleResult:
    """Influence of one unit by full re-estimation without it.

    The FQE horizon is frozen at the full dataset's resolution so the
    removed run answers the same question. A removed run that raises an
    estimation error (empty evaluation pool, zero weights, unidentifiable
    model, nothing left at all) is reported as undefined_after_removal.
    """
    config = replace(config, horizon=config.resolve_horizon(dataset))
    if v_hat_full is None:
        v_hat_full = estimate_value(dataset, config, policy, feature_map, baselines)
    try:
        reduced = remove_unit(dataset, config, unit_id)
        v_removed = estimate_value(reduced, config, policy, feature_map, baselines)
    except EvaluationError:
        return OracleResult(
            unit_id=unit_id,
            v_hat_full=v_hat_full,
            v_hat_removed=None,
            influence=None,
            status=STATUS_UNDEFINED,
        )
    return OracleResult(
        unit_id=unit_id,
        v_hat_full=v_hat_full,
        v_hat_removed=v_removed,
        influence=v_removed - v_hat_full,
        status=STATUS_OK,
    )


def brute_force_all(
    dataset: Dataset,
    config: AnalysisConfig,
    policy: EvaluationPolicy,
    feature_map: FeatureMap | None = None,
    baselines=None,
    budget: int | None = None,
) -> OracleSweep:
    """Sweep every unit, optionally stopping after ``budget`` of them.

    The budget counts units, not seconds, so a truncated sweep is still
    deterministic: the same inputs always yield the same partial results
    plus the truncation marker.
    """
    units = removal_units(dataset, config)
    v_full = estimate_value(dataset, config, policy, feature_map, baselines)
    results = []
    truncated = False
    for k, unit in enumerate(units):
        if budget is not None and k >= budget:
            truncated = True
            break
        results.append(
            brute_force_influence(
                dataset, config, policy, unit, feature_map, baselines, v_hat_full=v_full
            )
        )
    return OracleSweep(results=tuple(results), truncated=truncated)
