"""End-to-end analysis: estimator, influence report, diagnosis.

One entry point shared by the command line, the review service, and the
validation mode, so a recomputation anywhere is the same computation.
Serialization here is canonical (fixed key order, no timestamps); equal
analyses produce byte-identical payloads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import AnalysisConfig, Dataset, EvaluationPolicy
from .diagnostics import Diagnosis, diagnose
from .importance_sampling import is_influence_report
from .kernel_fqe import FQEResult, NeighborGraph, kernel_fqe_from_config
from .kernel_influence import kernel_influence_report
from .linear_fqe import FeatureMap, LinearModel, StateActionFeatures, fit_linear_fqe, linear_influence_report
from .oracle import brute_force_all
from .report import InfluenceReport


@dataclass
class Analysis:
    dataset: Dataset
    config: AnalysisConfig
    policy_name: str
    report: InfluenceReport
    diagnosis: Diagnosis
    graph: NeighborGraph | None = None
    fqe: FQEResult | None = None
    model: LinearModel | None = None

    @property
    def v_hat(self) -> float:
        return self.report.v_hat


def default_feature_map(dataset: Dataset) -> FeatureMap:
    return StateActionFeatures(dataset.state_dim, dataset.action_count)


def analyze(
    dataset: Dataset,
    config: AnalysisConfig,
    policy: EvaluationPolicy,
    feature_map: FeatureMap | None = None,
    baselines=None,
) -> Analysis:
    """Run the configured estimator and produce report plus diagnosis."""
    graph = fqe = model = None
    if config.estimator == "kernel-fqe":
        graph, fqe = kernel_fqe_from_config(dataset, config, policy)
        report = kernel_influence_report(dataset, config, graph, fqe)
    elif config.estimator == "linear-fqe":
        fmap = feature_map or default_feature_map(dataset)
        model = fit_linear_fqe(dataset, policy, fmap, config.gamma)
        report = linear_influence_report(dataset, config, model)
    else:
        report = is_influence_report(dataset, config, policy, baselines=baselines)
    diagnosis = diagnose(report, dataset)
    return Analysis(
        dataset=dataset,
        config=config,
        policy_name=policy.name,
        report=report,
        diagnosis=diagnosis,
        graph=graph,
        fqe=fqe,
        model=model,
    )


def report_jsonl(analysis: Analysis) -> str:
    return analysis.report.to_jsonl()


def diagnosis_json(analysis: Analysis) -> str:
    return json.dumps(analysis.diagnosis.to_dict(), indent=2, sort_keys=False) + "\n"


def analysis_payload(analysis: Analysis) -> dict:
    """Canonical dict capturing everything a recomputation must reproduce."""
    return {
        "config": analysis.config.to_dict(),
        "policy": analysis.policy_name,
        "dataset_fingerprint": analysis.dataset.fingerprint(),
        "v_hat": analysis.v_hat,
        "report": analysis.report.to_records(),
        "diagnosis": analysis.diagnosis.to_dict(),
    }


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def validate(
    dataset: Dataset,
    config: AnalysisConfig,
    policy: EvaluationPolicy,
    feature_map: FeatureMap | None = None,
    baselines=None,
    budget: int | None = None,
    top_k: int = 5,
) -> dict:
    """Compare closed-form influence against the brute-force oracle.

    Returns a structure with per-unit deviations, their distribution, the
    top-k agreement (overlap of the largest-|influence| sets and sign
    agreement on the intersection), and any disagreement about which units
    are undefined. The closed form for the kernel estimator is first-order,
    so everything here is measurement, not assertion.
    """
    if config.estimator == "linear-fqe" and feature_map is None:
        feature_map = default_feature_map(dataset)
    analysis = analyze(dataset, config, policy, feature_map=feature_map, baselines=baselines)
    sweep = brute_force_all(
        dataset, config, policy, feature_map=feature_map, baselines=baselines, budget=budget
    )
    closed = analysis.report.total_influence
    oracle = sweep.influences()
    common = [u for u in closed if u in oracle]
    units = []
    for unit in common:
        dev = closed[unit] - oracle[unit]
        units.append(
            {
                "unit_id": unit,
                "closed_form": closed[unit],
                "oracle": oracle[unit],
                "deviation": dev,
                "relative_deviation": abs(dev) / max(abs(oracle[unit]), 1e-12),
            }
        )
    devs = np.array([abs(u["deviation"]) for u in units]) if units else np.zeros(1)

    def top(by: dict) -> list[str]:
        ranked = sorted(common, key=lambda u: (-abs(by[u]), u))
        return ranked[:top_k]

    top_closed = top(closed)
    top_oracle = top(oracle)
    overlap = [u for u in top_closed if u in set(top_oracle)]
    signs_agree = all(
        (closed[u] > 0) == (oracle[u] > 0) for u in overlap if closed[u] != 0 and oracle[u] != 0
    )
    return {
        "estimator": config.estimator,
        "v_hat": analysis.v_hat,
        "units": units,
        "undefined_closed_form": sorted(analysis.report.undefined),
        "undefined_oracle": sorted(sweep.undefined()),
        "skipped_by_cutoff": sorted(analysis.report.skipped_by_cutoff),
        "oracle_truncated": sweep.truncated,
        "deviation_summary": {
            "count": len(units),
            "max_abs": float(devs.max()),
            "mean_abs": float(devs.mean()),
            "quantiles": {
                "p50": float(np.quantile(devs, 0.5)),
                "p90": float(np.quantile(devs, 0.9)),
                "p99": float(np.quantile(devs, 0.99)),
            },
        },
        "top_k": {
            "k": top_k,
            "closed_form": top_closed,
            "oracle": top_oracle,
            "overlap_count": len(overlap),
            "signs_agree_on_overlap": bool(signs_agree),
        },
    }
