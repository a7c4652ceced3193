"""Command-line driver: generate datasets, run analysis, validate against
the brute-force oracle, emit figure data, and launch the review service.

Exit codes for `analyze` encode the diagnosis outcome so shell pipelines
can gate on evaluability: 0 = reliable, 2 = needs expert review,
3 = unevaluatable, 1 = any error.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import click
import numpy as np
import scipy

from . import __version__
from .data import (
    ESTIMATORS,
    AnalysisConfig,
    ConstantPolicy,
    Dataset,
    DatasetError,
    EvaluationError,
    EvaluationPolicy,
    NearestNeighborPolicy,
    TablePolicy,
    load_dataset,
    save_dataset,
)
from .diagnostics import Outcome
from .domains.navigation import (
    NavigationConfig,
    generate_navigation,
    navigation_analysis_config,
    navigation_policy,
)
from .domains.tumor import (
    TumorConfig,
    generate_tumor,
    tumor_case,
    tumor_case_names,
    tumor_policy,
)
from .pipeline import analyze, diagnosis_json, report_jsonl
from .pipeline import validate as validate_against_oracle

EXIT_BY_OUTCOME = {
    Outcome.RELIABLE: 0,
    Outcome.NEEDS_EXPERT_REVIEW: 2,
    Outcome.UNEVALUATABLE: 3,
}

REPORT_FILE = "influence_report.jsonl"
DIAGNOSIS_FILE = "diagnosis.json"
MANIFEST_FILE = "manifest.json"


def parse_policy(text: str, dataset: Dataset) -> EvaluationPolicy:
    """Build an evaluation policy from a spec string.

    Forms: constant:A, knn:K, table:PATH (JSON list of {state, action}
    entries), tumor-protocol.
    """
    kind, _, arg = text.partition(":")
    if kind == "constant":
        return ConstantPolicy(int(arg))
    if kind == "knn":
        return NearestNeighborPolicy.from_dataset(dataset, k=int(arg or "1"))
    if kind == "table":
        raw = json.loads(Path(arg).read_text(encoding="utf-8"))
        entries = raw["entries"] if isinstance(raw, dict) else raw
        table = {tuple(e["state"]): int(e["action"]) for e in entries}
        return TablePolicy(table)
    if kind == "tumor-protocol":
        return tumor_policy()
    raise ValueError(
        f"unknown policy {text!r}; expected constant:A, knn:K, table:PATH,"
        " or tumor-protocol"
    )


def config_options(f):
    opts = [
        click.option(
            "--estimator",
            type=click.Choice(ESTIMATORS),
            default="kernel-fqe",
            show_default=True,
        ),
        click.option("--gamma", type=float, default=1.0, show_default=True),
        click.option(
            "--radius",
            type=float,
            default=1.0,
            show_default=True,
            help="neighborhood radius (kernel estimator)",
        ),
        click.option("--horizon", type=int, default=None, help="FQE horizon; default is the longest trajectory"),
        click.option("--threshold", type=float, default=0.05, show_default=True, help="normalized-influence flag threshold"),
        click.option("--vmax", type=float, default=None, help="value bound enabling the influence cutoff"),
        click.option("--metric-weights", default=None, help="comma-separated per-dimension state weights"),
        click.option("--policy", "policy_spec", default="knn:1", show_default=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def build_config(estimator, gamma, radius, horizon, threshold, vmax, metric_weights) -> AnalysisConfig:
    weights = None
    if metric_weights:
        weights = tuple(float(w) for w in metric_weights.split(","))
    return AnalysisConfig(
        estimator=estimator,
        gamma=gamma,
        radius=radius,
        horizon=horizon,
        influence_threshold=threshold,
        v_max=vmax,
        metric_weights=weights,
    )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(
    out_dir: Path,
    command: str,
    config: AnalysisConfig,
    dataset_path: Path,
    dataset: Dataset,
    policy: EvaluationPolicy,
    outputs: list[str],
    started: float,
) -> Path:
    manifest = {
        "command": command,
        "config": config.to_dict(),
        "policy": policy.name,
        "dataset_path": str(dataset_path),
        "dataset_fingerprint": dataset.fingerprint(),
        "outputs": {name: _sha256(out_dir / name) for name in outputs},
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "ope-influence": __version__,
        },
        "elapsed_seconds": round(time.perf_counter() - started, 3),
    }
    path = out_dir / MANIFEST_FILE
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(__version__)
def main():
    """Influence analysis for off-policy evaluation datasets."""


@main.command()
@click.argument("domain")
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trajectories", type=int, default=None, help="override trajectory count")
def generate(domain, out, seed, trajectories):
    """Write a synthetic dataset.

    DOMAIN is navigation, tumor, or tumor-case:NAME where NAME is one of
    the frozen case fixtures. Navigation writes a region sidecar; outlier
    cases write an injected-id sidecar.
    """
    out.parent.mkdir(parents=True, exist_ok=True)
    if domain == "navigation":
        cfg = NavigationConfig() if trajectories is None else NavigationConfig(num_trajectories=trajectories)
        dataset, regions = generate_navigation(seed, cfg)
        save_dataset(dataset, out)
        sidecar = out.with_name(out.stem + ".regions.json")
        sidecar.write_text(json.dumps(regions, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        click.echo(f"wrote {out} ({len(dataset)} transitions) and {sidecar}")
    elif domain == "tumor":
        cfg = TumorConfig() if trajectories is None else TumorConfig(num_trajectories=trajectories)
        dataset = generate_tumor(seed, cfg)
        save_dataset(dataset, out)
        click.echo(f"wrote {out} ({len(dataset)} transitions)")
    elif domain.startswith("tumor-case:"):
        name = domain.split(":", 1)[1]
        try:
            dataset, _, _, injected = tumor_case(name)
        except KeyError as exc:
            raise click.BadParameter(str(exc)) from None
        save_dataset(dataset, out)
        click.echo(f"wrote {out} ({len(dataset)} transitions)")
        if injected:
            sidecar = out.with_name(out.stem + ".outliers.json")
            sidecar.write_text(json.dumps(injected, indent=2) + "\n", encoding="utf-8")
            click.echo(f"wrote {sidecar}")
    else:
        raise click.BadParameter(
            f"unknown domain {domain!r}; expected navigation, tumor, or "
            f"tumor-case:NAME with NAME in {tumor_case_names()}"
        )


@main.command(name="analyze")
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@config_options
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=Path("."), show_default=True)
def analyze_cmd(dataset_path, estimator, gamma, radius, horizon, threshold, vmax, metric_weights, policy_spec, out_dir):
    """Run the estimator, influence analysis, and diagnosis on a dataset.

    Writes influence_report.jsonl, diagnosis.json, and manifest.json into
    --out-dir. The exit code encodes the outcome.
    """
    started = time.perf_counter()
    try:
        dataset = load_dataset(dataset_path)
        config = build_config(estimator, gamma, radius, horizon, threshold, vmax, metric_weights)
        policy = parse_policy(policy_spec, dataset)
        analysis = analyze(dataset, config, policy)
    except (DatasetError, EvaluationError, ValueError, OSError) as exc:
        _fail(str(exc))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / REPORT_FILE).write_text(report_jsonl(analysis), encoding="utf-8")
    (out_dir / DIAGNOSIS_FILE).write_text(diagnosis_json(analysis), encoding="utf-8")
    write_manifest(
        out_dir, "analyze", analysis.config, dataset_path, dataset,
        policy, [REPORT_FILE, DIAGNOSIS_FILE], started,
    )
    outcome = analysis.diagnosis.outcome
    click.echo(
        f"outcome={outcome.value} v_hat={analysis.v_hat:.6g} "
        f"flags={len(analysis.report.flags)} dead_ends={len(analysis.report.dead_ends)} "
        f"skipped={len(analysis.report.skipped_by_cutoff)}"
    )
    sys.exit(EXIT_BY_OUTCOME[outcome])


@main.command(name="validate")
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@config_options
@click.option("--oracle-budget", type=int, default=None, help="max brute-force removals; omit for all units")
@click.option("--top-k", type=int, default=5, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=Path("."), show_default=True)
def validate_cmd(dataset_path, estimator, gamma, radius, horizon, threshold, vmax, metric_weights, policy_spec, oracle_budget, top_k, out_dir):
    """Compare closed-form influence against brute-force removal.

    Writes validation.json with per-unit deviations and prints a summary.
    """
    try:
        dataset = load_dataset(dataset_path)
        config = build_config(estimator, gamma, radius, horizon, threshold, vmax, metric_weights)
        policy = parse_policy(policy_spec, dataset)
        table = validate_against_oracle(dataset, config, policy, budget=oracle_budget, top_k=top_k)
    except (DatasetError, EvaluationError, ValueError, OSError) as exc:
        _fail(str(exc))
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "validation.json"
    out_path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    summary = table["deviation_summary"]
    max_rel = max((u["relative_deviation"] for u in table["units"]), default=0.0)
    agreement = table["top_k"]
    click.echo(f"units compared: {summary['count']}")
    click.echo(f"max abs deviation: {summary['max_abs']:.3e}")
    click.echo(f"max rel deviation: {max_rel:.3e}")
    click.echo(
        f"top-{agreement['k']} overlap: {agreement['overlap_count']}/{agreement['k']} "
        f"signs_agree={agreement['signs_agree_on_overlap']}"
    )
    if table["oracle_truncated"]:
        click.echo("oracle budget exhausted; table is partial", err=True)


@main.command(name="reproduce")
@click.argument("figure", type=click.Choice(["fig2", "cases", "fig4"]))
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=Path("."), show_default=True)
@click.option("--seeds", type=int, default=200, show_default=True, help="navigation seed count (fig2)")
@click.option("--seed", type=int, default=0, show_default=True, help="base seed")
def reproduce(figure, out_dir, seeds, seed):
    """Re-run a study pipeline and write its summary data files."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if figure == "fig2":
        _reproduce_navigation(out_dir, seeds, seed)
    elif figure == "cases":
        _reproduce_cases(out_dir)
    else:
        _reproduce_estimator_comparison(out_dir, seed)


def _reproduce_navigation(out_dir: Path, seeds: int, base_seed: int) -> None:
    """Influence-by-region study: sparse region II should dominate."""
    config = navigation_analysis_config()
    policy = navigation_policy()
    per_region: dict[str, list[float]] = {"I": [], "II": [], "III": []}
    rows = []
    for s in range(base_seed, base_seed + seeds):
        dataset, regions = generate_navigation(s)
        analysis = analyze(dataset, config, policy)
        for uid, value in analysis.report.total_influence.items():
            region = regions.get(uid)
            if region:
                per_region[region].append(abs(value))
                rows.append((s, region, abs(value)))
    medians = {r: float(np.median(vals)) for r, vals in per_region.items() if vals}
    csv_path = out_dir / "navigation_influence.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("seed,region,abs_influence\n")
        for s, region, value in rows:
            fh.write(f"{s},{region},{value:.12g}\n")
    summary = {
        "seeds": seeds,
        "median_abs_influence": medians,
        "ratio_II_over_I": medians["II"] / medians["I"],
        "ratio_III_over_I": medians["III"] / medians["I"],
    }
    (out_dir / "navigation_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(
        f"region medians: I={medians['I']:.4g} II={medians['II']:.4g} III={medians['III']:.4g} "
        f"(II/I={summary['ratio_II_over_I']:.2f}, III/I={summary['ratio_III_over_I']:.4f})"
    )


def _reproduce_cases(out_dir: Path) -> None:
    """Four tumor configurations, one expected outcome each."""
    rows = []
    for name in tumor_case_names():
        dataset, config, policy, injected = tumor_case(name)
        analysis = analyze(dataset, config, policy)
        rows.append(
            {
                "case": name,
                "outcome": analysis.diagnosis.outcome.value,
                "v_hat": analysis.v_hat,
                "flags": list(analysis.report.flags),
                "dead_ends": list(analysis.report.dead_ends),
                "injected_outliers": injected,
                "flags_match_injected": bool(injected) and set(analysis.report.flags) == set(injected),
            }
        )
        click.echo(f"{name}: {rows[-1]['outcome']} (flags={len(rows[-1]['flags'])})")
    (out_dir / "cases_outcomes.json").write_text(
        json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _reproduce_estimator_comparison(out_dir: Path, seed: int) -> None:
    """Trajectory influence under IS, WIS, and PDIS on one tumor dataset.

    Short trajectories keep the full-horizon weight products from
    vanishing for every trajectory at once.
    """
    dataset = generate_tumor(seed, TumorConfig(horizon=8))
    policy = tumor_policy()
    tops: dict[str, list[str]] = {}
    rows = []
    for method in ("is", "wis", "pdis"):
        config = AnalysisConfig(estimator=method, gamma=1.0)
        analysis = analyze(dataset, config, policy)
        influence = analysis.report.total_influence
        tops[method] = sorted(influence, key=lambda t: (-abs(influence[t]), t))[:5]
        rows.extend((method, tid, influence[tid]) for tid in sorted(influence))
    csv_path = out_dir / "estimator_influence.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("estimator,trajectory_id,influence\n")
        for method, tid, value in rows:
            fh.write(f"{method},{tid},{value:.12g}\n")
    pairs = [("is", "wis"), ("is", "pdis"), ("wis", "pdis")]
    differing = [list(p) for p in pairs if set(tops[p[0]]) != set(tops[p[1]])]
    summary = {"top5": tops, "pairs_with_different_top5": differing}
    (out_dir / "estimator_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for method, top in tops.items():
        click.echo(f"{method} top-5: {', '.join(top)}")


@main.command()
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@config_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--ui", type=click.Path(file_okay=False, path_type=Path), default=None, help="directory with the built browser frontend to serve at /")
def serve(dataset_path, estimator, gamma, radius, horizon, threshold, vmax, metric_weights, policy_spec, host, port, ui):
    """Launch the expert-review HTTP service on a dataset."""
    import uvicorn

    from .service.app import create_app
    from .service.session import ReviewSession

    try:
        dataset = load_dataset(dataset_path)
        config = build_config(estimator, gamma, radius, horizon, threshold, vmax, metric_weights)
        policy = parse_policy(policy_spec, dataset)
        session = ReviewSession(dataset, config, policy)
    except (DatasetError, EvaluationError, ValueError, OSError) as exc:
        _fail(str(exc))
    app = create_app(session, static_dir=ui)
    click.echo(f"review service on http://{host}:{port} (dataset {dataset_path}, {len(dataset)} transitions)")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
