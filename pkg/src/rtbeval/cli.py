"""Command-line entry point.

Subcommands:
  generate  -- synthesize a dataset from a JSON config
  ingest    -- validate a manifest/embeddings pair and persist it
  identify  -- run an identification protocol, emit report + matrices + CMC
  classify  -- run subject-fold classification, emit report + confusion
  risk      -- recompute cost-weighted risk from a stored report
  trust     -- trust change between two conditions of a stored report

Exit codes: 0 success, 2 file parse errors (and usage errors), 3 data
invariant violations, 4 protocol precondition failures.  The default output
directory comes from --out, falling back to $RTBEVAL_WORKDIR, then ".".
``--deterministic`` forces single-worker execution; results are identical
either way, it only pins the execution mode.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .classifier import METRICS, default_classifier
from .dataio import (
    ParseError,
    read_dataset_records,
    read_manifest,
    write_dataset,
)
from .datamodel import (
    DatasetManifest,
    ManifestError,
    canonical_cohort,
    canonical_modality,
    screen_records,
    validate_manifest,
)
from .metrics import RiskParams, bias_trust, cmc_curve, risk_from_rates
from .protocols import (
    ProtocolError,
    cross_modality_trials,
    cube_from_trials,
    emotion_fold_trials,
    reliability_matrix_from_trials,
)
from .report import (
    EvaluationReport,
    ReportError,
    RiskEntry,
    TrustEntry,
    load_report,
    render_cmc_rows,
    render_confusion_counts,
    render_confusion_percent,
    render_cube_panel,
    render_reliability_matrix,
    save_report,
    write_text,
)
from .synthetic import ConfigError, SynthConfig, generate

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_PRECONDITION = 4

WORKDIR_ENV = "RTBEVAL_WORKDIR"


def _workdir(args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get(WORKDIR_ENV, "."))


def _workers(args) -> int:
    return 1 if args.deterministic else args.workers


def _load_validated(path) -> DatasetManifest:
    return validate_manifest(read_dataset_records(path))


def _restrict(manifest: DatasetManifest, modality, labels=None) -> DatasetManifest:
    if modality is None and labels is None:
        return manifest
    return manifest.restricted(modality=modality, cohorts=labels)


def _dataset_params(manifest: DatasetManifest) -> dict:
    return {
        "sample_count": len(manifest.samples),
        "subject_count": manifest.subject_count,
        "feature_dim": manifest.feature_dim,
    }


def _comma_list(text: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _rank_list(text: str) -> list[int]:
    try:
        ranks = sorted({int(t) for t in _comma_list(text)})
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad rank list {text!r}") from exc
    if any(r < 1 for r in ranks):
        raise argparse.ArgumentTypeError("ranks must be >= 1")
    return ranks


def cmd_generate(args) -> int:
    try:
        config_obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(args.config, None, f"cannot read config: {exc}") from exc
    config = SynthConfig.from_dict(config_obj)
    manifest = generate(config)
    out = _workdir(args) / args.name
    write_dataset(manifest, out)
    print(f"dataset: {out}")
    print(
        f"samples={len(manifest.samples)} subjects={manifest.subject_count} "
        f"modalities={len(manifest.modalities)} cohorts={len(manifest.cohorts)} "
        f"feature_dim={manifest.feature_dim}"
    )
    return EXIT_OK


def cmd_ingest(args) -> int:
    records = read_manifest(args.manifest, args.embeddings)
    if args.lenient:
        kept, diagnostics = screen_records(records, max_per_group=args.max_per_group)
        for diag in diagnostics:
            print(f"rejected {diag}", file=sys.stderr)
        manifest = validate_manifest(kept, max_per_group=args.max_per_group)
    else:
        manifest = validate_manifest(records, max_per_group=args.max_per_group)
    name = args.name or Path(args.manifest).stem
    out = write_dataset(manifest, _workdir(args) / name)
    print(f"dataset: {out}")
    print(f"samples={len(manifest.samples)} subjects={manifest.subject_count}")
    return EXIT_OK


def _emit_emotion_fold(manifest, classifier, args, out: Path) -> None:
    cell_results = emotion_fold_trials(manifest, classifier, workers=_workers(args))
    matrix = reliability_matrix_from_trials(cell_results, manifest.cohorts)
    report = EvaluationReport(
        protocol="emotion-fold-identification",
        parameters={
            "classifier": classifier.metric if not classifier.search else "auto",
            "cmc_max_rank": args.max_rank,
            "dataset": _dataset_params(manifest),
            "modality": args.modality,
        },
        reliability=matrix,
        decomposition=matrix.decomposition(),
    )
    save_report(report, out / "report.json")
    write_text(out / "reliability_matrix.csv", render_reliability_matrix(matrix))
    cmc_rows = []
    for (test_cohort, val_cohort), cell in cell_results.items():
        for rank, value in cmc_curve(cell.trials, args.max_rank):
            cmc_rows.append((test_cohort, val_cohort, rank, value))
    write_text(
        out / "cmc.csv",
        render_cmc_rows(("test_cohort", "validation_cohort", "rank", "tpir"), cmc_rows),
    )
    d = matrix.decomposition()
    print(f"reliability matrix: {out / 'reliability_matrix.csv'}")
    print(
        f"overall={d.overall:.4f} bias_for={d.bias_for} bias_against={d.bias_against}"
    )


def _emit_cross_modality(manifest, classifier, args, out: Path) -> None:
    trials = cross_modality_trials(manifest, classifier, workers=_workers(args))
    max_rank = max(args.max_rank, args.ranks[-1])
    cube = cube_from_trials(trials, manifest.modalities, args.ranks)
    report = EvaluationReport(
        protocol="cross-modality-identification",
        parameters={
            "classifier": classifier.metric,
            "cmc_max_rank": max_rank,
            "dataset": _dataset_params(manifest),
            "ranks": list(args.ranks),
        },
        cube=cube,
    )
    save_report(report, out / "report.json")
    for rank in cube.ranks:
        write_text(out / f"reliability_rank{rank}.csv", render_cube_panel(cube, rank))
    cmc_rows = []
    for train_mod in cube.train_labels:
        for test_mod in cube.test_labels:
            for rank, value in cmc_curve(trials[(train_mod, test_mod)], max_rank):
                cmc_rows.append((train_mod, test_mod, rank, value))
    write_text(
        out / "cmc.csv",
        render_cmc_rows(("train_modality", "test_modality", "rank", "tpir"), cmc_rows),
    )
    print(f"reliability cube ranks: {', '.join(str(r) for r in cube.ranks)}")
    for rank in cube.ranks:
        print(f"  rank-{rank} matrix: {out / f'reliability_rank{rank}.csv'}")


def cmd_identify(args) -> int:
    manifest = _load_validated(args.dataset)
    out = _workdir(args)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "emotion-fold":
        if args.modality is None and len(manifest.modalities) > 1:
            raise ProtocolError(
                "dataset spans several modalities; pick one with --modality "
                f"(available: {', '.join(manifest.modalities)})"
            )
        manifest = _restrict(manifest, args.modality)
        classifier = default_classifier(args.metric)
        _emit_emotion_fold(manifest, classifier, args, out)
    else:
        if args.modality is not None:
            raise ProtocolError("--modality does not apply to cross-modality mode")
        # no validation partition in this design; "auto" falls back to cosine
        metric = "cosine" if args.metric == "auto" else args.metric
        classifier = default_classifier(metric)
        _emit_cross_modality(manifest, classifier, args, out)
    print(f"report: {out / 'report.json'}")
    return EXIT_OK


def cmd_classify(args) -> int:
    from .protocols import subject_fold_classification

    manifest = _load_validated(args.dataset)
    manifest = _restrict(manifest, args.modality)
    metric = "cosine" if args.metric == "auto" else args.metric
    classifier = default_classifier(metric)
    report, pooled = subject_fold_classification(
        manifest,
        classifier,
        k=args.k,
        seed=args.seed,
        label_set=args.labels,
        risk_params=RiskParams(alpha=args.alpha, beta=args.beta),
        workers=_workers(args),
    )
    report = replace(
        report,
        parameters={
            **report.parameters,
            "dataset": _dataset_params(manifest),
            "modality": args.modality,
        },
    )
    out = _workdir(args)
    out.mkdir(parents=True, exist_ok=True)
    save_report(report, out / "report.json")
    write_text(out / "confusion_counts.csv", render_confusion_counts(pooled))
    write_text(out / "confusion_normalized.csv", render_confusion_percent(pooled))
    for name in ("accuracy", "sensitivity", "specificity"):
        s = report.metrics[name]
        print(f"{name}: {s.mean:.4f} ± {s.std:.4f}")
    entry = report.risks[0]
    print(f"risk: {entry.value:.4f} (alpha={entry.alpha:g}, beta={entry.beta:g})")
    print(f"report: {out / 'report.json'}")
    return EXIT_OK


def cmd_risk(args) -> int:
    report = load_report(args.report)
    missing = [m for m in ("sensitivity", "specificity") if m not in report.metrics]
    if missing:
        raise ValueError(
            f"report lacks metric(s) required for risk: {', '.join(missing)}"
        )
    sens = report.metrics["sensitivity"].mean
    spec = report.metrics["specificity"].mean
    params = RiskParams(alpha=args.alpha, beta=args.beta)
    value = risk_from_rates(sens, spec, params)
    entry = RiskEntry(
        alpha=params.alpha,
        beta=params.beta,
        error_fnmr=1 - sens,
        error_fmr=1 - spec,
        value=value,
    )
    report = replace(report, risks=report.risks + (entry,))
    save_report(report, args.report)
    print(f"risk: {value:.4f} (alpha={params.alpha:g}, beta={params.beta:g})")
    return EXIT_OK


def _parse_condition(text: str, *, ranked: bool):
    """Parse "A/B" or "A/B@rank" into a cell address."""
    rank = 1
    has_rank = "@" in text
    if has_rank:
        text, _, rank_text = text.partition("@")
        try:
            rank = int(rank_text)
        except ValueError:
            raise ProtocolError(f"bad rank in condition {text!r}@{rank_text!r}") from None
    parts = [p for p in text.split("/") if p]
    if len(parts) != 2:
        raise ProtocolError(
            f"condition {text!r} must look like TRAIN/TEST (identification cube) "
            f"or TEST/VALIDATION (reliability matrix)"
        )
    if ranked:
        return canonical_modality(parts[0]), canonical_modality(parts[1]), rank
    if has_rank:
        raise ProtocolError("reliability-matrix conditions take no @rank suffix")
    return canonical_cohort(parts[0]), canonical_cohort(parts[1])


def cmd_trust(args) -> int:
    report = load_report(args.report)
    if report.cube is not None:
        base = _parse_condition(args.base, ranked=True)
        target = _parse_condition(args.target, ranked=True)
        value = bias_trust(report.cube.cell(*base), report.cube.cell(*target))
    elif report.reliability is not None:
        base = _parse_condition(args.base, ranked=False)
        target = _parse_condition(args.target, ranked=False)
        value = bias_trust(
            report.reliability.cell(*base), report.reliability.cell(*target)
        )
    else:
        raise ManifestError(["report carries no reliability matrix or cube"])
    entry = TrustEntry(base=base, target=target, value=value)
    print(f"bias_trust: {value:+.4f} ({entry.annotation})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtbeval",
        description="Reliability, risk, and trust-change evaluation over embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"rtbeval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", help=f"output directory (default ${WORKDIR_ENV} or .)")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel evaluation workers (default 1)")
        p.add_argument("--deterministic", action="store_true",
                       help="force single-worker execution")

    p = sub.add_parser("generate", help="synthesize a dataset from a JSON config")
    p.add_argument("--config", required=True, help="SynthConfig JSON file")
    p.add_argument("--name", default="synthetic", help="dataset directory name")
    add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="validate and persist a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", help="overrides per-row embeddings references")
    p.add_argument("--name", help="dataset directory name (default: manifest stem)")
    p.add_argument("--lenient", action="store_true",
                   help="drop invalid records instead of failing")
    p.add_argument("--max-per-group", type=int, default=None,
                   help="cap samples per (subject, modality, cohort)")
    add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("identify", help="run an identification protocol")
    p.add_argument("--dataset", required=True, help="dataset directory or manifest file")
    p.add_argument("--mode", required=True, choices=("emotion-fold", "cross-modality"))
    p.add_argument("--modality", help="restrict to one modality (emotion-fold mode)")
    p.add_argument("--ranks", type=_rank_list, default=[1, 5, 10],
                   help="rank cutoffs for cross-modality mode (default 1,5,10)")
    p.add_argument("--max-rank", type=int, default=10,
                   help="largest rank in emitted CMC curves (default 10)")
    p.add_argument("--metric", default="auto", choices=("auto",) + METRICS,
                   help="classifier metric; auto searches on the validation cohort")
    add_common(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("classify", help="subject-fold cohort classification")
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", type=_comma_list, default=None,
                   help="cohort labels to classify (default: all)")
    p.add_argument("--k", type=int, default=5, help="number of subject folds")
    p.add_argument("--seed", type=int, default=0, help="fold assignment seed")
    p.add_argument("--modality", help="restrict to one modality")
    p.add_argument("--alpha", type=float, default=1.0, help="cost of a false non-match")
    p.add_argument("--beta", type=float, default=1.0, help="cost of a false match")
    p.add_argument("--metric", default="cosine", choices=("auto",) + METRICS)
    add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("risk", help="cost-weighted risk from a stored report")
    p.add_argument("--report", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("trust", help="trust change between two report conditions")
    p.add_argument("--report", required=True)
    p.add_argument("--base", required=True,
                   help="base condition, e.g. RGB/RGB@1 or shock/sleepy")
    p.add_argument("--target", required=True,
                   help="target condition, same syntax as --base")
    p.set_defaults(func=cmd_trust)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ManifestError as exc:
        for diag in exc.diagnostics:
            print(f"error: {diag}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


def entry() -> None:
    sys.exit(main())
