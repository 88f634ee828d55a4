"""Evaluation report schema, serialization, and table rendering.

A report bundles everything one protocol run produced: run parameters,
mean +/- std metric summaries, cost-weighted risk entries, trust-change
deltas, and the matrices behind them.  Reports serialize to schema-versioned
JSON with sorted keys, so identical runs yield byte-identical files and any
emitted report re-parses to an equal object.  Derived fields (risk values,
trust deltas, column averages, the cohort decomposition) stay recomputable
from the stored primitives to 1e-9; :func:`verify_report` checks that.

Tables render to delimited text: reliability values with 4 decimals and "-"
for excluded diagonal cells, confusion matrices as raw counts and as
row-normalized percentages with 2 decimals.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping

from . import __version__
from .metrics import (
    CohortDecomposition,
    ConfusionMatrix,
    MetricSummary,
    bias_trust,
    cohort_decomposition,
)
from .protocols import RankedReliabilityCube, ReliabilityMatrix

SCHEMA_VERSION = 1
CONSISTENCY_TOL = 1e-9


class ReportError(Exception):
    """A report file cannot be parsed into a valid EvaluationReport."""


@dataclass(frozen=True)
class RiskEntry:
    """One cost-weighted risk evaluation: costs, error rates, and the value."""

    alpha: float
    beta: float
    error_fnmr: float
    error_fmr: float
    value: float


@dataclass(frozen=True)
class TrustEntry:
    """Trust change between two named conditions."""

    base: tuple
    target: tuple
    value: float

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(self.base))
        object.__setattr__(self, "target", tuple(self.target))

    @property
    def annotation(self) -> str:
        if self.value > 0:
            return "gain of trust"
        if self.value < 0:
            return "loss of trust"
        return "no change in trust"


@dataclass(frozen=True)
class EvaluationReport:
    """Aggregated output of one protocol run."""

    protocol: str
    parameters: dict
    metrics: Mapping[str, MetricSummary] = field(default_factory=dict)
    risks: tuple[RiskEntry, ...] = ()
    trust_deltas: tuple[TrustEntry, ...] = ()
    reliability: ReliabilityMatrix | None = None
    cube: RankedReliabilityCube | None = None
    confusion: ConfusionMatrix | None = None
    decomposition: CohortDecomposition | None = None
    schema_version: int = SCHEMA_VERSION
    tool_version: str = __version__

    def __post_init__(self):
        object.__setattr__(self, "metrics", dict(self.metrics))
        object.__setattr__(self, "risks", tuple(self.risks))
        object.__setattr__(self, "trust_deltas", tuple(self.trust_deltas))


def report_to_dict(report: EvaluationReport) -> dict:
    obj = {
        "schema_version": report.schema_version,
        "tool_version": report.tool_version,
        "protocol": report.protocol,
        "parameters": report.parameters,
        "metrics": {
            name: {
                "mean": s.mean,
                "std": s.std,
                "fold_values": list(s.fold_values),
            }
            for name, s in report.metrics.items()
        },
        "risks": [
            {
                "alpha": r.alpha,
                "beta": r.beta,
                "error_fnmr": r.error_fnmr,
                "error_fmr": r.error_fmr,
                "value": r.value,
            }
            for r in report.risks
        ],
        "trust_deltas": [
            {"base": list(t.base), "target": list(t.target), "value": t.value}
            for t in report.trust_deltas
        ],
    }
    if report.reliability is not None:
        m = report.reliability
        obj["reliability"] = {
            "row_labels": list(m.row_labels),
            "col_labels": list(m.col_labels),
            "cells": [list(row) for row in m.cells],
            "averages": list(m.averages),
            "exclude_diagonal": m.exclude_diagonal,
        }
    if report.cube is not None:
        c = report.cube
        obj["cube"] = {
            "ranks": list(c.ranks),
            "train_labels": list(c.train_labels),
            "test_labels": list(c.test_labels),
            "values": [[list(row) for row in panel] for panel in c.values],
        }
    if report.confusion is not None:
        obj["confusion"] = {
            "labels": list(report.confusion.labels),
            "counts": [list(row) for row in report.confusion.counts],
        }
    if report.decomposition is not None:
        d = report.decomposition
        obj["decomposition"] = {
            "overall": d.overall,
            "bias_against": d.bias_against,
            "bias_for": d.bias_for,
        }
    return obj


def report_from_dict(obj: Mapping) -> EvaluationReport:
    try:
        version = obj["schema_version"]
        if version != SCHEMA_VERSION:
            raise ReportError(f"unsupported schema_version {version!r}")
        metrics = {
            name: MetricSummary(
                mean=s["mean"], std=s["std"], fold_values=tuple(s["fold_values"])
            )
            for name, s in obj.get("metrics", {}).items()
        }
        risks = tuple(RiskEntry(**r) for r in obj.get("risks", ()))
        trust = tuple(
            TrustEntry(base=tuple(t["base"]), target=tuple(t["target"]), value=t["value"])
            for t in obj.get("trust_deltas", ())
        )
        reliability = None
        if "reliability" in obj:
            m = obj["reliability"]
            reliability = ReliabilityMatrix(
                row_labels=tuple(m["row_labels"]),
                col_labels=tuple(m["col_labels"]),
                cells=tuple(tuple(row) for row in m["cells"]),
                exclude_diagonal=m["exclude_diagonal"],
            )
            stored = tuple(m["averages"])
            if len(stored) != len(reliability.averages) or any(
                abs(a - b) > CONSISTENCY_TOL
                for a, b in zip(stored, reliability.averages)
            ):
                raise ReportError("stored column averages disagree with cells")
        cube = None
        if "cube" in obj:
            c = obj["cube"]
            cube = RankedReliabilityCube(
                ranks=tuple(c["ranks"]),
                train_labels=tuple(c["train_labels"]),
                test_labels=tuple(c["test_labels"]),
                values=tuple(tuple(tuple(row) for row in panel) for panel in c["values"]),
            )
        confusion = None
        if "confusion" in obj:
            confusion = ConfusionMatrix(
                labels=tuple(obj["confusion"]["labels"]),
                counts=tuple(tuple(row) for row in obj["confusion"]["counts"]),
            )
        decomposition = None
        if "decomposition" in obj:
            d = obj["decomposition"]
            decomposition = CohortDecomposition(
                overall=d["overall"],
                bias_against=d["bias_against"],
                bias_for=d["bias_for"],
            )
        return EvaluationReport(
            protocol=obj["protocol"],
            parameters=dict(obj["parameters"]),
            metrics=metrics,
            risks=risks,
            trust_deltas=trust,
            reliability=reliability,
            cube=cube,
            confusion=confusion,
            decomposition=decomposition,
            schema_version=version,
            tool_version=obj["tool_version"],
        )
    except ReportError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportError(f"malformed report: {exc}") from exc


def dumps_report(report: EvaluationReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def loads_report(text: str) -> EvaluationReport:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportError(f"report is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ReportError("report must be a JSON object")
    return report_from_dict(obj)


def save_report(report: EvaluationReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_report(report))


def load_report(path) -> EvaluationReport:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_report(fh.read())


def verify_report(report: EvaluationReport) -> list[str]:
    """Recompute every derived value from stored primitives.

    Returns a list of inconsistency descriptions; an empty list means the
    report is self-consistent to within 1e-9.
    """
    problems = []
    for name, summary in report.metrics.items():
        values = summary.fold_values
        if not values:
            problems.append(f"metric {name!r} has no fold values")
            continue
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        if abs(mean - summary.mean) > CONSISTENCY_TOL:
            problems.append(f"metric {name!r}: stored mean disagrees with folds")
        if abs(var**0.5 - summary.std) > CONSISTENCY_TOL:
            problems.append(f"metric {name!r}: stored std disagrees with folds")
    for entry in report.risks:
        expected = entry.alpha * entry.error_fnmr + entry.beta * entry.error_fmr
        if abs(expected - entry.value) > CONSISTENCY_TOL:
            problems.append(f"risk value {entry.value!r} disagrees with its rates")
    for entry in report.trust_deltas:
        try:
            if len(entry.base) == 3 and report.cube is not None:
                base = report.cube.cell(*entry.base)
                target = report.cube.cell(*entry.target)
            elif len(entry.base) == 2 and report.reliability is not None:
                base = report.reliability.cell(*entry.base)
                target = report.reliability.cell(*entry.target)
            else:
                problems.append(f"trust delta {entry} has no matrix to check against")
                continue
        except Exception as exc:
            problems.append(f"trust delta {entry}: {exc}")
            continue
        if abs(bias_trust(base, target) - entry.value) > CONSISTENCY_TOL:
            problems.append(f"trust delta {entry.value!r} disagrees with cells")
    if report.decomposition is not None and report.reliability is not None:
        m = report.reliability
        expected = cohort_decomposition(dict(zip(m.col_labels, m.averages)))
        d = report.decomposition
        if abs(expected.overall - d.overall) > CONSISTENCY_TOL:
            problems.append("decomposition overall disagrees with column averages")
        if (expected.bias_for, expected.bias_against) != (d.bias_for, d.bias_against):
            problems.append("decomposition extremes disagree with column averages")
    return problems


def _render_rows(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def render_reliability_matrix(matrix: ReliabilityMatrix,
                              corner: str = "test/validation") -> str:
    """Delimited table: 4-decimal cells, "-" on the excluded diagonal, and a
    final per-column average row."""
    rows = [[corner, *matrix.col_labels]]
    for label, cells in zip(matrix.row_labels, matrix.cells):
        rows.append([label, *("-" if v is None else f"{v:.4f}" for v in cells)])
    rows.append(["average", *(f"{v:.4f}" for v in matrix.averages)])
    return _render_rows(rows)


def render_cube_panel(cube: RankedReliabilityCube, rank: int,
                      corner: str = "train/test") -> str:
    """Delimited train x test table for one rank cutoff, 4-decimal cells."""
    panel = cube.panel(rank)
    rows = [[corner, *cube.test_labels]]
    for label, cells in zip(cube.train_labels, panel):
        rows.append([label, *(f"{v:.4f}" for v in cells)])
    return _render_rows(rows)


def render_confusion_counts(cm: ConfusionMatrix) -> str:
    rows = [["true/predicted", *cm.labels]]
    for label, counts in zip(cm.labels, cm.counts):
        rows.append([label, *(str(c) for c in counts)])
    return _render_rows(rows)


def render_confusion_percent(cm: ConfusionMatrix) -> str:
    """Row-normalized percentages with 2 decimals."""
    rows = [["true/predicted", *cm.labels]]
    for label, fractions in zip(cm.labels, cm.row_normalized()):
        rows.append([label, *(f"{100 * v:.2f}" for v in fractions)])
    return _render_rows(rows)


def render_cmc_rows(header: tuple[str, ...], rows) -> str:
    """Generic (condition..., rank, tpir) listing; tpir gets 4 decimals."""
    out = [list(header)]
    for row in rows:
        *conditions, rank, value = row
        out.append([*conditions, str(rank), f"{value:.4f}"])
    return _render_rows(out)


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
