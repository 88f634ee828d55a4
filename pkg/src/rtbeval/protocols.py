"""Evaluation protocols over a pluggable classifier.

Three experimental designs:

* ``emotion_fold_identification`` -- leave-one-cohort-out identification.
  For every ordered (test cohort, validation cohort) pair the classifier is
  trained on the remaining cohorts, tuned on the validation cohort, and
  scored on the test cohort; rank-1 TPIR lands in a reliability matrix with
  the diagonal excluded and per-column averages.
* ``cross_modality_identification`` -- train a gallery on one modality,
  identify probes from every modality, at several rank cutoffs; results
  form a rank-indexed train x test reliability cube.
* ``subject_fold_classification`` -- subject-disjoint k-fold cohort
  classification with per-fold accuracy / sensitivity / specificity
  aggregated as mean +/- population std, plus a pooled confusion matrix.

Cell and fold evaluations are independent pure tasks; ``workers`` > 1 runs
them on a thread pool and aggregates into position-addressed slots, so the
output is identical to a single-worker run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .datamodel import DatasetManifest, partition_by_cohort, partition_by_subject_folds
from .metrics import (
    BALANCED_COST,
    ClassificationTrial,
    ConfusionMatrix,
    IdentificationTrial,
    RiskParams,
    accuracy,
    aggregate_mean_std,
    bias_trust,
    cohort_decomposition,
    confusion_matrix,
    risk_from_rates,
    sensitivity_macro,
    specificity_macro,
    tpir,
)


class ProtocolError(Exception):
    """A protocol precondition does not hold for the given dataset."""


class FittedModel(Protocol):
    """What a fitted classifier must offer to the protocol runners."""

    def rank(self, features) -> list[tuple[str, float]]: ...

    def classify(self, features) -> dict[str, float]: ...


class Classifier(Protocol):
    """Behavioral contract for pluggable classifiers.

    ``fit`` builds an immutable fitted model from training samples, keyed
    by "subject" (identification gallery) or "cohort" (label model).
    Classifiers may expose hyperparameter alternatives via ``variants()``;
    protocols with a validation stage pick the variant maximizing rank-1
    TPIR on the validation partition.
    """

    name: str

    def fit(self, samples, key: str) -> FittedModel: ...


def _variants(classifier) -> Sequence:
    getter = getattr(classifier, "variants", None)
    return tuple(getter()) if callable(getter) else (classifier,)


def _parallel_map(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ReliabilityMatrix:
    """Condition x condition grid of TPIR values.

    With ``exclude_diagonal`` (the default) a cell whose row and column
    name the same condition is absent (None); per-column averages are
    computed over the present cells only.
    """

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    cells: tuple[tuple[float | None, ...], ...]
    exclude_diagonal: bool = True
    averages: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        rows = tuple(self.row_labels)
        cols = tuple(self.col_labels)
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)
        cells = tuple(
            tuple(None if v is None else float(v) for v in row) for row in self.cells
        )
        object.__setattr__(self, "cells", cells)
        if len(cells) != len(rows) or any(len(r) != len(cols) for r in cells):
            raise ValueError("cell grid shape must match labels")
        for i, row_label in enumerate(rows):
            for j, col_label in enumerate(cols):
                value = cells[i][j]
                on_diagonal = self.exclude_diagonal and row_label == col_label
                if on_diagonal and value is not None:
                    raise ValueError(
                        f"diagonal cell ({row_label}, {col_label}) must be excluded"
                    )
                if not on_diagonal:
                    if value is None:
                        raise ValueError(f"cell ({row_label}, {col_label}) is missing")
                    if not 0.0 <= value <= 1.0:
                        raise ValueError(
                            f"cell ({row_label}, {col_label}) out of [0, 1]: {value!r}"
                        )
        averages = []
        for j, col_label in enumerate(cols):
            present = [cells[i][j] for i in range(len(rows)) if cells[i][j] is not None]
            if not present:
                raise ValueError(f"column {col_label!r} has no present cells")
            averages.append(sum(present) / len(present))
        object.__setattr__(self, "averages", tuple(averages))

    def cell(self, row: str, col: str) -> float:
        if row not in self.row_labels or col not in self.col_labels:
            raise ProtocolError(f"unknown condition ({row!r}, {col!r})")
        value = self.cells[self.row_labels.index(row)][self.col_labels.index(col)]
        if value is None:
            raise ProtocolError(f"cell ({row!r}, {col!r}) is excluded")
        return value

    def column_average(self, col: str) -> float:
        if col not in self.col_labels:
            raise ProtocolError(f"unknown condition {col!r}")
        return self.averages[self.col_labels.index(col)]

    def decomposition(self):
        """Cohort decomposition of the per-column averages."""
        return cohort_decomposition(dict(zip(self.col_labels, self.averages)))


@dataclass(frozen=True)
class RankedReliabilityCube:
    """Train x test reliability grids at several rank cutoffs.

    ``values[r][i][j]`` is the TPIR at ``ranks[r]`` when training on
    ``train_labels[i]`` and testing on ``test_labels[j]``; each cell is
    non-decreasing in rank.
    """

    ranks: tuple[int, ...]
    train_labels: tuple[str, ...]
    test_labels: tuple[str, ...]
    values: tuple[tuple[tuple[float, ...], ...], ...]

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "train_labels", tuple(self.train_labels))
        object.__setattr__(self, "test_labels", tuple(self.test_labels))
        values = tuple(
            tuple(tuple(float(v) for v in row) for row in panel) for panel in self.values
        )
        object.__setattr__(self, "values", values)
        if not ranks or any(r < 1 for r in ranks):
            raise ValueError("ranks must be positive integers")
        if any(a >= b for a, b in zip(ranks, ranks[1:])):
            raise ValueError("ranks must be strictly increasing")
        if len(values) != len(ranks):
            raise ValueError("one grid required per rank")
        for panel in values:
            if len(panel) != len(self.train_labels) or any(
                len(row) != len(self.test_labels) for row in panel
            ):
                raise ValueError("grid shape must match train/test labels")
            for row in panel:
                for v in row:
                    if not 0.0 <= v <= 1.0:
                        raise ValueError(f"TPIR out of [0, 1]: {v!r}")
        for i in range(len(self.train_labels)):
            for j in range(len(self.test_labels)):
                series = [values[r][i][j] for r in range(len(ranks))]
                if any(a > b for a, b in zip(series, series[1:])):
                    raise ValueError(
                        f"cell ({self.train_labels[i]}, {self.test_labels[j]}) "
                        f"decreases with rank: {series}"
                    )

    def panel(self, rank: int) -> tuple[tuple[float, ...], ...]:
        if rank not in self.ranks:
            raise ProtocolError(f"no grid for rank {rank}")
        return self.values[self.ranks.index(rank)]

    def cell(self, train: str, test: str, rank: int) -> float:
        panel = self.panel(rank)
        if train not in self.train_labels or test not in self.test_labels:
            raise ProtocolError(f"unknown condition ({train!r}, {test!r})")
        return panel[self.train_labels.index(train)][self.test_labels.index(test)]


@dataclass(frozen=True)
class CellResult:
    """Test-cohort trials for one matrix cell plus the variant that won
    validation."""

    trials: tuple[IdentificationTrial, ...]
    variant: str


def _identification_trials(model, probes) -> tuple[IdentificationTrial, ...]:
    return tuple(
        IdentificationTrial(
            probe_sample=rec.sample_id,
            true_subject=rec.subject_id,
            candidates=tuple(model.rank(rec.features)),
        )
        for rec in probes
    )


def _check_gallery(model, probes, context: str):
    missing = sorted({p.subject_id for p in probes} - set(model.keys))
    if missing:
        raise ProtocolError(
            f"gallery gap {context}: probe subjects missing from the training "
            f"gallery: {', '.join(missing)}"
        )


def emotion_fold_trials(
    manifest: DatasetManifest, classifier, workers: int = 1
) -> dict[tuple[str, str], CellResult]:
    """Run the leave-one-cohort-out identification grid, keeping raw trials.

    For each ordered (test, validation) cohort pair the classifier variants
    are fitted on the remaining cohorts; the variant with the best rank-1
    TPIR on the validation cohort (first wins ties) is then applied to the
    test cohort's probes.
    """
    cohorts = manifest.cohorts
    if len(cohorts) < 3:
        raise ProtocolError(
            f"cohort-fold identification needs >= 3 cohorts, got {len(cohorts)}"
        )
    buckets = partition_by_cohort(manifest)
    pairs = [(t, v) for t in cohorts for v in cohorts if v != t]

    def evaluate_cell(pair):
        test_cohort, val_cohort = pair
        train = [
            rec
            for cohort in cohorts
            if cohort not in (test_cohort, val_cohort)
            for rec in buckets[cohort]
        ]
        context = f"for cell (test={test_cohort}, validation={val_cohort})"
        best = None
        for variant in _variants(classifier):
            model = variant.fit(train, key="subject")
            _check_gallery(model, buckets[val_cohort] + buckets[test_cohort], context)
            val_trials = _identification_trials(model, buckets[val_cohort])
            score = tpir(val_trials, 1)
            if best is None or score > best[0]:
                best = (score, variant, model)
        _, variant, model = best
        test_trials = _identification_trials(model, buckets[test_cohort])
        return CellResult(trials=test_trials, variant=getattr(variant, "name", "default"))

    results = _parallel_map(evaluate_cell, pairs, workers)
    return dict(zip(pairs, results))


def reliability_matrix_from_trials(
    cell_results: dict[tuple[str, str], CellResult], cohorts
) -> ReliabilityMatrix:
    """Rank-1 matrix from per-(test, validation) trial sets."""
    cohorts = tuple(cohorts)
    grid = tuple(
        tuple(
            None if v == t else tpir(cell_results[(t, v)].trials, 1) for v in cohorts
        )
        for t in cohorts
    )
    return ReliabilityMatrix(row_labels=cohorts, col_labels=cohorts, cells=grid)


def emotion_fold_identification(
    manifest: DatasetManifest, classifier, workers: int = 1
) -> ReliabilityMatrix:
    """Rank-1 reliability matrix over (test cohort, validation cohort) pairs."""
    cell_results = emotion_fold_trials(manifest, classifier, workers=workers)
    return reliability_matrix_from_trials(cell_results, manifest.cohorts)


def cross_modality_trials(
    manifest: DatasetManifest, classifier, workers: int = 1
) -> dict[tuple[str, str], tuple[IdentificationTrial, ...]]:
    """Identify every modality's probes against every modality's gallery.

    The classifier is used as configured; there is no validation partition
    in this design, so no variant search happens.
    """
    modalities = manifest.modalities
    if len(modalities) < 2:
        raise ProtocolError(
            f"cross-modality identification needs >= 2 modalities, got {len(modalities)}"
        )
    by_modality = {m: [] for m in modalities}
    for rec in manifest.samples:
        by_modality[rec.modality].append(rec)

    def run_train_row(train_mod):
        model = classifier.fit(by_modality[train_mod], key="subject")
        row = {}
        for test_mod in modalities:
            probes = by_modality[test_mod]
            _check_gallery(model, probes, f"for (train={train_mod}, test={test_mod})")
            row[test_mod] = _identification_trials(model, probes)
        return row

    rows = _parallel_map(run_train_row, modalities, workers)
    return {
        (train_mod, test_mod): rows[i][test_mod]
        for i, train_mod in enumerate(modalities)
        for test_mod in modalities
    }


def cube_from_trials(
    trials: dict[tuple[str, str], tuple[IdentificationTrial, ...]], modalities, ranks
) -> RankedReliabilityCube:
    """TPIR cube from per-(train, test) trial sets at the given ranks."""
    modalities = tuple(modalities)
    ranks = tuple(int(r) for r in ranks)
    values = tuple(
        tuple(
            tuple(tpir(trials[(tr, te)], rank) for te in modalities)
            for tr in modalities
        )
        for rank in ranks
    )
    return RankedReliabilityCube(
        ranks=ranks, train_labels=modalities, test_labels=modalities, values=values
    )


def cross_modality_identification(
    manifest: DatasetManifest, classifier, ranks, workers: int = 1
) -> RankedReliabilityCube:
    """TPIR cube over (train modality, test modality, rank)."""
    trials = cross_modality_trials(manifest, classifier, workers=workers)
    return cube_from_trials(trials, manifest.modalities, ranks)


def subject_fold_classification(
    manifest: DatasetManifest,
    classifier,
    k: int,
    seed: int,
    label_set=None,
    risk_params: RiskParams = BALANCED_COST,
    workers: int = 1,
):
    """Subject-disjoint k-fold cohort classification.

    Per fold: fit the classifier on the other folds' samples (restricted to
    ``label_set``), classify the held-out subjects' samples, and score the
    fold's confusion matrix.  Returns an :class:`~rtbeval.report.EvaluationReport`
    with mean +/- std summaries and the pooled confusion matrix, plus that
    matrix separately.
    """
    from .report import EvaluationReport, RiskEntry  # report depends on this module

    if label_set is None:
        labels = manifest.cohorts
    else:
        from .datamodel import canonical_cohort

        labels = tuple(dict.fromkeys(canonical_cohort(l) for l in label_set))
    missing = sorted(set(labels) - set(manifest.cohorts))
    if missing:
        raise ProtocolError(f"label(s) not present in manifest: {', '.join(missing)}")
    if len(labels) < 2:
        raise ProtocolError("classification needs at least two labels")
    wanted = set(labels)
    folds = partition_by_subject_folds(manifest, k, seed)

    def run_fold(i):
        train = [
            rec
            for j, fold in enumerate(folds)
            if j != i
            for rec in fold
            if rec.cohort in wanted
        ]
        test = [rec for rec in folds[i] if rec.cohort in wanted]
        absent = sorted(wanted - {rec.cohort for rec in train})
        if absent or not test:
            what = (
                f"training set lacks label(s) {', '.join(absent)}"
                if absent
                else "no test samples"
            )
            raise ProtocolError(f"fold {i} construction failure: {what}")
        model = classifier.fit(train, key="cohort")
        trials = tuple(
            ClassificationTrial(
                sample=rec.sample_id,
                true_label=rec.cohort,
                label_scores=model.classify(rec.features),
            )
            for rec in test
        )
        return confusion_matrix(trials, labels)

    fold_matrices = _parallel_map(run_fold, range(k), workers)
    summaries = {
        "accuracy": aggregate_mean_std([accuracy(cm) for cm in fold_matrices]),
        "sensitivity": aggregate_mean_std([sensitivity_macro(cm) for cm in fold_matrices]),
        "specificity": aggregate_mean_std([specificity_macro(cm) for cm in fold_matrices]),
    }
    pooled = fold_matrices[0]
    for cm in fold_matrices[1:]:
        pooled = pooled + cm
    mean_sens = summaries["sensitivity"].mean
    mean_spec = summaries["specificity"].mean
    risk = RiskEntry(
        alpha=risk_params.alpha,
        beta=risk_params.beta,
        error_fnmr=1 - mean_sens,
        error_fmr=1 - mean_spec,
        value=risk_from_rates(mean_sens, mean_spec, risk_params),
    )
    report = EvaluationReport(
        protocol="subject-fold-classification",
        parameters={
            "k": k,
            "seed": seed,
            "labels": list(labels),
            "classifier": getattr(classifier, "name", type(classifier).__name__),
        },
        metrics=summaries,
        risks=(risk,),
        confusion=pooled,
    )
    return report, pooled


def trust_delta_report(cube: RankedReliabilityCube, base, target) -> float:
    """Trust change between two cube cells, each named (train, test, rank)."""
    return bias_trust(cube.cell(*base), cube.cell(*target))
