"""Identification and classification measures.

All operations here are pure functions over immutable trial data:

* ``tpir`` / ``cmc_curve`` -- closed-set identification reliability: the
  fraction of searches whose true subject appears within the top R ranked
  candidates, and that fraction as a function of R.
* ``confusion_matrix`` / ``accuracy`` / ``sensitivity_macro`` /
  ``specificity_macro`` -- multi-class classification quality.  Accuracy is
  micro (trace over total); sensitivity and specificity are one-vs-rest
  macro averages, which keeps reported accuracy equal to sensitivity on
  balanced classes.
* ``risk_error`` -- cost-weighted risk: alpha * Error_FNMR + beta * Error_FMR,
  with Error_FNMR = 1 - sensitivity and Error_FMR = 1 - specificity.
* ``bias_trust`` -- signed change in decision reliability between two
  operating conditions; positive means gained trust.
* ``cohort_decomposition`` -- overall performance as the unweighted mean of
  per-cohort values, with the best ("bias for") and worst ("bias against")
  cohorts identified.

Counting is done in plain Python so results are bit-reproducible across
platforms and trivially checkable against enumeration oracles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

from .datamodel import canonical_cohort


class ZeroSupportWarning(UserWarning):
    """A label had no applicable trials and was excluded from a macro average."""


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def _check_unit_range(name: str, value: float) -> float:
    value = _check_finite(name, value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class IdentificationTrial:
    """One probe search: the true subject plus the ranked candidate list.

    Candidates are (subject_id, score) pairs sorted by score descending;
    ties are broken by subject_id ascending (use :meth:`from_scores` to
    apply that ordering).  Candidate subjects are distinct within a trial.
    """

    probe_sample: str
    true_subject: str
    candidates: tuple[tuple[str, float], ...]

    def __post_init__(self):
        cands = tuple((str(s), float(x)) for s, x in self.candidates)
        object.__setattr__(self, "candidates", cands)
        if not cands:
            raise ValueError(f"trial {self.probe_sample!r}: empty candidate list")
        seen = set()
        prev = None
        for subject, score in cands:
            if not math.isfinite(score):
                raise ValueError(f"trial {self.probe_sample!r}: non-finite score")
            if subject in seen:
                raise ValueError(
                    f"trial {self.probe_sample!r}: duplicate candidate {subject!r}"
                )
            seen.add(subject)
            if prev is not None and score > prev:
                raise ValueError(
                    f"trial {self.probe_sample!r}: candidates not sorted by score"
                )
            prev = score

    @classmethod
    def from_scores(cls, probe_sample: str, true_subject: str,
                    scores) -> "IdentificationTrial":
        """Build a trial from unordered (subject, score) pairs or a mapping."""
        pairs = scores.items() if isinstance(scores, Mapping) else scores
        ordered = sorted(((str(s), float(x)) for s, x in pairs),
                         key=lambda kv: (-kv[1], kv[0]))
        return cls(probe_sample, true_subject, tuple(ordered))

    def true_rank(self) -> int | None:
        """1-based rank of the true subject, or None if absent."""
        for i, (subject, _) in enumerate(self.candidates, start=1):
            if subject == self.true_subject:
                return i
        return None


@dataclass(frozen=True)
class ClassificationTrial:
    """One sample's true label with the classifier's per-label scores."""

    sample: str
    true_label: str
    label_scores: Mapping[str, float]

    def __post_init__(self):
        scores = {canonical_cohort(k): float(v) for k, v in self.label_scores.items()}
        object.__setattr__(self, "label_scores", scores)
        object.__setattr__(self, "true_label", canonical_cohort(self.true_label))
        if len(scores) < 2:
            raise ValueError(f"trial {self.sample!r}: needs at least two labels")
        if self.true_label not in scores:
            raise ValueError(
                f"trial {self.sample!r}: true label {self.true_label!r} "
                f"not in score map"
            )
        for label, score in scores.items():
            if not math.isfinite(score):
                raise ValueError(f"trial {self.sample!r}: non-finite score for {label!r}")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count grid; row = ground truth, column = prediction."""

    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        counts = tuple(tuple(int(c) for c in row) for row in self.counts)
        object.__setattr__(self, "counts", counts)
        if not labels:
            raise ValueError("confusion matrix needs at least one label")
        if len(set(labels)) != len(labels):
            raise ValueError("confusion matrix labels must be distinct")
        if len(counts) != len(labels) or any(len(r) != len(labels) for r in counts):
            raise ValueError("confusion matrix counts must be square over labels")
        if any(c < 0 for row in counts for c in row):
            raise ValueError("confusion matrix counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(c for row in self.counts for c in row)

    @property
    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.labels)))

    def row_sums(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.counts)

    def row_normalized(self) -> tuple[tuple[float, ...], ...]:
        """Rows rescaled to fractions; an all-zero row stays all zero."""
        out = []
        for row in self.counts:
            n = sum(row)
            out.append(tuple(c / n if n else 0.0 for c in row))
        return tuple(out)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise ValueError("cannot add confusion matrices with different labels")
        summed = tuple(
            tuple(a + b for a, b in zip(ra, rb))
            for ra, rb in zip(self.counts, other.counts)
        )
        return ConfusionMatrix(self.labels, summed)


@dataclass(frozen=True)
class RiskParams:
    """Error costs: alpha for a false non-match, beta for a false match."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = _check_finite(name, getattr(self, name))
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value!r}")
            object.__setattr__(self, name, value)


BALANCED_COST = RiskParams(alpha=1.0, beta=1.0)


@dataclass(frozen=True)
class MetricSummary:
    """Mean and population standard deviation over per-fold values."""

    mean: float
    std: float
    fold_values: tuple[float, ...]


@dataclass(frozen=True)
class CohortDecomposition:
    """Unweighted overall value plus the extreme cohorts.

    ``bias_for`` is the cohort with the maximal value, ``bias_against`` the
    minimal one; ties resolve to the lexicographically first label.
    """

    overall: float
    bias_against: str
    bias_for: str


def _require_trials(trials) -> list:
    trials = list(trials)
    if not trials:
        raise ValueError("trial list must be non-empty")
    return trials


def tpir(trials: Iterable[IdentificationTrial], rank: int) -> float:
    """True positive identification rate at the given rank.

    1 minus the fraction of searches whose true subject falls outside the
    top ``rank`` candidates.  A trial with fewer than ``rank`` candidates is
    judged on its full list.
    """
    trials = _require_trials(trials)
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    outside = 0
    for trial in trials:
        r = trial.true_rank()
        if r is None or r > rank:
            outside += 1
    return 1 - outside / len(trials)


def cmc_curve(trials: Iterable[IdentificationTrial],
              max_rank: int) -> tuple[tuple[int, float], ...]:
    """Cumulative matching characteristic: (rank, tpir) for ranks 1..max_rank."""
    trials = _require_trials(trials)
    if max_rank < 1:
        raise ValueError(f"max_rank must be >= 1, got {max_rank}")
    return tuple((r, tpir(trials, r)) for r in range(1, max_rank + 1))


def rank1_prediction(trial: ClassificationTrial) -> str:
    """Label with the highest score; exact ties go to the first label in
    canonical (lexicographic) order."""
    return min(trial.label_scores.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def confusion_matrix(trials: Iterable[ClassificationTrial],
                     labels=None) -> ConfusionMatrix:
    """Count rank-1 predictions against ground truth.

    All trials must share one label universe.  ``labels`` fixes the
    row/column order; it defaults to the sorted universe and must contain
    exactly the universe labels.
    """
    trials = _require_trials(trials)
    universe = frozenset(trials[0].label_scores)
    for trial in trials:
        if frozenset(trial.label_scores) != universe:
            raise ValueError(
                f"trial {trial.sample!r} has a different label universe"
            )
    if labels is None:
        labels = tuple(sorted(universe))
    else:
        labels = tuple(canonical_cohort(l) for l in labels)
        if set(labels) != universe or len(set(labels)) != len(labels):
            raise ValueError("labels must enumerate the trial label universe")
    index = {label: i for i, label in enumerate(labels)}
    grid = [[0] * len(labels) for _ in labels]
    for trial in trials:
        grid[index[trial.true_label]][index[rank1_prediction(trial)]] += 1
    return ConfusionMatrix(labels, tuple(tuple(row) for row in grid))


def accuracy(cm: ConfusionMatrix) -> float:
    """Micro accuracy: correct predictions over all trials."""
    total = cm.total
    if total == 0:
        raise ValueError("confusion matrix has no trials")
    return cm.trace / total


def sensitivity_macro(cm: ConfusionMatrix) -> float:
    """Macro one-vs-rest recall.

    Labels with zero ground-truth trials have undefined recall; they are
    excluded from the average and flagged with :class:`ZeroSupportWarning`.
    """
    if cm.total == 0:
        raise ValueError("confusion matrix has no trials")
    recalls = []
    skipped = []
    for i, label in enumerate(cm.labels):
        support = sum(cm.counts[i])
        if support == 0:
            skipped.append(label)
            continue
        recalls.append(cm.counts[i][i] / support)
    if skipped:
        warnings.warn(
            f"labels without ground-truth trials excluded from macro "
            f"sensitivity: {skipped}",
            ZeroSupportWarning,
            stacklevel=2,
        )
    return sum(recalls) / len(recalls)


def specificity_macro(cm: ConfusionMatrix) -> float:
    """Macro one-vs-rest true-negative rate.

    For label L, TN / (TN + FP) over trials whose ground truth is not L.
    Undefined entries (all trials belong to L) are excluded with a
    :class:`ZeroSupportWarning`.  A single-label matrix is rejected.
    """
    if len(cm.labels) < 2:
        raise ValueError("specificity is undefined with a single label")
    total = cm.total
    if total == 0:
        raise ValueError("confusion matrix has no trials")
    rates = []
    skipped = []
    for i, label in enumerate(cm.labels):
        negatives = total - sum(cm.counts[i])
        if negatives == 0:
            skipped.append(label)
            continue
        false_pos = sum(cm.counts[j][i] for j in range(len(cm.labels)) if j != i)
        rates.append((negatives - false_pos) / negatives)
    if skipped:
        warnings.warn(
            f"labels with no negative trials excluded from macro "
            f"specificity: {skipped}",
            ZeroSupportWarning,
            stacklevel=2,
        )
    return sum(rates) / len(rates)


def risk_error(error_fnmr: float, error_fmr: float,
               params: RiskParams = BALANCED_COST) -> float:
    """Cost-weighted risk: alpha * error_fnmr + beta * error_fmr."""
    error_fnmr = _check_unit_range("error_fnmr", error_fnmr)
    error_fmr = _check_unit_range("error_fmr", error_fmr)
    return params.alpha * error_fnmr + params.beta * error_fmr


def risk_from_rates(sensitivity: float, specificity: float,
                    params: RiskParams = BALANCED_COST) -> float:
    """Risk from (sensitivity, specificity): the false non-match rate is
    1 - sensitivity and the false match rate is 1 - specificity."""
    sensitivity = _check_unit_range("sensitivity", sensitivity)
    specificity = _check_unit_range("specificity", specificity)
    return risk_error(1 - sensitivity, 1 - specificity, params)


def bias_trust(r_i: float, r_j: float) -> float:
    """Signed trust change when reliability moves from r_i to r_j.

    Positive means a gain of trust, negative a loss.
    """
    r_i = _check_unit_range("r_i", r_i)
    r_j = _check_unit_range("r_j", r_j)
    return r_j - r_i


def aggregate_mean_std(fold_values: Iterable[float]) -> MetricSummary:
    """Mean and population standard deviation over fold values."""
    values = tuple(_check_finite("fold value", v) for v in fold_values)
    if not values:
        raise ValueError("need at least one fold value")
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return MetricSummary(mean=mean, std=math.sqrt(var), fold_values=values)


def cohort_decomposition(per_cohort: Mapping[str, float]) -> CohortDecomposition:
    """Decompose an overall measure into per-cohort contributions.

    The overall value is the unweighted mean over cohorts; the extremes
    name the favored ("bias for") and disfavored ("bias against") cohorts.
    """
    if not per_cohort:
        raise ValueError("per-cohort map must be non-empty")
    items = [(canonical_cohort(k), _check_finite(f"value for {k!r}", v))
             for k, v in per_cohort.items()]
    overall = sum(v for _, v in items) / len(items)
    bias_against = min(items, key=lambda kv: (kv[1], kv[0]))[0]
    bias_for = min(items, key=lambda kv: (-kv[1], kv[0]))[0]
    return CohortDecomposition(overall=overall, bias_against=bias_against,
                               bias_for=bias_for)
