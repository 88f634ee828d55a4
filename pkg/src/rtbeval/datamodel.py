"""Dataset manifest, sample records, and partitioning utilities.

A manifest is a flat list of embedding samples, each tagged with a subject,
a modality (imaging band), and a cohort (e.g. a facial expression).  All
evaluation protocols consume validated manifests; validation happens once,
up front, and every type in this module is immutable afterwards, so the
protocol runners can share records freely across workers.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

# Well-known imaging bands.  Modalities are open-ended strings; these are
# just the canonical spellings used by the synthetic generator and docs.
RGB = "RGB"
NIR = "NIR"
IR = "IR"
SKETCH = "SKETCH"
KNOWN_MODALITIES = (RGB, NIR, IR, SKETCH)


def canonical_modality(tag: str) -> str:
    """Canonicalize a modality tag: case-insensitive ingest, uppercase after."""
    tag = tag.strip().upper()
    if not tag:
        raise ValueError("modality tag must be non-empty")
    return tag


def canonical_cohort(name: str) -> str:
    """Canonicalize a cohort label: case-insensitive ingest, lowercase after."""
    name = name.strip().lower()
    if not name:
        raise ValueError("cohort label must be non-empty")
    return name


@dataclass(frozen=True)
class SampleRecord:
    """One biometric sample: subject, modality, cohort, embedding vector.

    Fields are canonicalized on construction (modality uppercase, cohort
    lowercase, features coerced to a tuple of floats).  Value-level checks
    (finiteness, dimension consistency, uniqueness) belong to
    :func:`validate_manifest`, which can report them per record.
    """

    sample_id: str
    subject_id: str
    modality: str
    cohort: str
    features: tuple[float, ...]

    def __post_init__(self):
        for name in ("sample_id", "subject_id"):
            value = getattr(self, name).strip()
            if not value:
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "modality", canonical_modality(self.modality))
        object.__setattr__(self, "cohort", canonical_cohort(self.cohort))
        object.__setattr__(self, "features", tuple(float(x) for x in self.features))


@dataclass(frozen=True)
class RecordDiagnostic:
    """Why one record was rejected during validation."""

    sample_id: str
    reason: str

    def __str__(self) -> str:
        return f"{self.sample_id}: {self.reason}"


class ManifestError(Exception):
    """Raised when records violate manifest invariants.

    Carries one :class:`RecordDiagnostic` per offending record so callers
    can report every problem, not just the first.
    """

    def __init__(self, diagnostics):
        self.diagnostics = tuple(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class DatasetManifest:
    """A validated, immutable collection of samples.

    ``subject_count`` equals the number of distinct subject ids and
    ``feature_dim`` is shared by every sample.  Construct through
    :func:`validate_manifest`; the constructor re-checks the cheap
    invariants so a hand-built manifest cannot be silently inconsistent.
    """

    samples: tuple[SampleRecord, ...]
    subject_count: int
    feature_dim: int

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError("manifest must contain at least one sample")
        ids = set()
        subjects = set()
        for rec in self.samples:
            if rec.sample_id in ids:
                raise ValueError(f"duplicate sample_id {rec.sample_id!r}")
            ids.add(rec.sample_id)
            subjects.add(rec.subject_id)
            if len(rec.features) != self.feature_dim:
                raise ValueError(
                    f"sample {rec.sample_id!r} has dimension {len(rec.features)}, "
                    f"manifest declares {self.feature_dim}"
                )
        if len(subjects) != self.subject_count:
            raise ValueError(
                f"subject_count is {self.subject_count} but manifest has "
                f"{len(subjects)} distinct subjects"
            )

    @property
    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({r.subject_id for r in self.samples}))

    @property
    def cohorts(self) -> tuple[str, ...]:
        return tuple(sorted({r.cohort for r in self.samples}))

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(sorted({r.modality for r in self.samples}))

    def restricted(self, *, modality: str | None = None,
                   cohorts=None) -> "DatasetManifest":
        """Sub-manifest with only the given modality and/or cohort labels."""
        wanted_cohorts = None if cohorts is None else {canonical_cohort(c) for c in cohorts}
        wanted_modality = None if modality is None else canonical_modality(modality)
        kept = [
            r for r in self.samples
            if (wanted_modality is None or r.modality == wanted_modality)
            and (wanted_cohorts is None or r.cohort in wanted_cohorts)
        ]
        if not kept:
            raise ValueError("restriction leaves no samples")
        return DatasetManifest(
            samples=tuple(kept),
            subject_count=len({r.subject_id for r in kept}),
            feature_dim=self.feature_dim,
        )


def screen_records(raw_records, *, max_per_group: int | None = None):
    """Split records into (valid, diagnostics).

    Checks, per record: non-empty finite features, dimension agreement with
    the first valid record, sample_id uniqueness, and (optionally) that no
    (subject, modality, cohort) group exceeds ``max_per_group`` entries.
    """
    kept: list[SampleRecord] = []
    diagnostics: list[RecordDiagnostic] = []
    if not raw_records:
        diagnostics.append(RecordDiagnostic("<input>", "no records provided"))
        return kept, diagnostics

    expected_dim: int | None = None
    seen_ids: set[str] = set()
    group_counts: dict[tuple[str, str, str], int] = {}
    for rec in raw_records:
        if rec.sample_id in seen_ids:
            diagnostics.append(RecordDiagnostic(rec.sample_id, "duplicate sample_id"))
            continue
        if not rec.features:
            diagnostics.append(RecordDiagnostic(rec.sample_id, "empty feature vector"))
            continue
        bad = [x for x in rec.features if not math.isfinite(x)]
        if bad:
            diagnostics.append(
                RecordDiagnostic(rec.sample_id, f"non-finite feature value {bad[0]!r}")
            )
            continue
        if expected_dim is None:
            expected_dim = len(rec.features)
        elif len(rec.features) != expected_dim:
            diagnostics.append(
                RecordDiagnostic(
                    rec.sample_id,
                    f"feature dimension {len(rec.features)} != expected {expected_dim}",
                )
            )
            continue
        group = (rec.subject_id, rec.modality, rec.cohort)
        count = group_counts.get(group, 0)
        if max_per_group is not None and count >= max_per_group:
            diagnostics.append(
                RecordDiagnostic(
                    rec.sample_id,
                    f"more than {max_per_group} samples for group {group}",
                )
            )
            continue
        group_counts[group] = count + 1
        seen_ids.add(rec.sample_id)
        kept.append(rec)
    return kept, diagnostics


def validate_manifest(raw_records, *, max_per_group: int | None = None) -> DatasetManifest:
    """Validate records into a :class:`DatasetManifest`.

    Raises :class:`ManifestError` carrying a diagnostic for every rejected
    record.  Use :func:`screen_records` directly for a lenient pass that
    drops bad rows instead of failing.
    """
    kept, diagnostics = screen_records(list(raw_records), max_per_group=max_per_group)
    if diagnostics:
        raise ManifestError(diagnostics)
    return DatasetManifest(
        samples=tuple(kept),
        subject_count=len({r.subject_id for r in kept}),
        feature_dim=len(kept[0].features),
    )


def partition_by_cohort(manifest: DatasetManifest) -> dict[str, list[SampleRecord]]:
    """Bucket samples by cohort label.

    Every sample lands in exactly one bucket; bucket keys are sorted so the
    result is independent of input order.
    """
    buckets: dict[str, list[SampleRecord]] = {c: [] for c in manifest.cohorts}
    for rec in manifest.samples:
        buckets[rec.cohort].append(rec)
    return buckets


def partition_by_subject_folds(
    manifest: DatasetManifest, k: int, seed: int
) -> list[list[SampleRecord]]:
    """Split samples into ``k`` subject-disjoint folds.

    Distinct subject ids are sorted, shuffled with ``random.Random(seed)``,
    and dealt round-robin, so fold membership is a deterministic function of
    (subject ids, k, seed) and fold sizes in subjects differ by at most one.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    subjects = sorted({r.subject_id for r in manifest.samples})
    if k > len(subjects):
        raise ValueError(f"k={k} exceeds distinct subject count {len(subjects)}")
    rng = random.Random(seed)
    rng.shuffle(subjects)
    fold_of = {sid: i % k for i, sid in enumerate(subjects)}
    folds: list[list[SampleRecord]] = [[] for _ in range(k)]
    for rec in manifest.samples:
        folds[fold_of[rec.subject_id]].append(rec)
    return folds


def fold_subjects(fold) -> tuple[str, ...]:
    """Sorted distinct subject ids present in one fold."""
    return tuple(sorted({r.subject_id for r in fold}))
