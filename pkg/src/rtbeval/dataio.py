"""Manifest and embeddings file formats.

Manifest: UTF-8 delimited text with a required header row
``sample_id,subject_id,modality,cohort,features``.  The features column
holds either the vector inline (whitespace-separated numbers) or the path,
relative to the manifest, of an embeddings file keyed by sample_id.

Embeddings: one JSON object per line, ``{"features": [...], "sample_id": "..."}``,
with the feature dimension declared in a sidecar ``<file>.meta.json`` block.
Readers enforce the declared dimension row by row so a bad vector is
reported by sample_id and line number.

Errors found while reading or joining files raise :class:`ParseError`
(carrying the location); record-level invariant violations are left to
:func:`rtbeval.datamodel.validate_manifest`.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

from .datamodel import DatasetManifest, SampleRecord

MANIFEST_HEADER = ("sample_id", "subject_id", "modality", "cohort", "features")
MANIFEST_NAME = "manifest.csv"
EMBEDDINGS_NAME = "embeddings.jsonl"
DATASET_SUMMARY_NAME = "dataset.json"


class ParseError(Exception):
    """A file could not be parsed or joined; message carries the location."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


def _meta_path(embeddings_path) -> Path:
    return Path(str(embeddings_path) + ".meta.json")


def read_embeddings(path) -> dict[str, tuple[float, ...]]:
    """Load an embeddings file into a sample_id -> vector map.

    If the sidecar metadata block exists, every row must match its declared
    feature dimension.
    """
    path = Path(path)
    declared_dim = None
    meta_path = _meta_path(path)
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            declared_dim = int(meta["feature_dim"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(meta_path, None, f"bad metadata sidecar: {exc}") from exc

    vectors: dict[str, tuple[float, ...]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sample_id = obj["sample_id"]
                features = tuple(float(x) for x in obj["features"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"bad embeddings record: {exc}") from exc
            if sample_id in vectors:
                raise ParseError(path, lineno, f"duplicate sample_id {sample_id!r}")
            if declared_dim is not None and len(features) != declared_dim:
                raise ParseError(
                    path,
                    lineno,
                    f"sample {sample_id!r} has dimension {len(features)}, "
                    f"sidecar declares {declared_dim}",
                )
            vectors[sample_id] = features
    if not vectors:
        raise ParseError(path, None, "embeddings file is empty")
    return vectors


def _parse_inline(text: str) -> tuple[float, ...] | None:
    tokens = text.split()
    if not tokens:
        return None
    try:
        return tuple(float(t) for t in tokens)
    except ValueError:
        return None


def read_manifest(manifest_path, embeddings_path=None) -> list[SampleRecord]:
    """Parse a manifest file into sample records.

    ``embeddings_path``, when given, overrides any per-row embeddings
    reference.  Returns raw records; run them through ``validate_manifest``.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    cache: dict[str, dict[str, tuple[float, ...]]] = {}

    def vectors_for(ref: str, lineno: int) -> dict[str, tuple[float, ...]]:
        if embeddings_path is not None:
            # explicit override resolves as given, not against the manifest
            resolved = str(Path(embeddings_path))
        elif not ref:
            raise ParseError(manifest_path, lineno, "features column is empty")
        else:
            resolved = str(Path(ref) if os.path.isabs(ref) else base / ref)
        if resolved not in cache:
            if not Path(resolved).exists():
                raise ParseError(
                    manifest_path, lineno, f"embeddings file not found: {ref!r}"
                )
            cache[resolved] = read_embeddings(resolved)
        return cache[resolved]

    records: list[SampleRecord] = []
    with open(manifest_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(manifest_path, None, "missing header row") from None
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ParseError(
                manifest_path,
                1,
                f"header must be {','.join(MANIFEST_HEADER)!r}, got {','.join(header)!r}",
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ParseError(
                    manifest_path, lineno, f"expected 5 columns, got {len(row)}"
                )
            sample_id, subject_id, modality, cohort, feature_field = (
                c.strip() for c in row
            )
            features = _parse_inline(feature_field)
            if features is None:
                vectors = vectors_for(feature_field, lineno)
                if sample_id not in vectors:
                    raise ParseError(
                        manifest_path,
                        lineno,
                        f"sample {sample_id!r} not found in embeddings file",
                    )
                features = vectors[sample_id]
            try:
                records.append(
                    SampleRecord(
                        sample_id=sample_id,
                        subject_id=subject_id,
                        modality=modality,
                        cohort=cohort,
                        features=features,
                    )
                )
            except ValueError as exc:
                raise ParseError(manifest_path, lineno, str(exc)) from exc
    if not records:
        raise ParseError(manifest_path, None, "manifest has no sample rows")
    return records


def write_embeddings(manifest: DatasetManifest, path) -> None:
    """Write one JSON record per sample plus the sidecar metadata block."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in manifest.samples:
            fh.write(
                json.dumps(
                    {"features": list(rec.features), "sample_id": rec.sample_id},
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )
    meta = {
        "count": len(manifest.samples),
        "feature_dim": manifest.feature_dim,
        "schema_version": 1,
    }
    _meta_path(path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_manifest(manifest: DatasetManifest, path, features_ref: str) -> None:
    """Write the manifest table; every row references ``features_ref``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for rec in manifest.samples:
            writer.writerow(
                [rec.sample_id, rec.subject_id, rec.modality, rec.cohort, features_ref]
            )


def write_dataset(manifest: DatasetManifest, directory) -> Path:
    """Persist a validated dataset as manifest + embeddings + summary."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_embeddings(manifest, directory / EMBEDDINGS_NAME)
    write_manifest(manifest, directory / MANIFEST_NAME, EMBEDDINGS_NAME)
    summary = {
        "cohorts": list(manifest.cohorts),
        "feature_dim": manifest.feature_dim,
        "modalities": list(manifest.modalities),
        "sample_count": len(manifest.samples),
        "schema_version": 1,
        "subject_count": manifest.subject_count,
    }
    (directory / DATASET_SUMMARY_NAME).write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def read_dataset_records(path) -> list[SampleRecord]:
    """Read records from a dataset directory or a manifest file path."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    if not manifest_path.exists():
        raise ParseError(manifest_path, None, "manifest file not found")
    return read_manifest(manifest_path)
