"""Nearest-centroid classifier over embeddings.

A deliberately simple, deterministic stand-in for a trained feature
extractor: enrolment averages each key's feature vectors into a centroid,
and probes are scored against every centroid with cosine similarity or
negated euclidean distance.  The same model serves both identification
(keys are subject ids) and classification (keys are cohort labels).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

METRICS = ("cosine", "euclidean")


def _as_probe(features, dim: int) -> np.ndarray:
    probe = np.asarray(features, dtype=np.float64)
    if probe.ndim != 1 or probe.shape[0] != dim:
        raise ValueError(f"probe has shape {probe.shape}, expected ({dim},)")
    if not np.all(np.isfinite(probe)):
        raise ValueError("probe contains non-finite values")
    return probe


@dataclass(frozen=True, eq=False)
class CentroidModel:
    """Per-key mean embeddings plus the scoring metric."""

    keys: tuple[str, ...]
    centroids: np.ndarray  # shape (len(keys), dim), float64
    metric: str

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids contain non-finite values")

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def scores(self, features) -> np.ndarray:
        """Similarity of the probe to every centroid, in key order."""
        probe = _as_probe(features, self.dim)
        if self.metric == "cosine":
            norms = np.linalg.norm(self.centroids, axis=1) * np.linalg.norm(probe)
            dots = self.centroids @ probe
            # zero-norm pairs get similarity 0 rather than a divide error
            return np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)
        deltas = self.centroids - probe
        return -np.sqrt(np.sum(deltas * deltas, axis=1))

    def rank(self, features) -> list[tuple[str, float]]:
        """All keys scored and ordered by (score desc, key asc)."""
        scores = self.scores(features)
        return sorted(
            ((key, float(s)) for key, s in zip(self.keys, scores)),
            key=lambda kv: (-kv[1], kv[0]),
        )

    def classify(self, features) -> dict[str, float]:
        """Per-key similarity map (same scores as :meth:`rank`, unordered)."""
        scores = self.scores(features)
        return {key: float(s) for key, s in zip(self.keys, scores)}


def fit_centroids(samples, key: str = "subject", metric: str = "cosine") -> CentroidModel:
    """Average each key group's feature vectors into a centroid.

    ``key`` selects the grouping attribute: "subject" for identification
    galleries, "cohort" for label models.
    """
    if key not in ("subject", "cohort"):
        raise ValueError(f"key must be 'subject' or 'cohort', got {key!r}")
    attr = "subject_id" if key == "subject" else "cohort"
    groups: dict[str, list] = {}
    dim = None
    for rec in samples:
        feats = rec.features
        if dim is None:
            dim = len(feats)
        elif len(feats) != dim:
            raise ValueError(
                f"sample {rec.sample_id!r} has dimension {len(feats)}, expected {dim}"
            )
        groups.setdefault(getattr(rec, attr), []).append(feats)
    if not groups:
        raise ValueError("cannot fit a centroid model on an empty sample list")
    keys = tuple(sorted(groups))
    centroids = np.array(
        [np.mean(np.asarray(groups[k], dtype=np.float64), axis=0) for k in keys]
    )
    return CentroidModel(keys=keys, centroids=centroids, metric=metric)


@dataclass(frozen=True)
class CentroidClassifier:
    """Pluggable classifier front-end for the evaluation protocols.

    ``metric`` is the scoring function used when the classifier is applied
    directly.  When ``search`` is non-empty, :meth:`variants` exposes one
    fixed classifier per listed metric so a protocol's validation stage can
    pick among them; otherwise the classifier is its only variant.
    """

    metric: str = "cosine"
    search: tuple[str, ...] = ()

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        for m in self.search:
            if m not in METRICS:
                raise ValueError(f"unknown metric {m!r}")

    @property
    def name(self) -> str:
        return self.metric

    def fit(self, samples, key: str = "subject") -> CentroidModel:
        return fit_centroids(samples, key=key, metric=self.metric)

    def variants(self) -> tuple["CentroidClassifier", ...]:
        if not self.search:
            return (self,)
        return tuple(replace(self, metric=m, search=()) for m in self.search)


def default_classifier(metric: str = "auto") -> CentroidClassifier:
    """CLI-facing constructor: "auto" searches both metrics, anything else
    pins a single one."""
    if metric == "auto":
        return CentroidClassifier(metric="cosine", search=METRICS)
    return CentroidClassifier(metric=metric)
