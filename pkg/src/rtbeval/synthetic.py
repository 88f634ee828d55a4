"""Seeded synthetic embedding datasets with controllable structure.

Samples are isotropic Gaussian clusters around per-(subject, modality)
centers.  Three dials shape the difficulty:

* ``modality_correlation`` couples subject centers across modalities
  (1 = identical centers, 0 = independent), via a mixing factor of the
  correlation matrix applied to per-modality latent draws;
* ``cohort_noise`` widens one cohort's within-cluster spread;
* ``cohort_separation`` pushes a cohort's samples along a fixed random
  direction, making cohorts themselves classifiable.

Generation is a pure function of the config: per-subject and per-cohort
RNG streams are derived from (seed, index), so output is byte-identical
regardless of generation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .datamodel import (
    DatasetManifest,
    SampleRecord,
    canonical_cohort,
    canonical_modality,
    validate_manifest,
)


class ConfigError(ValueError):
    """Invalid synthetic-dataset configuration."""


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``subject_separation`` is the typical distance between subject centers
    in units of the base within-cluster sigma (``noise_sigma``); a cohort
    listed in ``cohort_noise`` gets its sigma scaled by (1 + value), and one
    in ``cohort_separation`` is offset from the origin by that many sigmas.
    ``modality_correlation`` maps modality pairs to center correlations in
    [0, 1]; unlisted pairs are independent.
    """

    subject_count: int
    cohorts: tuple[str, ...]
    modalities: tuple[str, ...]
    feature_dim: int
    subject_separation: float = 16.0
    noise_sigma: float = 1.0
    modality_correlation: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    cohort_noise: Mapping[str, float] = field(default_factory=dict)
    cohort_separation: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        cohorts = tuple(canonical_cohort(c) for c in self.cohorts)
        modalities = tuple(canonical_modality(m) for m in self.modalities)
        object.__setattr__(self, "cohorts", cohorts)
        object.__setattr__(self, "modalities", modalities)
        if self.subject_count < 1:
            raise ConfigError("subject_count must be >= 1")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        if len(set(cohorts)) != len(cohorts) or not cohorts:
            raise ConfigError("cohorts must be non-empty and distinct")
        if len(set(modalities)) != len(modalities) or not modalities:
            raise ConfigError("modalities must be non-empty and distinct")
        if self.subject_separation < 0 or self.noise_sigma < 0:
            raise ConfigError("scales must be >= 0")
        object.__setattr__(
            self,
            "cohort_noise",
            {canonical_cohort(c): float(v) for c, v in self.cohort_noise.items()},
        )
        object.__setattr__(
            self,
            "cohort_separation",
            {canonical_cohort(c): float(v) for c, v in self.cohort_separation.items()},
        )
        for mapping, name in ((self.cohort_noise, "cohort_noise"),
                              (self.cohort_separation, "cohort_separation")):
            for c, v in mapping.items():
                if c not in cohorts:
                    raise ConfigError(f"{name} names unknown cohort {c!r}")
                if v < 0 or not np.isfinite(v):
                    raise ConfigError(f"{name}[{c!r}] must be a finite value >= 0")
        object.__setattr__(
            self, "modality_correlation", self._canonical_correlation()
        )
        # fail early on a non-PSD matrix
        self.correlation_matrix()

    def _canonical_correlation(self):
        known = set(self.modalities)
        table: dict[str, dict[str, float]] = {}
        for a, row in self.modality_correlation.items():
            a = canonical_modality(a)
            for b, v in row.items():
                b = canonical_modality(b)
                if a not in known or b not in known:
                    raise ConfigError(f"correlation names unknown modality ({a}, {b})")
                v = float(v)
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"correlation({a}, {b}) out of [0, 1]: {v!r}")
                if a == b and v != 1.0:
                    raise ConfigError(f"correlation({a}, {a}) must be 1")
                previous = table.get(a, {}).get(b)
                if previous is not None and previous != v:
                    raise ConfigError(f"conflicting correlation for ({a}, {b})")
                table.setdefault(a, {})[b] = v
                table.setdefault(b, {})[a] = v
        return table

    def correlation_matrix(self) -> np.ndarray:
        """Full symmetric correlation matrix in modality order."""
        n = len(self.modalities)
        matrix = np.eye(n)
        for i, a in enumerate(self.modalities):
            for j, b in enumerate(self.modalities):
                if i != j:
                    matrix[i, j] = self.modality_correlation.get(a, {}).get(b, 0.0)
        eigenvalues = np.linalg.eigvalsh(matrix)
        if eigenvalues.min() < -1e-8:
            raise ConfigError(
                "modality_correlation is not positive semidefinite "
                f"(min eigenvalue {eigenvalues.min():.3e})"
            )
        return matrix

    def to_dict(self) -> dict:
        correlation = {}
        for i, a in enumerate(self.modalities):
            for b in self.modalities[i + 1 :]:
                v = self.modality_correlation.get(a, {}).get(b, 0.0)
                if v:
                    correlation.setdefault(a, {})[b] = v
        return {
            "subject_count": self.subject_count,
            "cohorts": list(self.cohorts),
            "modalities": list(self.modalities),
            "feature_dim": self.feature_dim,
            "subject_separation": self.subject_separation,
            "noise_sigma": self.noise_sigma,
            "modality_correlation": correlation,
            "cohort_noise": dict(self.cohort_noise),
            "cohort_separation": dict(self.cohort_separation),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        for required in ("subject_count", "cohorts", "modalities", "feature_dim"):
            if required not in obj:
                raise ConfigError(f"config is missing {required!r}")
        kwargs = dict(obj)
        kwargs["cohorts"] = tuple(kwargs["cohorts"])
        kwargs["modalities"] = tuple(kwargs["modalities"])
        return cls(**kwargs)


def _mixing_factor(config: SynthConfig) -> np.ndarray:
    """Factor L with L @ L.T equal to the correlation matrix.

    Rows for modality pairs with correlation exactly 1 are made identical,
    so fully coupled modalities share bit-identical centers.
    """
    matrix = config.correlation_matrix()
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    factor = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    for j in range(len(config.modalities)):
        for i in range(j):
            if matrix[i, j] == 1.0:
                factor[j] = factor[i]
                break
    return factor


def _subject_ids(count: int) -> list[str]:
    width = max(3, len(str(count)))
    return [f"s{i + 1:0{width}d}" for i in range(count)]


def generate(config: SynthConfig) -> DatasetManifest:
    """Generate one sample per (subject, modality, cohort).

    Per subject: latent standard-normal draws per modality are mixed through
    the correlation factor into per-modality centers, scaled so the typical
    center-to-center distance is ``subject_separation`` sigmas.  Each sample
    adds the cohort offset and isotropic noise scaled by
    ``noise_sigma * (1 + cohort_noise[cohort])``.
    """
    dim = config.feature_dim
    factor = _mixing_factor(config)
    center_scale = config.subject_separation * config.noise_sigma / np.sqrt(2 * dim)

    offsets = {}
    for ci, cohort in enumerate(config.cohorts):
        distance = config.cohort_separation.get(cohort, 0.0)
        if distance > 0:
            rng = np.random.default_rng([config.seed, 1, ci])
            direction = rng.standard_normal(dim)
            direction /= np.linalg.norm(direction)
            offsets[cohort] = distance * config.noise_sigma * direction
        else:
            offsets[cohort] = np.zeros(dim)

    records: list[SampleRecord] = []
    for si, subject in enumerate(_subject_ids(config.subject_count)):
        rng = np.random.default_rng([config.seed, 0, si])
        latents = rng.standard_normal((len(config.modalities), dim))
        centers = center_scale * (factor @ latents)
        for mi, modality in enumerate(config.modalities):
            for cohort in config.cohorts:
                sigma = config.noise_sigma * (1.0 + config.cohort_noise.get(cohort, 0.0))
                noise = rng.standard_normal(dim)
                features = centers[mi] + offsets[cohort] + sigma * noise
                records.append(
                    SampleRecord(
                        sample_id=f"{subject}_{modality}_{cohort}",
                        subject_id=subject,
                        modality=modality,
                        cohort=cohort,
                        features=tuple(float(x) for x in features),
                    )
                )
    return validate_manifest(records)
