"""Reliability, risk, and trust-change evaluation for biometric decision support.

The package evaluates identification and classification pipelines over
precomputed embeddings: closed-set identification reliability (TPIR / CMC),
multi-class classification quality, cost-weighted risk of error, trust-change
deltas between operating conditions, and cohort-partitioned reliability
matrices that expose dataset bias.
"""

__version__ = "0.1.0"

from .datamodel import (
    DatasetManifest,
    ManifestError,
    SampleRecord,
    partition_by_cohort,
    partition_by_subject_folds,
    validate_manifest,
)
from .metrics import (
    ClassificationTrial,
    ConfusionMatrix,
    IdentificationTrial,
    MetricSummary,
    RiskParams,
    accuracy,
    aggregate_mean_std,
    bias_trust,
    cmc_curve,
    cohort_decomposition,
    confusion_matrix,
    rank1_prediction,
    risk_error,
    sensitivity_macro,
    specificity_macro,
    tpir,
)
from .classifier import CentroidClassifier, CentroidModel
from .protocols import (
    ProtocolError,
    RankedReliabilityCube,
    ReliabilityMatrix,
    cross_modality_identification,
    emotion_fold_identification,
    subject_fold_classification,
    trust_delta_report,
)
from .synthetic import SynthConfig, generate
from .report import EvaluationReport
