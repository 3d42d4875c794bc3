"""Performance-aware evaluation of out-of-distribution detectors.

Detectors are scored by the expected performance drop (EPD) they leave on a
downstream model, next to AUROC, AUPR and FPR at a fixed TPR.
"""

__version__ = "0.1.0"

from .exceptions import EmptyInputError, PoodError, SchemaError, ValidationError
from .metrics import (
    BootstrapInterval,
    CorrelationResult,
    DetectionMetrics,
    EpdResult,
    aupr,
    auroc,
    bootstrap_ci,
    cohort_epd,
    detection_metrics,
    epd,
    fpr_at_tpr,
    fpr_at_tpr_plus,
    spearman,
)
from .records import (
    ID_COHORT,
    Polarity,
    ReferenceScore,
    ReferenceSource,
    SampleRecord,
    ScoreTable,
    compute_reference,
    emit_table,
    ingest_table,
)
from .thresholding import (
    Decision,
    PolicyKind,
    Threshold,
    ThresholdDetector,
    ThresholdPolicy,
    decide,
    fit_threshold,
)
