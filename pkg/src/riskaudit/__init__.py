"""Group-fairness auditing for risk-scoring pipelines.

The library audits three pipeline stages — training data, model
predictions, and post-processed risk tiers — and ships a seeded synthetic
cohort generator so every audit is reproducible at desk scale.
"""

from .amplification import (
    AmplificationRecord,
    StageDisparity,
    audit_amplification,
    conditional_tier_rate,
    stage_comparison,
)
from .core import UNDEFINED, AuditError, DataError, ValidationError, is_defined
from .dataset import (
    Cohort,
    Record,
    Schema,
    SplitSpec,
    chronological_split,
    filter_population,
    load_cohort,
    save_cohort,
)
from .metrics import (
    CalibrationReport,
    ConfusionCounts,
    GroupPairTable,
    PredictionSet,
    aod,
    brier,
    calibration_error,
    chi_square_independence,
    confusion,
    di,
    eod,
    load_predictions,
    pairwise_table,
    rates,
    save_predictions,
    spd,
    two_proportion_ztest,
)
from .model import (
    DesignMatrix,
    ScorerParams,
    design_matrix,
    predict_proba,
    smote,
    train_reference,
)
from .report import (
    AuditConfig,
    AuditReport,
    histogram_data,
    pairwise_tables,
    render_markdown,
    run_audit,
    table_one,
)
from .synth import CellSpec, SynthSpec, default_preset, generate_cohort, synth_schema, synth_scores
from .tiering import (
    TierAssignment,
    TierQuotas,
    assign_tiers,
    compute_thresholds,
    save_tiers,
    tier_summary,
)

__version__ = "0.1.0"

__all__ = [
    "AmplificationRecord",
    "AuditConfig",
    "AuditError",
    "AuditReport",
    "CalibrationReport",
    "CellSpec",
    "Cohort",
    "ConfusionCounts",
    "DataError",
    "DesignMatrix",
    "GroupPairTable",
    "PredictionSet",
    "Record",
    "Schema",
    "ScorerParams",
    "SplitSpec",
    "StageDisparity",
    "SynthSpec",
    "TierAssignment",
    "TierQuotas",
    "UNDEFINED",
    "ValidationError",
    "aod",
    "assign_tiers",
    "audit_amplification",
    "brier",
    "calibration_error",
    "chi_square_independence",
    "chronological_split",
    "compute_thresholds",
    "conditional_tier_rate",
    "confusion",
    "default_preset",
    "design_matrix",
    "di",
    "eod",
    "filter_population",
    "generate_cohort",
    "histogram_data",
    "is_defined",
    "load_cohort",
    "load_predictions",
    "pairwise_table",
    "pairwise_tables",
    "predict_proba",
    "rates",
    "render_markdown",
    "run_audit",
    "save_cohort",
    "save_predictions",
    "save_tiers",
    "smote",
    "spd",
    "stage_comparison",
    "synth_schema",
    "synth_scores",
    "table_one",
    "tier_summary",
    "train_reference",
    "two_proportion_ztest",
]
