"""Class unlearning for frozen image-text embedding spaces.

Builds closed-form linear transforms that suppress designated classes in
a joint embedding space while preserving the rest, and evaluates the
result with before/after zero-shot accuracies and a membership-inference
score.  No model weights are ever touched and no retraining happens;
everything operates on exported embedding matrices.
"""

from .classifier import SimilarityScores, accuracy, classify
from .evaluation import (
    EvaluationReport,
    ReportProvenance,
    SweepResult,
    ablation_grid,
    evaluate_unlearning,
    mia_score,
    reports_from_json,
    reports_to_csv,
    reports_to_json,
    reports_to_table,
    split_classes,
    sweep,
    write_reports,
)
from .oracle import (
    NonConvergenceError,
    ObjectiveValue,
    finite_difference_gradient,
    gradient,
    minimize,
    objective,
)
from .projections import (
    ComponentConfigError,
    DegenerateFeatureError,
    ProjectionMatrix,
    Provenance,
    RegularizationConfig,
    ablation_matrix,
    apply_projection,
    ccup_matrix,
    load_projection,
    nullspace_projector,
    partial_projector,
    save_projection,
)
from .store import (
    BadMagicError,
    ClassManifest,
    EmbeddingIOError,
    EmbeddingMatrix,
    LabeledDataset,
    ManifestMismatchError,
    TruncatedPayloadError,
    load_embeddings_csv,
    load_labels,
    normalize_columns,
    partition_columns,
    read_emb1,
    read_embeddings,
    save_labels,
    write_emb1,
    write_embeddings,
)
from .synthetic import (
    InfeasibleSpecError,
    SyntheticSpec,
    UnsupportedConfigurationError,
    generate,
    oracle_retention_bound,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "ClassManifest",
    "ComponentConfigError",
    "DegenerateFeatureError",
    "EmbeddingIOError",
    "EmbeddingMatrix",
    "EvaluationReport",
    "InfeasibleSpecError",
    "LabeledDataset",
    "ManifestMismatchError",
    "NonConvergenceError",
    "ObjectiveValue",
    "ProjectionMatrix",
    "Provenance",
    "RegularizationConfig",
    "ReportProvenance",
    "SimilarityScores",
    "SweepResult",
    "SyntheticSpec",
    "TruncatedPayloadError",
    "UnsupportedConfigurationError",
    "ablation_grid",
    "ablation_matrix",
    "accuracy",
    "apply_projection",
    "ccup_matrix",
    "classify",
    "evaluate_unlearning",
    "finite_difference_gradient",
    "generate",
    "gradient",
    "load_embeddings_csv",
    "load_labels",
    "load_projection",
    "mia_score",
    "minimize",
    "normalize_columns",
    "nullspace_projector",
    "objective",
    "oracle_retention_bound",
    "partial_projector",
    "partition_columns",
    "read_emb1",
    "read_embeddings",
    "save_labels",
    "save_projection",
    "split_classes",
    "sweep",
    "write_emb1",
    "write_embeddings",
    "write_reports",
]
