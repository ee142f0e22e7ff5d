"""taxon: supervised log classification.

Tokenization and failure-window extraction, n-gram/TF-IDF features, four
from-scratch classifiers behind one predict interface, grid-searched training
with a portable artifact format, and the training/classification services
plus lifecycle CLI that wrap it all.
"""

from .artifact import (
    PipelineArtifact,
    artifact_digest,
    deserialize_pipeline,
    serialize_pipeline,
)
from .features import (
    FeatureVector,
    VectorizerConfig,
    Vocabulary,
    build_vocabulary,
    compute_idf,
    vectorize,
)
from .models import (
    LabelSet,
    Prediction,
    fit_gaussian_nb,
    fit_linear_svm,
    fit_logistic,
    fit_random_forest,
    predict,
)
from .pipeline import (
    Dataset,
    EvalMetrics,
    GridSearchSpec,
    LabeledExample,
    compute_metrics,
    default_algorithm_grids,
    enumerate_combos,
    evaluate,
    grid_search,
    leaderboard_text,
    split_train_test,
    stratified_folds,
)
from .tokenize import (
    LogSnippet,
    TokenizerConfig,
    extract_failure_window,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "PipelineArtifact",
    "artifact_digest",
    "deserialize_pipeline",
    "serialize_pipeline",
    "FeatureVector",
    "VectorizerConfig",
    "Vocabulary",
    "build_vocabulary",
    "compute_idf",
    "vectorize",
    "LabelSet",
    "Prediction",
    "fit_gaussian_nb",
    "fit_linear_svm",
    "fit_logistic",
    "fit_random_forest",
    "predict",
    "Dataset",
    "EvalMetrics",
    "GridSearchSpec",
    "LabeledExample",
    "compute_metrics",
    "default_algorithm_grids",
    "enumerate_combos",
    "evaluate",
    "grid_search",
    "leaderboard_text",
    "split_train_test",
    "stratified_folds",
    "LogSnippet",
    "TokenizerConfig",
    "extract_failure_window",
    "tokenize",
    "__version__",
]
