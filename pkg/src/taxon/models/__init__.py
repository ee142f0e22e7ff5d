"""Classifier implementations: Gaussian NB, logistic regression, linear SVM, random forest.

Each algorithm exposes a fit_* function returning an immutable params object,
and every params object scores a dense feature vector into per-class scores.
Training is deterministic under a fixed seed so metric comparisons between
model generations are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ..errors import DimensionMismatch
from ..features import FeatureVector
from ._common import as_matrix
from .gaussian_nb import GaussianNBParams, fit_gaussian_nb
from .linear_svm import LinearSVMParams, fit_linear_svm
from .logistic import LogisticParams, fit_logistic
from .forest import RandomForestParams, Tree, fit_random_forest

__all__ = [
    "LabelSet",
    "Prediction",
    "ModelParams",
    "predict",
    "GaussianNBParams",
    "LogisticParams",
    "LinearSVMParams",
    "RandomForestParams",
    "Tree",
    "fit_gaussian_nb",
    "fit_logistic",
    "fit_linear_svm",
    "fit_random_forest",
    "as_matrix",
]

ModelParams = Union[GaussianNBParams, LogisticParams, LinearSVMParams, RandomForestParams]


@dataclass(frozen=True)
class LabelSet:
    """Ordered distinct category strings; the index is the class id."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.labels, tuple):
            object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise ValueError("label set must be non-empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate labels in {self.labels}")

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def index_of(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class Prediction:
    """One classified input: argmax label, its score, and the full distribution."""

    label: str
    confidence: float
    class_scores: tuple[float, ...]


def predict(params: ModelParams, x: FeatureVector, labels: LabelSet) -> Prediction:
    """Score ``x`` under ``params`` and pick the argmax class.

    class_scores are normalized to sum to 1; argmax ties break toward the
    lowest class id. Pure: identical inputs give identical output.
    """
    if x.dimension != params.dimension:
        raise DimensionMismatch(
            f"feature dimension {x.dimension} != model dimension {params.dimension}"
        )
    if len(labels) != params.n_classes:
        raise DimensionMismatch(
            f"label set size {len(labels)} != model class count {params.n_classes}"
        )
    scores = params.class_scores(x.to_dense())
    scores = scores / scores.sum()
    best = int(np.argmax(scores))
    return Prediction(
        label=labels.labels[best],
        confidence=float(scores[best]),
        class_scores=tuple(float(s) for s in scores),
    )
