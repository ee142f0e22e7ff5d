"""Shared helpers for the model implementations."""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from ..errors import MissingClass
from ..features import FeatureVector, stack


def as_matrix(X: Union[np.ndarray, Sequence[FeatureVector]]) -> np.ndarray:
    """Accept either a dense (n, P) matrix or a batch of FeatureVectors."""
    if isinstance(X, np.ndarray):
        return np.asarray(X, dtype=float)
    return stack(X)


def check_training_inputs(
    X: np.ndarray, y: np.ndarray, n_classes: Optional[int]
) -> int:
    """Validate shapes and class coverage; return the class count.

    Every class id in 0..K-1 must appear at least once, otherwise the declared
    label has no examples and the fit cannot proceed.
    """
    if X.ndim != 2:
        raise ValueError(f"X must be 2-dimensional, got shape {X.shape}")
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} entries")
    if len(X) == 0:
        raise ValueError("cannot fit on an empty dataset")
    present = np.unique(y)
    k = n_classes if n_classes is not None else int(present.max()) + 1
    missing = sorted(set(range(k)) - set(int(c) for c in present))
    if missing:
        raise MissingClass(f"classes without training examples: {missing}")
    return k


def normalized_scores(raw: np.ndarray) -> np.ndarray:
    """Scale non-negative raw scores into a distribution summing to 1."""
    total = raw.sum()
    if total <= 0.0 or not np.isfinite(total):
        return np.full(raw.shape, 1.0 / len(raw))
    return raw / total


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
