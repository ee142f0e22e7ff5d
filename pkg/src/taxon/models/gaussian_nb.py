"""Gaussian Naive Bayes over dense feature vectors.

Per-class feature distributions are independent Gaussians; the posterior is
prior times the product of per-feature densities, evaluated in log space.
Dense per-class statistics are acceptable at desk scale; max_df pruning is the
intended mitigation for large vocabularies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..features import FeatureVector
from ._common import as_matrix, check_training_inputs, softmax

__all__ = ["GaussianNBParams", "fit_gaussian_nb"]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianNBParams:
    """Per-class priors, feature means and variances, plus the smoothing used."""

    priors: np.ndarray      # (K,)
    means: np.ndarray       # (K, P)
    variances: np.ndarray   # (K, P), floored strictly above zero
    epsilon: float

    @property
    def n_classes(self) -> int:
        return len(self.priors)

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    def class_log_joint(self, x: np.ndarray) -> np.ndarray:
        """log prior + summed per-feature Gaussian log densities, per class."""
        diff = x[np.newaxis, :] - self.means
        log_like = -0.5 * np.sum(
            _LOG_2PI + np.log(self.variances) + diff * diff / self.variances, axis=1
        )
        return np.log(self.priors) + log_like

    def class_scores(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.class_log_joint(x))


def fit_gaussian_nb(
    X: Union[np.ndarray, Sequence[FeatureVector]],
    y: Sequence[int],
    epsilon: float = 1e-9,
    n_classes: Optional[int] = None,
) -> GaussianNBParams:
    """Estimate per-class Gaussian statistics from labelled vectors.

    Variances are floored at epsilon times the largest per-feature variance of
    the whole dataset (or epsilon itself when that is zero) so densities stay
    finite on constant features. Priors are the class frequencies.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    X = as_matrix(X)
    y = np.asarray(y, dtype=int)
    k = check_training_inputs(X, y, n_classes)
    n, p = X.shape
    max_var = float(np.var(X, axis=0).max()) if p else 0.0
    floor = epsilon * (max_var if max_var > 0.0 else 1.0)
    priors = np.empty(k)
    means = np.empty((k, p))
    variances = np.empty((k, p))
    for c in range(k):
        rows = X[y == c]
        priors[c] = len(rows) / n
        means[c] = rows.mean(axis=0)
        variances[c] = np.maximum(rows.var(axis=0), floor)
    return GaussianNBParams(priors=priors, means=means, variances=variances, epsilon=epsilon)
