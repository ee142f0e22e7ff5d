"""One-vs-rest linear SVMs trained by deterministic full-batch subgradient descent.

Each class gets a binary classifier minimizing mean hinge loss plus
(1/(2C))*||w||^2, with the bias excluded from the penalty. Steps decay as
C/t (the strong-convexity schedule for this objective). Margins convert to
class scores by softmax over the per-class decision values; that calibration
is a documented heuristic, not a probability estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import NonFinite
from ..features import FeatureVector
from ._common import as_matrix, check_training_inputs, softmax

__all__ = ["LinearSVMParams", "fit_linear_svm", "hinge_objective_and_gradient"]


@dataclass(frozen=True)
class LinearSVMParams:
    """One-vs-rest weight vectors (K, P), biases (K,), and the penalty C."""

    weights: np.ndarray
    biases: np.ndarray
    C: float

    @property
    def n_classes(self) -> int:
        return len(self.biases)

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.biases

    def class_scores(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.decision_values(x))


def hinge_objective_and_gradient(
    w: np.ndarray, b: float, X: np.ndarray, y_pm: np.ndarray, C: float
) -> tuple[float, np.ndarray, float]:
    """Binary hinge objective and a subgradient at (w, b).

    y_pm holds +/-1 targets. At margins exactly equal to 1 the zero branch of
    the max is chosen; elsewhere the subgradient is the true gradient, which
    is what finite-difference checks away from the kink compare against.
    """
    n = len(X)
    margins = y_pm * (X @ w + b)
    hinge = np.maximum(0.0, 1.0 - margins)
    objective = float(hinge.mean()) + float(w @ w) / (2.0 * C)
    viol = margins < 1.0
    grad_w = w / C - (X[viol].T @ y_pm[viol]) / n
    grad_b = -float(y_pm[viol].sum()) / n
    return objective, grad_w, grad_b


def fit_linear_svm(
    X: Union[np.ndarray, Sequence[FeatureVector]],
    y: Sequence[int],
    C: float = 1.0,
    max_iter: int = 2000,
    tol: float = 1e-8,
    seed: int = 0,
    n_classes: Optional[int] = None,
) -> LinearSVMParams:
    """Train K one-vs-rest hinge-loss classifiers.

    Full-batch from zero init, so the run is deterministic; ``seed`` is kept
    for interface symmetry. Stops a class's iteration when the update
    max-norm drops below ``tol``. Raises NonFinite if the objective leaves
    the reals.
    """
    if C <= 0.0:
        raise ValueError(f"C must be > 0, got {C}")
    X = as_matrix(X)
    if not np.isfinite(X).all():
        raise NonFinite("training features contain non-finite values")
    y = np.asarray(y, dtype=int)
    k = check_training_inputs(X, y, n_classes)
    n, p = X.shape
    weights = np.zeros((k, p))
    biases = np.zeros(k)
    for c in range(k):
        y_pm = np.where(y == c, 1.0, -1.0)
        w = np.zeros(p)
        b = 0.0
        for t in range(1, max_iter + 1):
            objective, grad_w, grad_b = hinge_objective_and_gradient(w, b, X, y_pm, C)
            if not np.isfinite(objective):
                raise NonFinite(f"svm objective became non-finite ({objective})")
            step = C / t
            w_new = w - step * grad_w
            b_new = b - step * grad_b
            delta = max(np.abs(w_new - w).max(), abs(b_new - b))
            w, b = w_new, b_new
            if delta < tol:
                break
        weights[c] = w
        biases[c] = b
    return LinearSVMParams(weights=weights, biases=biases, C=C)
