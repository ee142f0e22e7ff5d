"""Multinomial logistic regression trained by deterministic proximal gradient.

The smooth part (mean cross-entropy) takes full-batch gradient steps of size
1/L, where L is a safe upper bound on its gradient's Lipschitz constant; the
penalty is applied as a proximal map (closed-form shrinkage for L2,
soft-thresholding for L1). That combination makes the composite objective
non-increasing at every iteration. Biases are never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import NonFinite
from ..features import FeatureVector
from ._common import as_matrix, check_training_inputs, softmax

__all__ = ["LogisticParams", "fit_logistic", "loss_and_gradient", "penalty_value"]

_REG_KINDS = ("none", "l1", "l2")


@dataclass(frozen=True)
class LogisticParams:
    """Weight matrix (K, P), bias vector (K,), and the penalty trained with."""

    weights: np.ndarray
    biases: np.ndarray
    reg: str
    strength: float

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


def penalty_value(W: np.ndarray, reg: str, strength: float) -> float:
    """Penalty term of the objective: 0.5*lam*sum(W^2) for L2, lam*sum(|W|) for L1."""
    if reg == "l2":
        return 0.5 * strength * float(np.sum(W * W))
    if reg == "l1":
        return strength * float(np.sum(np.abs(W)))
    return 0.0


def loss_and_gradient(
    W: np.ndarray,
    b: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    reg: str = "none",
    strength: float = 0.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus penalty, with its analytic gradient.

    The L1 gradient uses sign(W), valid wherever no weight sits exactly at
    zero; finite-difference checks should avoid that set.
    """
    n = len(X)
    Z = X @ W.T + b
    Zs = Z - Z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(Zs).sum(axis=1))
    log_probs = Zs - log_norm[:, np.newaxis]
    ce = -float(log_probs[np.arange(n), y].mean())
    probs = np.exp(log_probs)
    G = probs
    G[np.arange(n), y] -= 1.0
    G /= n
    grad_W = G.T @ X
    grad_b = G.sum(axis=0)
    loss = ce + penalty_value(W, reg, strength)
    if reg == "l2":
        grad_W = grad_W + strength * W
    elif reg == "l1":
        grad_W = grad_W + strength * np.sign(W)
    return loss, grad_W, grad_b


def _smooth_lipschitz_bound(X: np.ndarray) -> float:
    """Upper bound on the cross-entropy gradient Lipschitz constant.

    L <= 0.5 * sigma_max([X, 1])^2 / n; sigma_max^2 estimated by power
    iteration with a 10% safety margin.
    """
    A = np.hstack([X, np.ones((len(X), 1))])
    v = np.full(A.shape[1], 1.0 / np.sqrt(A.shape[1]))
    eig = 0.0
    for _ in range(60):
        v = A.T @ (A @ v)
        eig = float(np.linalg.norm(v))
        if eig == 0.0:
            break
        v /= eig
    return max(0.5 * 1.1 * eig / len(X), 1e-12)


def fit_logistic(
    X: Union[np.ndarray, Sequence[FeatureVector]],
    y: Sequence[int],
    reg: str = "l2",
    strength: float = 0.01,
    max_iter: int = 500,
    tol: float = 1e-6,
    seed: int = 0,
    n_classes: Optional[int] = None,
) -> LogisticParams:
    """Minimize mean cross-entropy + penalty from zero-initialized weights.

    Full-batch and zero-initialized, so the run is deterministic; ``seed`` is
    accepted for interface symmetry with the other trainers. Stops when the
    parameter-update max-norm drops below ``tol`` or at ``max_iter``. Raises
    NonFinite when the loss leaves the reals (bad strength or corrupt input).
    """
    if reg not in _REG_KINDS:
        raise ValueError(f"reg must be one of {_REG_KINDS}, got {reg!r}")
    if strength < 0.0:
        raise ValueError(f"strength must be >= 0, got {strength}")
    X = as_matrix(X)
    if not np.isfinite(X).all():
        raise NonFinite("training features contain non-finite values")
    y = np.asarray(y, dtype=int)
    k = check_training_inputs(X, y, n_classes)
    n, p = X.shape
    W = np.zeros((k, p))
    b = np.zeros(k)
    step = 1.0 / _smooth_lipschitz_bound(X)
    for _ in range(max_iter):
        loss, grad_W, grad_b = loss_and_gradient(W, b, X, y)
        if not np.isfinite(loss):
            raise NonFinite(f"logistic loss became non-finite ({loss})")
        W_new = W - step * grad_W
        b_new = b - step * grad_b
        if reg == "l2":
            W_new /= 1.0 + step * strength
        elif reg == "l1":
            W_new = np.sign(W_new) * np.maximum(np.abs(W_new) - step * strength, 0.0)
        delta = max(np.abs(W_new - W).max(), np.abs(b_new - b).max())
        W, b = W_new, b_new
        if delta < tol:
            break
    final_loss = loss_and_gradient(W, b, X, y, reg, strength)[0]
    if not np.isfinite(final_loss):
        raise NonFinite(f"logistic loss became non-finite ({final_loss})")
    return LogisticParams(weights=W, biases=b, reg=reg, strength=strength)
