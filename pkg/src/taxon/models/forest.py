"""Random forest of CART trees with Gini splits.

Trees grow on seeded bootstrap resamples, scanning a random feature subset at
every node (sqrt(P) by default). A node splits whenever any candidate
threshold yields two children of at least min_leaf samples, even at zero Gini
gain: zero-gain splits keep strictly shrinking the children, and refusing them
would make XOR-like patterns unlearnable. Forest scores are the mean of
per-tree leaf class-frequency histograms. Everything is driven by
numpy Generators seeded per tree, so a fixed seed reproduces the forest
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..features import FeatureVector
from ._common import as_matrix, check_training_inputs

__all__ = ["Tree", "RandomForestParams", "fit_random_forest"]


@dataclass(frozen=True)
class Tree:
    """Flat array encoding of one CART tree; index 0 is the root.

    feature is -1 at leaves; left/right hold child node indices; counts holds
    per-node class-count histograms (predictions read them at leaves).
    """

    feature: np.ndarray    # (nodes,) int
    threshold: np.ndarray  # (nodes,) float
    left: np.ndarray       # (nodes,) int
    right: np.ndarray      # (nodes,) int
    counts: np.ndarray     # (nodes, K) float
    seed: int

    def leaf_scores(self, x: np.ndarray) -> np.ndarray:
        node = 0
        while self.feature[node] != -1:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        hist = self.counts[node]
        return hist / hist.sum()


@dataclass(frozen=True)
class RandomForestParams:
    """The grown trees plus every knob needed to regrow them."""

    trees: tuple[Tree, ...]
    n_classes: int
    dimension: int
    max_depth: Optional[int]
    min_leaf: int
    seed: int
    max_features: Union[str, int]
    bootstrap: bool

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def class_scores(self, x: np.ndarray) -> np.ndarray:
        scores = np.zeros(self.n_classes)
        for tree in self.trees:
            scores += tree.leaf_scores(x)
        return scores / len(self.trees)


def _best_split(
    X: np.ndarray, y: np.ndarray, feat_ids: np.ndarray, min_leaf: int, k: int
) -> Optional[tuple[float, int, float]]:
    """Scan candidate features for the lowest weighted-Gini boundary.

    Minimizing weighted child Gini is equivalent to maximizing
    sum(left_counts^2)/n_left + sum(right_counts^2)/n_right, which is what the
    prefix-count scan computes for every boundary at once. Returns
    (score, feature, threshold) or None when no boundary is valid.
    """
    m = len(y)
    boundary_sizes = np.arange(1, m)
    size_ok = (boundary_sizes >= min_leaf) & (m - boundary_sizes >= min_leaf)
    best: Optional[tuple[float, int, float]] = None
    for f in feat_ids:
        values = X[:, f]
        order = np.argsort(values, kind="stable")
        v = values[order]
        distinct = v[1:] > v[:-1]
        valid = distinct & size_ok
        if not valid.any():
            continue
        onehot = np.zeros((m, k))
        onehot[np.arange(m), y[order]] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[:-1]
        right_counts = cum[-1] - left_counts
        score = (left_counts * left_counts).sum(axis=1) / boundary_sizes + (
            right_counts * right_counts
        ).sum(axis=1) / (m - boundary_sizes)
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))
        if best is None or score[i] > best[0]:
            best = (float(score[i]), int(f), float((v[i] + v[i + 1]) / 2.0))
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    k: int,
    max_depth: Optional[int],
    min_leaf: int,
    m_feats: int,
    rng: np.random.Generator,
) -> tuple[list, list, list, list, list]:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[np.ndarray] = []
    p = X.shape[1]
    # Stack of (sample index array, depth, parent node, is-left-child); pushing
    # right before left gives deterministic left-first preorder, which fixes
    # the per-node RNG consumption order.
    stack: list[tuple[np.ndarray, int, int, bool]] = [(np.arange(len(y)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        hist = np.bincount(y[idx], minlength=k).astype(float)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(hist)
        if (
            len(idx) < 2 * min_leaf
            or (max_depth is not None and depth >= max_depth)
            or np.count_nonzero(hist) <= 1
        ):
            continue
        feat_ids = rng.choice(p, size=m_feats, replace=False) if m_feats < p else np.arange(p)
        split = _best_split(X[idx], y[idx], feat_ids, min_leaf, k)
        if split is None:
            continue
        _, f, thr = split
        feature[node] = f
        threshold[node] = thr
        goes_left = X[idx, f] <= thr
        stack.append((idx[~goes_left], depth + 1, node, False))
        stack.append((idx[goes_left], depth + 1, node, True))
    return feature, threshold, left, right, counts


def fit_random_forest(
    X: Union[np.ndarray, Sequence[FeatureVector]],
    y: Sequence[int],
    n_trees: int = 100,
    max_depth: Optional[int] = None,
    min_leaf: int = 1,
    seed: int = 0,
    max_features: Union[str, int] = "sqrt",
    bootstrap: bool = True,
    n_classes: Optional[int] = None,
) -> RandomForestParams:
    """Grow a seeded forest. max_depth=None means unlimited.

    max_features: "sqrt" (default), "all", or an explicit count per node.
    bootstrap=False trains every tree on the full dataset; with a single tree
    and no feature subsampling that memorizes any consistent dataset.
    """
    if n_trees < 1:
        raise ValueError(f"n_trees must be >= 1, got {n_trees}")
    if min_leaf < 1:
        raise ValueError(f"min_leaf must be >= 1, got {min_leaf}")
    if max_depth is not None and max_depth < 1:
        raise ValueError(f"max_depth must be >= 1 or None, got {max_depth}")
    X = as_matrix(X)
    y = np.asarray(y, dtype=int)
    k = check_training_inputs(X, y, n_classes)
    n, p = X.shape
    if max_features == "sqrt":
        m_feats = max(1, int(np.floor(np.sqrt(p))))
    elif max_features == "all":
        m_feats = p
    elif isinstance(max_features, int) and not isinstance(max_features, bool):
        if not 1 <= max_features <= p:
            raise ValueError(f"max_features must be in [1, {p}], got {max_features}")
        m_feats = max_features
    else:
        raise ValueError(f"max_features must be 'sqrt', 'all', or an int, got {max_features!r}")
    root_rng = np.random.default_rng(seed)
    tree_seeds = root_rng.integers(0, 2**63, size=n_trees)
    trees = []
    for tree_seed in tree_seeds:
        rng = np.random.default_rng(int(tree_seed))
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        feature, threshold, lc, rc, counts = _grow_tree(
            X[idx], y[idx], k, max_depth, min_leaf, m_feats, rng
        )
        trees.append(
            Tree(
                feature=np.asarray(feature, dtype=np.int64),
                threshold=np.asarray(threshold, dtype=float),
                left=np.asarray(lc, dtype=np.int64),
                right=np.asarray(rc, dtype=np.int64),
                counts=np.vstack(counts),
                seed=int(tree_seed),
            )
        )
    return RandomForestParams(
        trees=tuple(trees),
        n_classes=k,
        dimension=p,
        max_depth=max_depth,
        min_leaf=min_leaf,
        seed=seed,
        max_features=max_features,
        bootstrap=bootstrap,
    )
