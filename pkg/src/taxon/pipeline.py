"""Train/test partitioning, exhaustive grid search with CV selection, and evaluation.

Model selection never touches the held-out test partition: combinations are
ranked by stratified k-fold cross-validation inside the training partition,
and the test set is reserved for final reporting. Per-combination failures
score -inf instead of aborting the sweep, so one pathological grid point
cannot kill a scheduled retrain.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence

import numpy as np

from .errors import ClassTooSmall, LabelMismatch
from .features import (
    Vocabulary,
    VectorizerConfig,
    build_vocabulary,
    compute_idf,
    vectorize,
)
from .models import (
    LabelSet,
    fit_gaussian_nb,
    fit_linear_svm,
    fit_logistic,
    fit_random_forest,
    predict,
)
from .tokenize import TokenizerConfig, tokenize

logger = logging.getLogger(__name__)

__all__ = [
    "LabeledExample",
    "Dataset",
    "GridSearchSpec",
    "GridCombo",
    "LeaderboardEntry",
    "EvalMetrics",
    "ClassMetrics",
    "split_train_test",
    "stratified_folds",
    "grid_search",
    "evaluate",
    "compute_metrics",
    "default_algorithm_grids",
    "leaderboard_text",
]


@dataclass(frozen=True)
class LabeledExample:
    """One training record: tracker id, component, label, and the raw log text."""

    id: str
    component: str
    label: str
    log: str

    def __post_init__(self) -> None:
        for name in ("id", "component", "label", "log"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValueError(f"LabeledExample.{name} must be a non-empty string")


@dataclass(frozen=True)
class Dataset:
    """Labelled examples plus the (derived or pinned) label set."""

    examples: tuple[LabeledExample, ...]
    label_set: LabelSet

    def __post_init__(self) -> None:
        if not isinstance(self.examples, tuple):
            object.__setattr__(self, "examples", tuple(self.examples))
        ids = [ex.id for ex in self.examples]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate example ids: {dupes}")
        known = set(self.label_set.labels)
        unknown = sorted({ex.label for ex in self.examples} - known)
        if unknown:
            raise ValueError(f"examples carry labels outside the label set: {unknown}")

    @classmethod
    def from_examples(
        cls,
        examples: Sequence[LabeledExample],
        label_set: Optional[LabelSet] = None,
    ) -> "Dataset":
        """Build a dataset, deriving a sorted label set when none is pinned."""
        if label_set is None:
            label_set = LabelSet(tuple(sorted({ex.label for ex in examples})))
        return cls(examples=tuple(examples), label_set=label_set)

    def __len__(self) -> int:
        return len(self.examples)

    def class_ids(self) -> np.ndarray:
        index = {label: i for i, label in enumerate(self.label_set.labels)}
        return np.array([index[ex.label] for ex in self.examples], dtype=int)


def split_train_test(
    dataset: Dataset, test_fraction: float, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Stratified seeded split; every class lands in both partitions.

    Per-class test counts are round(class_count * test_fraction), half up,
    clamped into [1, class_count - 1]. Raises ClassTooSmall for classes with
    fewer than two examples.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_ids: set[str] = set()
    for label in dataset.label_set.labels:
        members = [ex.id for ex in dataset.examples if ex.label == label]
        if len(members) < 2:
            raise ClassTooSmall(
                f"class {label!r} has {len(members)} example(s); need >= 2 to split"
            )
        n_test = math.floor(len(members) * test_fraction + 0.5)
        n_test = min(max(n_test, 1), len(members) - 1)
        order = rng.permutation(len(members))
        test_ids.update(members[i] for i in order[:n_test])
    train = tuple(ex for ex in dataset.examples if ex.id not in test_ids)
    test = tuple(ex for ex in dataset.examples if ex.id in test_ids)
    return (
        Dataset(examples=train, label_set=dataset.label_set),
        Dataset(examples=test, label_set=dataset.label_set),
    )


def stratified_folds(
    class_ids: np.ndarray, n_folds: int, seed: int = 0
) -> list[np.ndarray]:
    """Deal each class round-robin across folds after a seeded shuffle.

    Round-robin keeps every fold's per-class count within one example of any
    other fold's, which is as close to the dataset proportions as integer
    counts allow.
    """
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for c in np.unique(class_ids):
        members = np.flatnonzero(class_ids == c)
        members = members[rng.permutation(len(members))]
        for i, idx in enumerate(members):
            folds[i % n_folds].append(int(idx))
    return [np.array(sorted(f), dtype=int) for f in folds]


# -- evaluation metrics --------------------------------------------------------


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalMetrics:
    """Quality and timing numbers for one trained pipeline."""

    accuracy: float
    per_class: dict[str, ClassMetrics]
    macro_f1: float
    confusion: tuple[tuple[int, ...], ...]  # rows = true class, label-set order
    training_time: float                    # seconds
    mean_prediction_latency: float          # seconds per example
    evaluated_at: datetime

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {
                label: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for label, m in self.per_class.items()
            },
            "macro_f1": self.macro_f1,
            "confusion": [list(row) for row in self.confusion],
            "training_time": self.training_time,
            "mean_prediction_latency": self.mean_prediction_latency,
            "evaluated_at": self.evaluated_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalMetrics":
        return cls(
            accuracy=data["accuracy"],
            per_class={
                label: ClassMetrics(
                    precision=m["precision"],
                    recall=m["recall"],
                    f1=m["f1"],
                    support=m["support"],
                )
                for label, m in data["per_class"].items()
            },
            macro_f1=data["macro_f1"],
            confusion=tuple(tuple(int(v) for v in row) for row in data["confusion"]),
            training_time=data["training_time"],
            mean_prediction_latency=data["mean_prediction_latency"],
            evaluated_at=datetime.fromisoformat(data["evaluated_at"]),
        )


def compute_metrics(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    label_set: LabelSet,
    training_time: float = 0.0,
    mean_prediction_latency: float = 0.0,
    evaluated_at: Optional[datetime] = None,
) -> EvalMetrics:
    """Confusion matrix and derived scores; per-class F1 is 0 when p+r is 0."""
    k = len(label_set)
    confusion = np.zeros((k, k), dtype=int)
    for t, p in zip(y_true, y_pred):
        confusion[t, p] += 1
    total = int(confusion.sum())
    per_class: dict[str, ClassMetrics] = {}
    f1s = []
    for c, label in enumerate(label_set.labels):
        tp = int(confusion[c, c])
        predicted = int(confusion[:, c].sum())
        support = int(confusion[c, :].sum())
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[label] = ClassMetrics(precision=precision, recall=recall, f1=f1, support=support)
        f1s.append(f1)
    return EvalMetrics(
        accuracy=float(np.trace(confusion) / total) if total else 0.0,
        per_class=per_class,
        macro_f1=float(np.mean(f1s)),
        confusion=tuple(tuple(int(v) for v in row) for row in confusion),
        training_time=training_time,
        mean_prediction_latency=mean_prediction_latency,
        evaluated_at=evaluated_at or datetime.now(timezone.utc),
    )


# -- grid search ---------------------------------------------------------------

def _fit_gnb(X, y, n_classes, seed, **hp):
    return fit_gaussian_nb(X, y, n_classes=n_classes, **hp)


def _fit_logistic(X, y, n_classes, seed, **hp):
    return fit_logistic(X, y, n_classes=n_classes, seed=seed, **hp)


def _fit_svm(X, y, n_classes, seed, **hp):
    return fit_linear_svm(X, y, n_classes=n_classes, seed=seed, **hp)


def _fit_forest(X, y, n_classes, seed, **hp):
    return fit_random_forest(X, y, n_classes=n_classes, seed=seed, **hp)


FITTERS = {
    "gaussian_nb": _fit_gnb,
    "logistic": _fit_logistic,
    "linear_svm": _fit_svm,
    "random_forest": _fit_forest,
}

SCORERS = ("macro_f1", "accuracy")


def default_algorithm_grids() -> dict[str, tuple[dict, ...]]:
    """Small conventional sweeps per algorithm; fully overridable via config."""
    return {
        "gaussian_nb": tuple({"epsilon": e} for e in (1e-9, 1e-6)),
        "logistic": tuple(
            {"reg": reg, "strength": lam}
            for lam in (0.001, 0.01, 0.1)
            for reg in ("l1", "l2")
        ),
        "linear_svm": tuple({"C": c} for c in (0.1, 1.0, 10.0)),
        "random_forest": tuple(
            {"n_trees": t, "max_depth": d} for t in (50, 100) for d in (16, None)
        ),
    }


@dataclass(frozen=True)
class GridSearchSpec:
    """The full search space plus how to score it."""

    tokenizer_grid: tuple[TokenizerConfig, ...] = (TokenizerConfig(),)
    vectorizer_grid: tuple[VectorizerConfig, ...] = (VectorizerConfig(),)
    algorithm_grids: dict[str, tuple[dict, ...]] = field(
        default_factory=default_algorithm_grids
    )
    cv_folds: int = 3
    scoring: str = "macro_f1"
    parallel_jobs: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.tokenizer_grid or not self.vectorizer_grid or not self.algorithm_grids:
            raise ValueError("every grid must be non-empty")
        for name, grid in self.algorithm_grids.items():
            if name not in FITTERS:
                raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(FITTERS)}")
            if not grid:
                raise ValueError(f"empty hyperparameter grid for {name!r}")
        if self.cv_folds < 2:
            raise ValueError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.scoring not in SCORERS:
            raise ValueError(f"scoring must be one of {SCORERS}, got {self.scoring!r}")
        if self.parallel_jobs < 1:
            raise ValueError(f"parallel_jobs must be >= 1, got {self.parallel_jobs}")


@dataclass(frozen=True)
class GridCombo:
    """One point of the cartesian search space, in enumeration order."""

    index: int
    tokenizer: TokenizerConfig
    vectorizer: VectorizerConfig
    algorithm: str
    hyperparams: dict


@dataclass(frozen=True)
class LeaderboardEntry:
    combo: GridCombo
    mean_score: float
    fold_scores: tuple[float, ...]
    error: Optional[str] = None


def enumerate_combos(spec: GridSearchSpec) -> list[GridCombo]:
    combos = []
    for tok in spec.tokenizer_grid:
        for vec in spec.vectorizer_grid:
            for algorithm, grid in spec.algorithm_grids.items():
                for hypers in grid:
                    combos.append(
                        GridCombo(
                            index=len(combos),
                            tokenizer=tok,
                            vectorizer=vec,
                            algorithm=algorithm,
                            hyperparams=dict(hypers),
                        )
                    )
    return combos


def _fit_features(
    token_docs: Sequence[Sequence[str]], vec_config: VectorizerConfig
) -> tuple[Vocabulary, Optional[np.ndarray]]:
    vocab = build_vocabulary(token_docs, vec_config)
    idf = compute_idf(vocab, clamp_negative=vec_config.clamp_negative_idf) if vec_config.use_tfidf else None
    return vocab, idf


def _score_combo(
    combo: GridCombo,
    token_docs: Sequence[Sequence[str]],
    y: np.ndarray,
    folds: Sequence[np.ndarray],
    label_set: LabelSet,
    scoring: str,
    seed: int,
) -> LeaderboardEntry:
    fold_scores = []
    try:
        for f, val_idx in enumerate(folds):
            val_set = set(int(i) for i in val_idx)
            train_idx = np.array(
                [i for i in range(len(y)) if i not in val_set], dtype=int
            )
            train_docs = [token_docs[i] for i in train_idx]
            vocab, idf = _fit_features(train_docs, combo.vectorizer)
            X_train = [vectorize(d, vocab, idf, combo.vectorizer) for d in train_docs]
            X_val = [
                vectorize(token_docs[i], vocab, idf, combo.vectorizer) for i in val_idx
            ]
            params = FITTERS[combo.algorithm](
                X_train, y[train_idx], n_classes=len(label_set), seed=seed, **combo.hyperparams
            )
            y_pred = np.array(
                [
                    label_set.index_of(predict(params, x, label_set).label)
                    for x in X_val
                ],
                dtype=int,
            )
            metrics = compute_metrics(y[val_idx], y_pred, label_set)
            fold_scores.append(metrics.macro_f1 if scoring == "macro_f1" else metrics.accuracy)
        return LeaderboardEntry(
            combo=combo,
            mean_score=float(np.mean(fold_scores)),
            fold_scores=tuple(fold_scores),
        )
    except Exception as exc:
        logger.warning("grid combo %d (%s) failed: %s", combo.index, combo.algorithm, exc)
        return LeaderboardEntry(
            combo=combo,
            mean_score=float("-inf"),
            fold_scores=tuple(fold_scores),
            error=f"{type(exc).__name__}: {exc}",
        )


def grid_search(train: Dataset, spec: GridSearchSpec):
    """Evaluate every grid combination by stratified k-fold CV and refit the winner.

    Returns (artifact, leaderboard): the artifact is the winning combination
    refit on all of ``train`` (its metrics slot is still empty — evaluation
    against held-out data happens separately); the leaderboard has one entry
    per combination in enumeration order. Ties break toward the earliest
    combination.
    """
    from .artifact import PipelineArtifact  # deferred: artifact imports this module

    combos = enumerate_combos(spec)
    y = train.class_ids()
    folds = stratified_folds(y, spec.cv_folds, seed=spec.seed)
    token_cache: dict[TokenizerConfig, list[list[str]]] = {}
    for tok in spec.tokenizer_grid:
        token_cache[tok] = [tokenize(ex.log, tok) for ex in train.examples]

    def run(combo: GridCombo) -> LeaderboardEntry:
        return _score_combo(
            combo, token_cache[combo.tokenizer], y, folds, train.label_set,
            spec.scoring, spec.seed,
        )

    if spec.parallel_jobs > 1:
        with ThreadPoolExecutor(max_workers=spec.parallel_jobs) as pool:
            leaderboard = list(pool.map(run, combos))
    else:
        leaderboard = [run(c) for c in combos]
    # merged by enumeration index; ties -> earliest, which argmax-first provides
    scores = [entry.mean_score for entry in leaderboard]
    best_index = int(np.argmax(scores))
    if not math.isfinite(scores[best_index]):
        raise RuntimeError("every grid combination failed; see leaderboard errors")
    winner = combos[best_index]
    token_docs = token_cache[winner.tokenizer]
    vocab, idf = _fit_features(token_docs, winner.vectorizer)
    X = [vectorize(d, vocab, idf, winner.vectorizer) for d in token_docs]
    params = FITTERS[winner.algorithm](
        X, y, n_classes=len(train.label_set), seed=spec.seed, **winner.hyperparams
    )
    artifact = PipelineArtifact(
        tokenizer=winner.tokenizer,
        vectorizer=winner.vectorizer,
        vocabulary=vocab,
        idf=idf,
        model=params,
        algorithm=winner.algorithm,
        hyperparams=dict(winner.hyperparams),
        label_set=train.label_set,
        metrics=None,
        created_at=datetime.now(timezone.utc),
    )
    return artifact, leaderboard


def evaluate(artifact, test: Dataset, training_time: float = 0.0) -> EvalMetrics:
    """Full tokenize -> vectorize -> predict pass over ``test``.

    Raises LabelMismatch when the test data carries labels the artifact was
    not trained with.
    """
    known = set(artifact.label_set.labels)
    unknown = sorted({ex.label for ex in test.examples} - known)
    if unknown:
        raise LabelMismatch(f"test labels not in the artifact's label set: {unknown}")
    index = {label: i for i, label in enumerate(artifact.label_set.labels)}
    y_true = np.array([index[ex.label] for ex in test.examples], dtype=int)
    y_pred = np.empty(len(test.examples), dtype=int)
    started = time.perf_counter()
    for i, ex in enumerate(test.examples):
        y_pred[i] = index[artifact.classify_text(ex.log).label]
    elapsed = time.perf_counter() - started
    return compute_metrics(
        y_true,
        y_pred,
        artifact.label_set,
        training_time=training_time,
        mean_prediction_latency=elapsed / max(len(test.examples), 1),
        evaluated_at=datetime.now(timezone.utc),
    )


def leaderboard_text(leaderboard: Sequence[LeaderboardEntry]) -> str:
    """Fixed-width text table of the sweep, one row per combination."""
    lines = [f"{'rank':>4}  {'score':>10}  {'algorithm':<14} hyperparams"]
    ranked = sorted(leaderboard, key=lambda e: (-e.mean_score, e.combo.index))
    for rank, entry in enumerate(ranked, start=1):
        hp = ", ".join(f"{k}={v}" for k, v in sorted(entry.combo.hyperparams.items()))
        score = f"{entry.mean_score:.6f}" if math.isfinite(entry.mean_score) else "failed"
        suffix = f"  [{entry.error}]" if entry.error else ""
        lines.append(
            f"{rank:>4}  {score:>10}  {entry.combo.algorithm:<14} {hp}{suffix}"
        )
    return "\n".join(lines)
