"""Vocabulary building, bag-of-words counting, and TF-IDF scaling.

The inverse document frequency of a token with document frequency df over an
N-document corpus is ln(N / (1 + df)). The 1+ in the denominator rules out
division by zero; it also makes the value negative when df = N, which is kept
as-is by default (clamping to zero is opt-in).

Vocabulary and idf tables are immutable after construction; vectorize is pure.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConstraintViolation, EmptyCorpus

__all__ = [
    "Vocabulary",
    "VectorizerConfig",
    "FeatureVector",
    "build_vocabulary",
    "compute_idf",
    "vectorize",
    "stack",
]


@dataclass(frozen=True)
class VectorizerConfig:
    """Document-frequency filtering and scaling knobs.

    min_df / max_df: an int is an absolute document count, a float in [0, 1]
    a proportion of the corpus size (min resolves by ceiling, max by floor).
    """

    min_df: int | float = 1
    max_df: int | float = 1.0
    use_tfidf: bool = True
    clamp_negative_idf: bool = False
    l2_normalize: bool = False

    def __post_init__(self) -> None:
        for name in ("min_df", "max_df"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{name} must be an int or float, got {value!r}")
            if isinstance(value, float) and not 0.0 <= value <= 1.0:
                raise ValueError(f"fractional {name} must lie in [0, 1], got {value}")
            if isinstance(value, int) and value < 0:
                raise ValueError(f"absolute {name} must be >= 0, got {value}")

    def resolve_df_bounds(self, corpus_size: int) -> tuple[int, int]:
        """Effective (min_df, max_df) as absolute counts for an N-doc corpus."""
        lo = (
            math.ceil(self.min_df * corpus_size)
            if isinstance(self.min_df, float)
            else self.min_df
        )
        hi = (
            math.floor(self.max_df * corpus_size)
            if isinstance(self.max_df, float)
            else self.max_df
        )
        if lo > hi:
            raise ConstraintViolation(
                f"effective min_df {lo} exceeds effective max_df {hi} for corpus size {corpus_size}"
            )
        return lo, hi


@dataclass(frozen=True)
class Vocabulary:
    """Token -> dense index map plus per-token document frequencies.

    Indices run 0..P-1 in first-seen corpus order and stay stable for the
    vocabulary's lifetime. corpus_size is the N the document frequencies were
    counted over.
    """

    tokens: dict[str, int]
    doc_freq: dict[str, int]
    corpus_size: int

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def dimension(self) -> int:
        return len(self.tokens)

    def index_order(self) -> list[str]:
        """Tokens sorted by their index."""
        return sorted(self.tokens, key=self.tokens.__getitem__)


@dataclass(frozen=True)
class FeatureVector:
    """Sparse index -> weight map; explicit zeros are never stored."""

    entries: dict[int, float]
    dimension: int

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dimension)
        for idx, weight in self.entries.items():
            dense[idx] = weight
        return dense


def stack(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """Densify a batch of feature vectors into an (n, P) matrix."""
    if not vectors:
        return np.zeros((0, 0))
    return np.vstack([v.to_dense() for v in vectors])


def build_vocabulary(
    token_docs: Sequence[Sequence[str]], config: VectorizerConfig
) -> Vocabulary:
    """Build a vocabulary from tokenized documents, filtered by document frequency.

    Tokens whose df falls outside the effective [min_df, max_df] window are
    dropped; survivors get dense indices in first-seen corpus order. Raises
    EmptyCorpus when nothing survives.
    """
    corpus_size = len(token_docs)
    df: Counter[str] = Counter()
    first_seen: dict[str, None] = {}
    for doc in token_docs:
        for token in doc:
            if token not in first_seen:
                first_seen[token] = None
        df.update(set(doc))
    lo, hi = config.resolve_df_bounds(corpus_size)
    tokens: dict[str, int] = {}
    doc_freq: dict[str, int] = {}
    for token in first_seen:
        if lo <= df[token] <= hi:
            tokens[token] = len(tokens)
            doc_freq[token] = df[token]
    if not tokens:
        raise EmptyCorpus(
            f"no token met {lo} <= df <= {hi} over {corpus_size} documents"
        )
    return Vocabulary(tokens=tokens, doc_freq=doc_freq, corpus_size=corpus_size)


def compute_idf(vocab: Vocabulary, clamp_negative: bool = False) -> np.ndarray:
    """Per-token idf table indexed by vocabulary index: ln(N / (1 + df))."""
    if len(vocab) == 0:
        raise EmptyCorpus("cannot compute idf for an empty vocabulary")
    idf = np.empty(len(vocab))
    for token, index in vocab.tokens.items():
        idf[index] = math.log(vocab.corpus_size / (1 + vocab.doc_freq[token]))
    if clamp_negative:
        np.maximum(idf, 0.0, out=idf)
    return idf


def vectorize(
    tokens: Sequence[str],
    vocab: Vocabulary,
    idf: Optional[np.ndarray],
    config: VectorizerConfig,
) -> FeatureVector:
    """Count in-vocabulary tokens, optionally TF-IDF scale and L2 normalize.

    Out-of-vocabulary tokens are silently dropped (the serving vocabulary is
    frozen inside the artifact); fully OOV input yields the empty vector.
    """
    if config.use_tfidf and idf is None:
        raise ValueError("use_tfidf requires an idf table")
    counts: Counter[int] = Counter()
    lookup = vocab.tokens
    for token in tokens:
        index = lookup.get(token)
        if index is not None:
            counts[index] += 1
    entries: dict[int, float] = {}
    for index, count in counts.items():
        weight = float(count)
        if config.use_tfidf:
            weight *= idf[index]
        if weight != 0.0:
            entries[index] = weight
    if config.l2_normalize and entries:
        norm = math.sqrt(sum(w * w for w in entries.values()))
        if norm > 0.0:
            entries = {i: w / norm for i, w in entries.items()}
    return FeatureVector(entries=entries, dimension=len(vocab))
