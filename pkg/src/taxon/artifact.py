"""Self-contained pipeline artifacts: one file carries everything needed to classify.

Layout: a single JSON header line (format name, format version, payload
digest), then a zlib-compressed JSON payload. Numeric arrays travel as
base64-encoded little-endian raw bytes, so deserializing reproduces every
parameter bit for bit and predictions survive the round trip exactly.

The sha256 hex digest in the header doubles as the model's identity:
classification records reference it so results stay attributable after
hot swaps.
"""

from __future__ import annotations

import base64
import hashlib
import json
import zlib
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Optional

import numpy as np

from .errors import DigestMismatch, PayloadMalformed, VersionUnsupported
from .features import FeatureVector, VectorizerConfig, Vocabulary, vectorize
from .models import (
    GaussianNBParams,
    LabelSet,
    LinearSVMParams,
    LogisticParams,
    ModelParams,
    Prediction,
    RandomForestParams,
    Tree,
    predict,
)
from .pipeline import EvalMetrics
from .tokenize import TokenizerConfig, tokenize

FORMAT_NAME = "taxon-pipeline"
FORMAT_VERSION = 1

__all__ = [
    "PipelineArtifact",
    "serialize_pipeline",
    "deserialize_pipeline",
    "artifact_digest",
    "FORMAT_NAME",
    "FORMAT_VERSION",
]


@dataclass(frozen=True)
class PipelineArtifact:
    """A trained pipeline: feature extraction state plus fitted model parameters."""

    tokenizer: TokenizerConfig
    vectorizer: VectorizerConfig
    vocabulary: Vocabulary
    idf: Optional[np.ndarray]
    model: ModelParams
    algorithm: str
    hyperparams: dict
    label_set: LabelSet
    metrics: Optional[EvalMetrics]
    created_at: datetime
    format_version: int = FORMAT_VERSION

    def vectorize_text(self, text: str) -> FeatureVector:
        tokens = tokenize(text, self.tokenizer)
        return vectorize(tokens, self.vocabulary, self.idf, self.vectorizer)

    def classify_text(self, text: str) -> Prediction:
        return predict(self.model, self.vectorize_text(text), self.label_set)

    def with_metrics(self, metrics: EvalMetrics) -> "PipelineArtifact":
        return replace(self, metrics=metrics)


# -- array and model codecs ----------------------------------------------------

def _encode_array(arr: np.ndarray) -> dict:
    dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
    packed = np.ascontiguousarray(arr.astype(dtype))
    return {
        "dtype": dtype,
        "shape": list(arr.shape),
        "data": base64.b64encode(packed.tobytes()).decode("ascii"),
    }


def _decode_array(spec: dict) -> np.ndarray:
    raw = base64.b64decode(spec["data"])
    arr = np.frombuffer(raw, dtype=np.dtype(spec["dtype"]))
    return arr.reshape(spec["shape"]).astype(
        np.int64 if spec["dtype"] == "<i8" else np.float64
    )


def _encode_model(model: ModelParams) -> dict:
    if isinstance(model, GaussianNBParams):
        return {
            "kind": "gaussian_nb",
            "priors": _encode_array(model.priors),
            "means": _encode_array(model.means),
            "variances": _encode_array(model.variances),
            "epsilon": model.epsilon,
        }
    if isinstance(model, LogisticParams):
        return {
            "kind": "logistic",
            "weights": _encode_array(model.weights),
            "biases": _encode_array(model.biases),
            "reg": model.reg,
            "strength": model.strength,
        }
    if isinstance(model, LinearSVMParams):
        return {
            "kind": "linear_svm",
            "weights": _encode_array(model.weights),
            "biases": _encode_array(model.biases),
            "C": model.C,
        }
    if isinstance(model, RandomForestParams):
        return {
            "kind": "random_forest",
            "trees": [
                {
                    "feature": _encode_array(t.feature),
                    "threshold": _encode_array(t.threshold),
                    "left": _encode_array(t.left),
                    "right": _encode_array(t.right),
                    "counts": _encode_array(t.counts),
                    "seed": t.seed,
                }
                for t in model.trees
            ],
            "n_classes": model.n_classes,
            "dimension": model.dimension,
            "max_depth": model.max_depth,
            "min_leaf": model.min_leaf,
            "seed": model.seed,
            "max_features": model.max_features,
            "bootstrap": model.bootstrap,
        }
    raise TypeError(f"cannot serialize model of type {type(model).__name__}")


def _decode_model(spec: dict) -> ModelParams:
    kind = spec.get("kind")
    if kind == "gaussian_nb":
        return GaussianNBParams(
            priors=_decode_array(spec["priors"]),
            means=_decode_array(spec["means"]),
            variances=_decode_array(spec["variances"]),
            epsilon=spec["epsilon"],
        )
    if kind == "logistic":
        return LogisticParams(
            weights=_decode_array(spec["weights"]),
            biases=_decode_array(spec["biases"]),
            reg=spec["reg"],
            strength=spec["strength"],
        )
    if kind == "linear_svm":
        return LinearSVMParams(
            weights=_decode_array(spec["weights"]),
            biases=_decode_array(spec["biases"]),
            C=spec["C"],
        )
    if kind == "random_forest":
        return RandomForestParams(
            trees=tuple(
                Tree(
                    feature=_decode_array(t["feature"]),
                    threshold=_decode_array(t["threshold"]),
                    left=_decode_array(t["left"]),
                    right=_decode_array(t["right"]),
                    counts=_decode_array(t["counts"]),
                    seed=t["seed"],
                )
                for t in spec["trees"]
            ),
            n_classes=spec["n_classes"],
            dimension=spec["dimension"],
            max_depth=spec["max_depth"],
            min_leaf=spec["min_leaf"],
            seed=spec["seed"],
            max_features=spec["max_features"],
            bootstrap=spec["bootstrap"],
        )
    raise PayloadMalformed(f"unknown model kind {kind!r}")


# -- top-level serialization ---------------------------------------------------

def _payload_dict(artifact: PipelineArtifact) -> dict:
    tok = artifact.tokenizer
    vec = artifact.vectorizer
    vocab = artifact.vocabulary
    order = vocab.index_order()
    return {
        "format_version": artifact.format_version,
        "created_at": artifact.created_at.isoformat(),
        "tokenizer": {
            "mode": tok.mode,
            "n_min": tok.n_min,
            "n_max": tok.n_max,
            "lowercase": tok.lowercase,
            "stop_words": sorted(tok.stop_words),
        },
        "vectorizer": {
            "min_df": vec.min_df,
            "max_df": vec.max_df,
            "use_tfidf": vec.use_tfidf,
            "clamp_negative_idf": vec.clamp_negative_idf,
            "l2_normalize": vec.l2_normalize,
        },
        "vocabulary": {
            "tokens": list(order),
            "doc_freq": [vocab.doc_freq[t] for t in order],
            "corpus_size": vocab.corpus_size,
        },
        "idf": None if artifact.idf is None else _encode_array(artifact.idf),
        "label_set": list(artifact.label_set.labels),
        "algorithm": artifact.algorithm,
        "hyperparams": artifact.hyperparams,
        "model": _encode_model(artifact.model),
        "metrics": None if artifact.metrics is None else artifact.metrics.to_dict(),
    }


def serialize_pipeline(artifact: PipelineArtifact) -> bytes:
    """Serialize to header line + compressed payload. Deterministic per artifact."""
    payload = zlib.compress(
        json.dumps(_payload_dict(artifact), sort_keys=True, separators=(",", ":")).encode(
            "utf-8"
        ),
        9,
    )
    header = {
        "format": FORMAT_NAME,
        "version": artifact.format_version,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n" + payload


def artifact_digest(blob: bytes) -> str:
    """The artifact's identity: the payload digest recorded in its header."""
    newline = blob.find(b"\n")
    if newline < 0:
        raise PayloadMalformed("missing header line")
    try:
        header = json.loads(blob[:newline])
    except json.JSONDecodeError as exc:
        raise PayloadMalformed(f"unreadable header: {exc}") from exc
    digest = header.get("sha256")
    if not isinstance(digest, str):
        raise PayloadMalformed("header carries no sha256 digest")
    return digest


def deserialize_pipeline(blob: bytes) -> PipelineArtifact:
    """Validate format, version, and digest, then rebuild the artifact.

    Raises VersionUnsupported for format versions this build does not speak
    and DigestMismatch when the payload does not hash to the header's digest.
    """
    newline = blob.find(b"\n")
    if newline < 0:
        raise PayloadMalformed("missing header line")
    try:
        header = json.loads(blob[:newline])
    except json.JSONDecodeError as exc:
        raise PayloadMalformed(f"unreadable header: {exc}") from exc
    if header.get("format") != FORMAT_NAME:
        raise PayloadMalformed(f"not a {FORMAT_NAME} artifact: {header.get('format')!r}")
    version = header.get("version")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(
            f"artifact format version {version!r}; this build reads {FORMAT_VERSION}"
        )
    payload = blob[newline + 1 :]
    actual = hashlib.sha256(payload).hexdigest()
    if actual != header.get("sha256"):
        raise DigestMismatch(
            f"payload digest {actual} does not match header {header.get('sha256')}"
        )
    try:
        data = json.loads(zlib.decompress(payload))
    except (zlib.error, json.JSONDecodeError) as exc:
        raise PayloadMalformed(f"unreadable payload: {exc}") from exc
    try:
        tok = data["tokenizer"]
        vec = data["vectorizer"]
        vocab = data["vocabulary"]
        tokenizer = TokenizerConfig(
            mode=tok["mode"],
            n_min=tok["n_min"],
            n_max=tok["n_max"],
            lowercase=tok["lowercase"],
            stop_words=frozenset(tok["stop_words"]),
        )
        vectorizer = VectorizerConfig(
            min_df=vec["min_df"],
            max_df=vec["max_df"],
            use_tfidf=vec["use_tfidf"],
            clamp_negative_idf=vec["clamp_negative_idf"],
            l2_normalize=vec["l2_normalize"],
        )
        vocabulary = Vocabulary(
            tokens={t: i for i, t in enumerate(vocab["tokens"])},
            doc_freq=dict(zip(vocab["tokens"], vocab["doc_freq"])),
            corpus_size=vocab["corpus_size"],
        )
        return PipelineArtifact(
            tokenizer=tokenizer,
            vectorizer=vectorizer,
            vocabulary=vocabulary,
            idf=None if data["idf"] is None else _decode_array(data["idf"]),
            model=_decode_model(data["model"]),
            algorithm=data["algorithm"],
            hyperparams=data["hyperparams"],
            label_set=LabelSet(tuple(data["label_set"])),
            metrics=None if data["metrics"] is None else EvalMetrics.from_dict(data["metrics"]),
            created_at=datetime.fromisoformat(data["created_at"]),
            format_version=data["format_version"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PayloadMalformed(f"payload missing or malformed field: {exc}") from exc
