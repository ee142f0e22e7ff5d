"""The classification service: window-based inference over a hot-swappable model.

Every request works against an immutable snapshot of the active model taken
once at the start of the request, so a concurrent model swap can never mix
two parameter sets inside one response. The swap itself fully deserializes
and digest-verifies the upload before the pointer moves; on any error the
previous model keeps serving.

Results at or above the storage threshold are persisted with the digest of
the model that produced them, the content hash of the window, and (unless
retention is disabled) the window text itself so they can be re-classified
later under a newer model.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import time
import uuid
from collections import deque
from contextlib import asynccontextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import Body, FastAPI, Query, Request, Response

from .artifact import PipelineArtifact, artifact_digest, deserialize_pipeline
from .config import ServiceConfig
from .errors import (
    FetchFailed,
    InputUnavailable,
    NoModelLoaded,
    PayloadMalformed,
    UnknownRecord,
)
from .fetch import fetch_uri
from .result_store import ClassificationRecord, make_result_store
from .train_service import install_error_handlers

logger = logging.getLogger(__name__)

API = "/api/v1"


def _now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class ActiveModel:
    artifact: PipelineArtifact
    digest: str
    loaded_at: datetime
    load_ms: float


def window_spans(line_count: int, window_lines: int) -> list[tuple[int, int]]:
    """Disjoint consecutive [start, end] line spans covering the whole input.

    Zero-based and inclusive on both ends; window_lines <= 0 means one window
    over everything.
    """
    if line_count <= 0:
        return [(0, 0)]
    if window_lines <= 0:
        return [(0, line_count - 1)]
    return [
        (start, min(start + window_lines - 1, line_count - 1))
        for start in range(0, line_count, window_lines)
    ]


class ServingMetrics:
    """Counters the service exposes for deployment-over-time comparison."""

    BINS = 10

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.request_count = 0
        self.window_count = 0
        self.stored_count = 0
        self.per_label: dict[str, int] = {}
        self.histogram = [0] * self.BINS
        self.latencies_ms: deque = deque(maxlen=10_000)

    def record_request(self, latency_ms: float) -> None:
        with self._lock:
            self.request_count += 1
            self.latencies_ms.append(latency_ms)

    def record_prediction(self, label: str, confidence: float, stored: bool) -> None:
        with self._lock:
            self.window_count += 1
            self.per_label[label] = self.per_label.get(label, 0) + 1
            bin_index = min(int(confidence * self.BINS), self.BINS - 1)
            self.histogram[bin_index] += 1
            if stored:
                self.stored_count += 1

    def snapshot(self) -> dict:
        with self._lock:
            latencies = list(self.latencies_ms)
            quantiles = None
            if latencies:
                p50, p95, p99 = np.percentile(latencies, [50, 95, 99])
                quantiles = {"p50": p50, "p95": p95, "p99": p99}
            return {
                "request_count": self.request_count,
                "window_count": self.window_count,
                "stored_count": self.stored_count,
                "per_label": dict(self.per_label),
                "confidence_histogram": {
                    "bin_edges": [i / self.BINS for i in range(self.BINS + 1)],
                    "counts": list(self.histogram),
                },
                "latency_ms": quantiles,
            }


class Classifier:
    """Owns the active model pointer, the result store, and serving metrics."""

    def __init__(self, cfg: ServiceConfig, data_dir: Path):
        self.cfg = cfg
        self.data_dir = data_dir
        suffix = "jsonl" if cfg.store_backend == "jsonl" else "db"
        self.store = make_result_store(
            cfg.store_backend, data_dir / f"results.{suffix}"
        )
        self.metrics = ServingMetrics()
        self._active: Optional[ActiveModel] = None
        self._swap_lock = threading.Lock()

    @property
    def active(self) -> Optional[ActiveModel]:
        return self._active

    def require_model(self) -> ActiveModel:
        active = self._active
        if active is None:
            raise NoModelLoaded("no pipeline artifact has been loaded")
        return active

    def load_model(self, blob: bytes, persist: bool = True) -> ActiveModel:
        """Verify and deserialize fully, then swap the pointer atomically."""
        started = time.perf_counter()
        artifact = deserialize_pipeline(blob)
        digest = artifact_digest(blob)
        model = ActiveModel(
            artifact=artifact,
            digest=digest,
            loaded_at=_now(),
            load_ms=(time.perf_counter() - started) * 1000.0,
        )
        with self._swap_lock:
            self._active = model
            if persist:
                path = self.data_dir / "active.bin.tmp"
                path.write_bytes(blob)
                path.replace(self.data_dir / "active.bin")
        logger.info("model %s active", digest[:12])
        return model

    def restore_persisted_model(self) -> None:
        path = self.data_dir / "active.bin"
        if path.exists():
            try:
                self.load_model(path.read_bytes(), persist=False)
            except Exception as exc:
                logger.warning("could not restore persisted model: %s", exc)

    # -- classification ----------------------------------------------------

    def classify_text(
        self,
        active: ActiveModel,
        name: str,
        text: str,
        window_lines: int,
        threshold: float,
    ) -> dict:
        """Classify one log: every window returned, storing the confident ones."""
        lines = text.splitlines()
        records = []
        for start, end in window_spans(len(lines), window_lines):
            window_text = "\n".join(lines[start:end + 1])
            prediction = active.artifact.classify_text(window_text)
            scores = dict(
                zip(active.artifact.label_set.labels, prediction.class_scores)
            )
            stored = prediction.confidence >= threshold
            record = ClassificationRecord(
                id=f"rec-{uuid.uuid4().hex[:16]}",
                classified_at=_now(),
                source=name,
                start_line=start,
                end_line=end,
                label=prediction.label,
                confidence=prediction.confidence,
                class_scores=scores,
                model_digest=active.digest,
                input_digest=hashlib.sha256(window_text.encode("utf-8")).hexdigest(),
                input_text=window_text if self.cfg.retain_input else None,
            )
            if stored:
                self.store.append(record)
            self.metrics.record_prediction(
                prediction.label, prediction.confidence, stored
            )
            records.append(self._record_response(record, stored))
        best = max(records, key=lambda r: r["confidence"])
        return {
            "name": name,
            "records": records,
            "aggregate": {
                "label": best["label"],
                "confidence": best["confidence"],
                "window": dict(best["window"]),
            },
        }

    @staticmethod
    def _record_response(record: ClassificationRecord, stored: bool) -> dict:
        return {
            "record_id": record.id,
            "window": {
                "start_line": record.start_line,
                "end_line": record.end_line,
            },
            "label": record.label,
            "confidence": record.confidence,
            "class_scores": record.class_scores,
            "stored": stored,
            "model": record.model_digest,
        }

    def reclassify(self, record_id: str, active: ActiveModel, threshold: float) -> dict:
        original = self.store.get(record_id)  # UnknownRecord propagates
        if not original.input_text:
            raise InputUnavailable(
                f"record {record_id!r} retains no input text to re-classify"
            )
        prediction = active.artifact.classify_text(original.input_text)
        scores = dict(zip(active.artifact.label_set.labels, prediction.class_scores))
        stored = prediction.confidence >= threshold
        record = ClassificationRecord(
            id=f"rec-{uuid.uuid4().hex[:16]}",
            classified_at=_now(),
            source=original.source,
            start_line=original.start_line,
            end_line=original.end_line,
            label=prediction.label,
            confidence=prediction.confidence,
            class_scores=scores,
            model_digest=active.digest,
            input_digest=original.input_digest,
            input_text=original.input_text if self.cfg.retain_input else None,
        )
        if stored:
            self.store.append(record)
        self.metrics.record_prediction(prediction.label, prediction.confidence, stored)
        response = self._record_response(record, stored)
        response["reclassified_from"] = record_id
        return response


def _request_items(payload: dict) -> list[dict]:
    """Normalize the three request shapes to a list of {name, log|uri} items."""
    variants = [k for k in ("log", "uri", "bundle") if k in payload]
    if len(variants) != 1:
        raise PayloadMalformed(
            'exactly one of "log", "uri", or "bundle" must be present'
        )
    kind = variants[0]
    if kind == "log":
        if not isinstance(payload["log"], str):
            raise PayloadMalformed("log must be a string")
        return [{"name": "inline", "log": payload["log"]}]
    if kind == "uri":
        if not isinstance(payload["uri"], str) or not payload["uri"]:
            raise PayloadMalformed("uri must be a non-empty string")
        return [{"name": payload["uri"], "uri": payload["uri"]}]
    bundle = payload["bundle"]
    if not isinstance(bundle, list) or not bundle:
        raise PayloadMalformed("bundle must be a non-empty array")
    return bundle


def create_classify_app(cfg: ServiceConfig, data_dir: Optional[Path] = None) -> FastAPI:
    data_dir = Path(data_dir or cfg.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    classifier = Classifier(cfg, data_dir)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        classifier.restore_persisted_model()
        yield
        classifier.store.close()

    app = FastAPI(title="taxon classification service", lifespan=lifespan)
    install_error_handlers(app)
    app.state.classifier = classifier

    def _overrides(payload: dict) -> tuple[int, float]:
        window_lines = payload.get("window_lines", cfg.window_lines)
        if not isinstance(window_lines, int) or isinstance(window_lines, bool) \
                or window_lines < 0:
            raise PayloadMalformed(
                f"window_lines must be a non-negative integer, got {window_lines!r}"
            )
        threshold = payload.get("store_threshold_override", cfg.storage_threshold)
        if not isinstance(threshold, (int, float)) or isinstance(threshold, bool) \
                or not 0.0 <= float(threshold) <= 1.0:
            raise PayloadMalformed(
                f"store_threshold_override must lie in [0, 1], got {threshold!r}"
            )
        return window_lines, float(threshold)

    @app.post(API + "/classify")
    def classify(payload: dict = Body(...)):
        started = time.perf_counter()
        active = classifier.require_model()
        window_lines, threshold = _overrides(payload)
        items = []
        for index, item in enumerate(_request_items(payload)):
            if not isinstance(item, dict):
                items.append({"name": f"item-{index}", "error": "FetchFailed",
                              "detail": "bundle item is not a JSON object"})
                continue
            name = item.get("name") or f"item-{index}"
            has_log = isinstance(item.get("log"), str)
            has_uri = isinstance(item.get("uri"), str) and item.get("uri")
            if has_log == bool(has_uri):
                items.append({"name": name, "error": "PayloadMalformed",
                              "detail": 'item needs exactly one of "log" or "uri"'})
                continue
            try:
                text = item["log"] if has_log else fetch_uri(
                    item["uri"],
                    timeout_seconds=cfg.fetch_timeout_seconds,
                    size_cap_mib=cfg.fetch_size_cap_mib,
                )
            except FetchFailed as exc:
                items.append({"name": name, "error": "FetchFailed",
                              "detail": str(exc)})
                continue
            items.append(
                classifier.classify_text(active, name, text, window_lines, threshold)
            )
        classifier.metrics.record_request((time.perf_counter() - started) * 1000.0)
        return {"model": active.digest, "items": items}

    @app.post(API + "/model")
    async def load_model(request: Request):
        blob = await request.body()
        if not blob:
            raise PayloadMalformed("empty artifact upload")
        model = classifier.load_model(blob)
        return {
            "digest": model.digest,
            "loaded_at": model.loaded_at.isoformat(),
            "load_ms": model.load_ms,
            "labels": list(model.artifact.label_set.labels),
        }

    def _parse_time(raw: Optional[str], param: str) -> Optional[datetime]:
        if raw is None:
            return None
        try:
            return datetime.fromisoformat(raw)
        except ValueError:
            raise PayloadMalformed(
                f"{param} must be an ISO-8601 timestamp, got {raw!r}"
            ) from None

    @app.get(API + "/results")
    def results(
        from_: Optional[str] = Query(default=None, alias="from"),
        to: Optional[str] = None,
        label: Optional[str] = None,
        min_confidence: Optional[float] = None,
        model: Optional[str] = None,
        limit: Optional[int] = None,
    ):
        records = classifier.store.query(
            from_time=_parse_time(from_, "from"),
            to_time=_parse_time(to, "to"),
            label=label,
            min_confidence=min_confidence,
            model=model,
            limit=limit,
        )
        return {"records": [r.to_dict() for r in records]}

    @app.get(API + "/results/export")
    def results_export():
        return Response(
            content=classifier.store.export(),
            media_type="application/x-ndjson",
            headers={"Content-Disposition": 'attachment; filename="results.jsonl"'},
        )

    @app.post(API + "/reclassify")
    def reclassify(payload: dict = Body(...)):
        record_ids = payload.get("record_ids")
        if not isinstance(record_ids, list) or not record_ids \
                or not all(isinstance(r, str) for r in record_ids):
            raise PayloadMalformed("record_ids must be a non-empty array of strings")
        active = classifier.require_model()
        _, threshold = _overrides(payload)
        records, errors = [], []
        for record_id in record_ids:
            try:
                records.append(
                    classifier.reclassify(record_id, active, threshold)
                )
            except (UnknownRecord, InputUnavailable) as exc:
                errors.append(
                    {
                        "record_id": record_id,
                        "error": type(exc).__name__,
                        "detail": str(exc),
                    }
                )
        if errors and not records:
            kinds = {e["error"] for e in errors}
            detail = "; ".join(e["detail"] for e in errors)
            if kinds == {"UnknownRecord"}:
                raise UnknownRecord(detail)
            if kinds == {"InputUnavailable"}:
                raise InputUnavailable(detail)
        return {"model": active.digest, "records": records, "errors": errors}

    @app.get(API + "/metrics")
    def metrics():
        snapshot = classifier.metrics.snapshot()
        active = classifier.active
        snapshot["model"] = (
            {
                "digest": active.digest,
                "loaded_at": active.loaded_at.isoformat(),
                "load_ms": active.load_ms,
            }
            if active
            else None
        )
        return snapshot

    @app.get(API + "/health")
    def health():
        active = classifier.active
        return {
            "status": "ok",
            "service": "classify",
            "model": active.digest if active else None,
        }

    return app
