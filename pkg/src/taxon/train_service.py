"""The training service: ingestion, dataset administration, job orchestration.

One background worker thread executes training jobs strictly one at a time;
a queue of depth one holds at most a single waiting job, so a third start
request while one runs is rejected as Busy. Scheduled retraining submits
through the same path and simply skips a tick that finds the queue occupied.

All state that must survive a restart lives on disk: datasets in the dataset
store, the winning artifact plus its metrics under the export directory.
Job records themselves are process-local bookkeeping.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

import httpx
from contextlib import asynccontextmanager
from fastapi import Body, FastAPI, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .artifact import artifact_digest, serialize_pipeline
from .config import (
    KNOWN_ALGORITHMS,
    ServiceConfig,
    grid_spec_from,
    to_ini_text,
)
from .dataset_store import DatasetStore
from .errors import (
    Busy,
    DatasetTooSmall,
    FetchFailed,
    NoModelYet,
    PayloadMalformed,
    TaxonError,
    UnknownDataset,
    UnknownLabel,
)
from .fetch import fetch_uri
from .pipeline import (
    Dataset,
    GridSearchSpec,
    LabeledExample,
    evaluate,
    grid_search,
    split_train_test,
)

logger = logging.getLogger(__name__)

API = "/api/v1"
DEFAULT_DATASET = "default"

ERROR_STATUS = {
    "PayloadMalformed": 400,
    "DigestMismatch": 400,
    "VersionUnsupported": 400,
    "UnknownDataset": 404,
    "UnknownExample": 404,
    "UnknownRecord": 404,
    "NoModelYet": 404,
    "Busy": 409,
    "NoModelLoaded": 409,
    "DatasetTooSmall": 422,
    "UnknownLabel": 422,
    "InputUnavailable": 409,
    "ConstraintViolation": 400,
    "TypeMismatch": 400,
    "UnknownKey": 400,
}


def error_response(exc: TaxonError) -> JSONResponse:
    name = type(exc).__name__
    return JSONResponse(
        status_code=ERROR_STATUS.get(name, 400),
        content={"error": name, "detail": str(exc)},
    )


def install_error_handlers(app: FastAPI) -> None:
    @app.exception_handler(TaxonError)
    async def _taxon_error(request, exc: TaxonError):
        return error_response(exc)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": "PayloadMalformed", "detail": str(exc)},
        )


def _now() -> datetime:
    return datetime.now(timezone.utc)


# -- record-level ingestion validation -----------------------------------------

REQUIRED_FIELDS = ("id", "component", "label", "log")


def validate_record(
    record: object,
    known_ids: set,
    pinned_labels: tuple,
) -> tuple[Optional[LabeledExample], Optional[str]]:
    """(example, None) when acceptable, (None, reason) when rejected."""
    if not isinstance(record, dict):
        return None, "record is not a JSON object"
    for name in REQUIRED_FIELDS:
        if name not in record:
            return None, f"missing field: {name}"
        if not isinstance(record[name], str) or not record[name]:
            return None, f"field {name!r} must be a non-empty string"
    if record["id"] in known_ids:
        return None, f"duplicate id: {record['id']}"
    if pinned_labels and record["label"] not in pinned_labels:
        return None, f"unknown label: {record['label']}"
    example = LabeledExample(
        id=record["id"],
        component=record["component"],
        label=record["label"],
        log=record["log"],
    )
    return example, None


# -- training jobs --------------------------------------------------------------

@dataclass
class TrainJob:
    job_id: str
    origin: str  # manual | schedule
    overrides: dict
    state: str = "queued"
    submitted_at: datetime = field(default_factory=_now)
    started_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None
    error: Optional[str] = None
    artifact_digest: Optional[str] = None
    artifact_path: Optional[str] = None
    leaderboard: Optional[list] = None
    metrics: Optional[dict] = None

    def to_dict(self) -> dict:
        def stamp(ts: Optional[datetime]) -> Optional[str]:
            return ts.isoformat() if ts else None

        return {
            "job_id": self.job_id,
            "origin": self.origin,
            "state": self.state,
            "submitted_at": stamp(self.submitted_at),
            "started_at": stamp(self.started_at),
            "finished_at": stamp(self.finished_at),
            "error": self.error,
            "artifact_digest": self.artifact_digest,
            "artifact_path": self.artifact_path,
            "leaderboard": self.leaderboard,
            "metrics": self.metrics,
        }


def _leaderboard_json(leaderboard) -> list:
    out = []
    for entry in leaderboard:
        out.append(
            {
                "rank_index": entry.combo.index,
                "algorithm": entry.combo.algorithm,
                "hyperparams": {
                    k: (list(v) if isinstance(v, tuple) else v)
                    for k, v in entry.combo.hyperparams.items()
                },
                "mean_score": entry.mean_score,
                "fold_scores": list(entry.fold_scores),
                "error": entry.error,
            }
        )
    return out


def spec_with_overrides(base: GridSearchSpec, overrides: dict) -> GridSearchSpec:
    """Apply per-request knobs onto the configured search space."""
    algorithms = overrides.get("algorithms")
    grids = dict(base.algorithm_grids)
    if algorithms is not None:
        for name in algorithms:
            if name not in KNOWN_ALGORITHMS:
                raise PayloadMalformed(f"unknown algorithm {name!r}")
        from .pipeline import default_algorithm_grids

        defaults = default_algorithm_grids()
        grids = {name: grids.get(name, defaults[name]) for name in algorithms}
    if "grids" in overrides:
        for name, grid in overrides["grids"].items():
            if name not in KNOWN_ALGORITHMS:
                raise PayloadMalformed(f"unknown algorithm {name!r}")
            if not isinstance(grid, list) or not all(isinstance(g, dict) for g in grid):
                raise PayloadMalformed(f"grid for {name!r} must be a list of objects")
            grids[name] = tuple(grid)
    try:
        return GridSearchSpec(
            tokenizer_grid=base.tokenizer_grid,
            vectorizer_grid=base.vectorizer_grid,
            algorithm_grids=grids,
            cv_folds=int(overrides.get("cv_folds", base.cv_folds)),
            scoring=base.scoring,
            parallel_jobs=int(overrides.get("parallel_jobs", base.parallel_jobs)),
            seed=int(overrides.get("seed", base.seed)),
        )
    except ValueError as exc:
        raise PayloadMalformed(str(exc)) from exc


class Trainer:
    """Owns the dataset store, the single-worker job queue, and the artifact."""

    def __init__(self, cfg: ServiceConfig, data_dir: Path):
        self.cfg = cfg
        self.data_dir = data_dir
        self.store = DatasetStore(data_dir / "datasets.json")
        self.export_dir = Path(cfg.export_path) if cfg.export_path else data_dir / "models"
        self.export_dir.mkdir(parents=True, exist_ok=True)
        self.jobs: dict[str, TrainJob] = {}
        self._jobs_lock = threading.Lock()
        self._queue: "queue.Queue[TrainJob]" = queue.Queue()
        # running job plus at most one waiting; admission is counted explicitly
        # so a submit racing the worker's dequeue cannot sneak a third job in
        self._admitted = 0
        self._worker: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._running_job: Optional[TrainJob] = None
        self._latest_blob: Optional[bytes] = None

    # -- worker lifecycle --------------------------------------------------

    def start_worker(self) -> None:
        if self._worker is None or not self._worker.is_alive():
            self._stop.clear()
            self._worker = threading.Thread(
                target=self._work_loop, name="taxon-trainer", daemon=True
            )
            self._worker.start()

    def stop_worker(self) -> None:
        self._stop.set()
        if self._worker is not None:
            self._worker.join(timeout=5.0)

    def _work_loop(self) -> None:
        while not self._stop.is_set():
            try:
                job = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            self._running_job = job
            try:
                self._run_job(job)
            finally:
                self._running_job = None
                with self._jobs_lock:
                    self._admitted -= 1
                self._queue.task_done()

    # -- submission --------------------------------------------------------

    def busy(self) -> bool:
        with self._jobs_lock:
            return self._admitted > 0

    def submit(self, overrides: dict, origin: str = "manual") -> TrainJob:
        pool_size = len(self.store.all_examples())
        if pool_size < 2:
            raise DatasetTooSmall(
                f"training needs at least 2 stored examples, have {pool_size}"
            )
        # malformed overrides should bounce the request, not fail the job later
        spec_with_overrides(grid_spec_from(self.cfg), overrides)
        job = TrainJob(job_id=f"job-{uuid.uuid4().hex[:12]}", origin=origin,
                       overrides=overrides)
        with self._jobs_lock:
            if self._admitted >= 2:
                raise Busy("a training job is already running and one is queued")
            self._admitted += 1
            self.jobs[job.job_id] = job
            self._queue.put(job)
        self.start_worker()
        return job

    # -- execution ---------------------------------------------------------

    def _run_job(self, job: TrainJob) -> None:
        job.state = "running"
        job.started_at = _now()
        started = time.perf_counter()
        try:
            examples = self.store.all_examples()
            label_set = None
            if self.cfg.labels:
                from .models import LabelSet

                label_set = LabelSet(tuple(sorted(self.cfg.labels)))
            dataset = Dataset.from_examples(examples, label_set=label_set)
            test_fraction = float(
                job.overrides.get("test_fraction", self.cfg.test_fraction)
            )
            seed = int(job.overrides.get("seed", self.cfg.seed))
            train, test = split_train_test(dataset, test_fraction, seed=seed)
            spec = spec_with_overrides(grid_spec_from(self.cfg), job.overrides)
            artifact, leaderboard = grid_search(train, spec)
            metrics = evaluate(
                artifact, test, training_time=time.perf_counter() - started
            )
            artifact = artifact.with_metrics(metrics)
            blob = serialize_pipeline(artifact)
            digest = artifact_digest(blob)
            path = self._export(blob, digest)

            job.leaderboard = _leaderboard_json(leaderboard)
            job.metrics = metrics.to_dict()
            job.artifact_digest = digest
            job.artifact_path = str(path)
            job.state = "succeeded"
            job.finished_at = _now()
            self._latest_blob = blob
            self._write_latest_summary(job)
            logger.info("job %s succeeded: %s", job.job_id, digest[:12])
            if job.origin == "schedule" and self.cfg.auto_promote:
                self._promote(blob, digest)
        except Exception as exc:
            job.error = f"{type(exc).__name__}: {exc}"
            job.state = "failed"
            job.finished_at = _now()
            logger.warning("job %s failed: %s", job.job_id, job.error)

    def _export(self, blob: bytes, digest: str) -> Path:
        path = self.export_dir / f"model-{digest[:12]}.bin"
        path.write_bytes(blob)
        tmp = self.export_dir / "latest.bin.tmp"
        tmp.write_bytes(blob)
        os.replace(tmp, self.export_dir / "latest.bin")
        return path

    def _write_latest_summary(self, job: TrainJob) -> None:
        tmp = self.export_dir / "latest.json.tmp"
        tmp.write_text(json.dumps(job.to_dict(), indent=2), encoding="utf-8")
        os.replace(tmp, self.export_dir / "latest.json")

    def _promote(self, blob: bytes, digest: str) -> None:
        target = self.cfg.promote_to or (
            f"http://{self.cfg.host}:{self.cfg.classify_port}"
        )
        try:
            response = httpx.post(
                f"{target}{API}/model",
                content=blob,
                headers={"content-type": "application/octet-stream"},
                timeout=self.cfg.fetch_timeout_seconds,
            )
            response.raise_for_status()
            logger.info("promoted model %s to %s", digest[:12], target)
        except httpx.HTTPError as exc:
            logger.warning("promotion to %s failed: %s", target, exc)

    # -- results -----------------------------------------------------------

    def latest_summary(self) -> dict:
        path = self.export_dir / "latest.json"
        if not path.exists():
            raise NoModelYet("no training job has succeeded yet")
        return json.loads(path.read_text(encoding="utf-8"))

    def latest_blob(self) -> bytes:
        if self._latest_blob is not None:
            return self._latest_blob
        path = self.export_dir / "latest.bin"
        if not path.exists():
            raise NoModelYet("no training job has succeeded yet")
        return path.read_bytes()


class RetrainScheduler:
    """Interval ticks that submit scheduled jobs, skipping while one runs."""

    def __init__(
        self,
        interval_seconds: float,
        submit: Callable[[], object],
        clock: Callable[[], float] = time.monotonic,
    ):
        self.interval = interval_seconds
        self.submit = submit
        self.clock = clock
        self.next_due = clock() + interval_seconds
        self.ticks = 0
        self.skips = 0

    def check(self, now: Optional[float] = None) -> bool:
        """Run one due tick. Returns True when a job was submitted."""
        if self.interval <= 0:
            return False
        now = self.clock() if now is None else now
        if now < self.next_due:
            return False
        self.next_due = now + self.interval
        self.ticks += 1
        try:
            self.submit()
            return True
        except (Busy, DatasetTooSmall) as exc:
            self.skips += 1
            logger.info("scheduled retrain tick skipped: %s", exc)
            return False


# -- HTTP layer ------------------------------------------------------------------

def _ingest(trainer: Trainer, payload: dict, dataset_id: str, default_source: str) -> dict:
    if not isinstance(payload, dict):
        raise PayloadMalformed("request body must be a JSON object")
    records = payload.get("examples")
    if not isinstance(records, list):
        raise PayloadMalformed('body must carry an "examples" array')
    mode = payload.get("mode", "inline")
    if mode not in ("inline", "uri"):
        raise PayloadMalformed(f'mode must be "inline" or "uri", got {mode!r}')

    if dataset_id not in trainer.store.dataset_ids():
        if dataset_id == DEFAULT_DATASET:
            trainer.store.create_dataset(dataset_id=DEFAULT_DATASET)
        else:
            raise UnknownDataset(f"no dataset with id {dataset_id!r}")

    known_ids = {ex["id"] for ex in trainer.store.examples(dataset_id)}
    pinned = trainer.cfg.labels
    accepted = 0
    rejected = []
    for index, record in enumerate(records):
        example, reason = validate_record(record, known_ids, pinned)
        if example is not None and mode == "uri":
            try:
                text = fetch_uri(
                    example.log,
                    timeout_seconds=trainer.cfg.fetch_timeout_seconds,
                    size_cap_mib=trainer.cfg.fetch_size_cap_mib,
                )
                if not text:
                    reason, example = f"fetched empty log from {example.log}", None
                else:
                    example = LabeledExample(
                        id=example.id,
                        component=example.component,
                        label=example.label,
                        log=text,
                    )
            except FetchFailed as exc:
                reason, example = str(exc), None
        if example is None:
            record_id = record.get("id") if isinstance(record, dict) else None
            rejected.append({"index": index, "id": record_id, "reason": reason})
            continue
        source = f"uri:{record['log']}" if mode == "uri" else default_source
        trainer.store.add_example(dataset_id, example, source=source)
        known_ids.add(example.id)
        accepted += 1
    return {"accepted": accepted, "rejected": rejected}


def create_train_app(cfg: ServiceConfig, data_dir: Optional[Path] = None) -> FastAPI:
    data_dir = Path(data_dir or cfg.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(cfg, data_dir)
    scheduler = RetrainScheduler(
        cfg.retrain_interval_seconds,
        submit=lambda: trainer.submit({}, origin="schedule"),
    )
    ticker_stop = threading.Event()

    def _ticker() -> None:
        while not ticker_stop.is_set():
            scheduler.check()
            ticker_stop.wait(min(1.0, max(cfg.retrain_interval_seconds / 4, 0.05)))

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        trainer.start_worker()
        ticker = None
        if cfg.retrain_interval_seconds > 0:
            ticker = threading.Thread(
                target=_ticker, name="taxon-retrain-ticker", daemon=True
            )
            ticker.start()
        logger.info("training service configuration:\n%s", to_ini_text(cfg))
        yield
        ticker_stop.set()
        if ticker is not None:
            ticker.join(timeout=2.0)
        trainer.stop_worker()

    app = FastAPI(title="taxon training service", lifespan=lifespan)
    install_error_handlers(app)
    app.state.trainer = trainer
    app.state.scheduler = scheduler

    # -- ingestion and summary ------------------------------------------

    @app.post(API + "/train/data")
    def ingest(payload: dict = Body(...)):
        dataset_id = payload.get("dataset_id", DEFAULT_DATASET)
        if not isinstance(dataset_id, str) or not dataset_id:
            raise PayloadMalformed("dataset_id must be a non-empty string")
        return _ingest(trainer, payload, dataset_id, default_source="ingest")

    @app.get(API + "/train/data")
    def data_summary():
        summaries = trainer.store.summaries()
        per_label: dict[str, int] = {}
        for summary in summaries:
            for label, count in summary["per_label"].items():
                per_label[label] = per_label.get(label, 0) + count
        return {
            "datasets": summaries,
            "total_examples": sum(s["example_count"] for s in summaries),
            "per_label": per_label,
        }

    # -- training jobs ----------------------------------------------------

    @app.post(API + "/train/start", status_code=202)
    def train_start(payload: Optional[dict] = Body(default=None)):
        job = trainer.submit(payload or {}, origin="manual")
        return job.to_dict()

    @app.get(API + "/train/jobs/{job_id}")
    def train_job(job_id: str):
        job = trainer.jobs.get(job_id)
        if job is None:
            return JSONResponse(
                status_code=404,
                content={"error": "UnknownJob", "detail": f"no job {job_id!r}"},
            )
        return job.to_dict()

    @app.get(API + "/train/metrics")
    def train_metrics():
        summary = trainer.latest_summary()
        return {
            "job_id": summary["job_id"],
            "finished_at": summary["finished_at"],
            "artifact_digest": summary["artifact_digest"],
            "metrics": summary["metrics"],
            "leaderboard": summary["leaderboard"],
        }

    @app.get(API + "/train/model")
    def train_model():
        blob = trainer.latest_blob()
        return Response(
            content=blob,
            media_type="application/octet-stream",
            headers={"X-Model-Digest": artifact_digest(blob)},
        )

    @app.get(API + "/labels")
    def labels():
        if cfg.labels:
            return {"labels": sorted(cfg.labels), "pinned": True}
        return {"labels": trainer.store.known_labels(), "pinned": False}

    # -- dataset administration -------------------------------------------

    @app.post(API + "/datasets", status_code=201)
    def create_dataset(payload: Optional[dict] = Body(default=None)):
        payload = payload or {}
        name = payload.get("name")
        if name is not None and (not isinstance(name, str) or not name):
            raise PayloadMalformed("name must be a non-empty string when given")
        dataset_id = trainer.store.create_dataset(name=name)
        return {"id": dataset_id, "name": name or dataset_id}

    @app.post(API + "/datasets/{dataset_id}/examples")
    def upload_examples(dataset_id: str, payload: dict = Body(...)):
        return _ingest(trainer, payload, dataset_id, default_source="upload")

    @app.delete(API + "/datasets/{dataset_id}", status_code=204)
    def delete_dataset(dataset_id: str):
        trainer.store.delete_dataset(dataset_id)
        return Response(status_code=204)

    @app.get(API + "/datasets/{dataset_id}/export")
    def export_dataset(dataset_id: str):
        blob = trainer.store.export_dataset(dataset_id)
        return Response(
            content=blob,
            media_type="application/json",
            headers={
                "Content-Disposition": f'attachment; filename="{dataset_id}.json"'
            },
        )

    @app.post(API + "/datasets/{dataset_id}/examples/{example_id}/label")
    def relabel(dataset_id: str, example_id: str, payload: dict = Body(...)):
        new_label = payload.get("new_label")
        annotator = payload.get("annotator")
        if not isinstance(new_label, str) or not new_label:
            raise PayloadMalformed("new_label must be a non-empty string")
        if not isinstance(annotator, str) or not annotator:
            raise PayloadMalformed("annotator must be a non-empty string")
        trainer.store.get_example(dataset_id, example_id)  # 404 before policy
        if cfg.labels:
            if new_label not in cfg.labels:
                raise UnknownLabel(
                    f"label {new_label!r} is outside the pinned set"
                )
        elif not cfg.allow_new_labels and new_label not in trainer.store.known_labels():
            raise UnknownLabel(
                f"label {new_label!r} is unknown and label creation is disabled"
            )
        record = trainer.store.annotate(
            dataset_id, example_id, new_label, annotator=annotator
        )
        return record.to_dict()

    @app.get(API + "/datasets/{dataset_id}/history")
    def history(dataset_id: str):
        # deleted datasets keep their history, so any id is a valid query
        return {"records": [r.to_dict() for r in trainer.store.history(dataset_id)]}

    @app.get(API + "/health")
    def health():
        return {"status": "ok", "service": "train", "busy": trainer.busy()}

    if cfg.ui_dir and Path(cfg.ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=cfg.ui_dir, html=True), name="ui")

    return app
