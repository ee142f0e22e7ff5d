"""Persistence for classification results.

Two interchangeable backends sit behind the same narrow interface:

* ``jsonl`` (default): append-only file of JSON lines. Updates append a new
  version of the record; readers keep the last version per id. Compaction
  rewrites the file with only live versions once superseded lines pile up.
* ``sqlite``: one table keyed by record id, updates in place.

Queries return records in classified-at order (insertion order breaks ties)
with optional filters on time range, label, confidence floor, and the digest
of the model that produced them.
"""

from __future__ import annotations

import json
import os
import sqlite3
import threading
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

from .errors import UnknownRecord

__all__ = [
    "ClassificationRecord",
    "ResultStore",
    "JsonlResultStore",
    "SqliteResultStore",
    "make_result_store",
]


@dataclass(frozen=True)
class ClassificationRecord:
    """One classified window and everything needed to audit or redo it."""

    id: str
    classified_at: datetime
    source: str
    start_line: int
    end_line: int
    label: str
    confidence: float
    class_scores: dict
    model_digest: str
    input_digest: str = ""
    input_text: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "classified_at": self.classified_at.isoformat(),
            "source": self.source,
            "start_line": self.start_line,
            "end_line": self.end_line,
            "label": self.label,
            "confidence": self.confidence,
            "class_scores": self.class_scores,
            "model_digest": self.model_digest,
            "input_digest": self.input_digest,
            "input_text": self.input_text,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassificationRecord":
        data = dict(data)
        data["classified_at"] = datetime.fromisoformat(data["classified_at"])
        return cls(**data)


def _matches(
    record: ClassificationRecord,
    from_time: Optional[datetime],
    to_time: Optional[datetime],
    label: Optional[str],
    min_confidence: Optional[float],
    model: Optional[str],
) -> bool:
    if from_time is not None and record.classified_at < from_time:
        return False
    if to_time is not None and record.classified_at > to_time:
        return False
    if label is not None and record.label != label:
        return False
    if min_confidence is not None and record.confidence < min_confidence:
        return False
    if model is not None and record.model_digest != model:
        return False
    return True


class ResultStore:
    """Interface both backends implement."""

    def append(self, record: ClassificationRecord) -> None:
        raise NotImplementedError

    def update(self, record: ClassificationRecord) -> None:
        raise NotImplementedError

    def get(self, record_id: str) -> ClassificationRecord:
        raise NotImplementedError

    def query(
        self,
        from_time: Optional[datetime] = None,
        to_time: Optional[datetime] = None,
        label: Optional[str] = None,
        min_confidence: Optional[float] = None,
        model: Optional[str] = None,
        limit: Optional[int] = None,
    ) -> list[ClassificationRecord]:
        raise NotImplementedError

    def count(self) -> int:
        raise NotImplementedError

    def export(self) -> bytes:
        """JSONL dump of live records in query order; reimportable."""
        lines = [
            json.dumps(r.to_dict(), sort_keys=True, ensure_ascii=False)
            for r in self.query()
        ]
        return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")

    def import_records(self, blob: bytes) -> int:
        n = 0
        for line in blob.decode("utf-8").splitlines():
            if not line.strip():
                continue
            self.append(ClassificationRecord.from_dict(json.loads(line)))
            n += 1
        return n

    def close(self) -> None:
        pass


class JsonlResultStore(ResultStore):
    """Append-only JSON-lines backend; last version of an id wins."""

    def __init__(self, path: Union[str, Path]):
        self._path = Path(path)
        self._lock = threading.Lock()
        # id -> latest record, in first-appended order
        self._live: dict[str, ClassificationRecord] = {}
        self._superseded = 0
        if self._path.exists():
            with self._path.open(encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    record = ClassificationRecord.from_dict(json.loads(line))
                    if record.id in self._live:
                        self._superseded += 1
                    self._live[record.id] = record
        else:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.touch()

    def _append_line(self, record: ClassificationRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False)
        with self._path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def append(self, record: ClassificationRecord) -> None:
        with self._lock:
            if record.id in self._live:
                raise ValueError(f"record id {record.id!r} already stored")
            self._live[record.id] = record
            self._append_line(record)

    def update(self, record: ClassificationRecord) -> None:
        with self._lock:
            if record.id not in self._live:
                raise UnknownRecord(f"no record with id {record.id!r}")
            self._live[record.id] = record
            self._superseded += 1
            self._append_line(record)
            if self._superseded > max(64, len(self._live)):
                self._compact_locked()

    def compact(self) -> None:
        with self._lock:
            self._compact_locked()

    def _compact_locked(self) -> None:
        tmp = self._path.with_suffix(self._path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for record in self._live.values():
                fh.write(
                    json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False)
                    + "\n"
                )
        os.replace(tmp, self._path)
        self._superseded = 0

    def get(self, record_id: str) -> ClassificationRecord:
        with self._lock:
            try:
                return self._live[record_id]
            except KeyError:
                raise UnknownRecord(f"no record with id {record_id!r}") from None

    def query(self, from_time=None, to_time=None, label=None,
              min_confidence=None, model=None, limit=None):
        with self._lock:
            records = list(self._live.values())
        records = [
            r for r in records
            if _matches(r, from_time, to_time, label, min_confidence, model)
        ]
        records.sort(key=lambda r: r.classified_at)
        return records[:limit] if limit is not None else records

    def count(self) -> int:
        with self._lock:
            return len(self._live)


class SqliteResultStore(ResultStore):
    """SQLite backend with the same observable behavior as the JSONL one."""

    def __init__(self, path: Union[str, Path]):
        self._path = Path(path)
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(str(self._path), check_same_thread=False)
        self._conn.execute(
            """
            CREATE TABLE IF NOT EXISTS results (
                seq INTEGER PRIMARY KEY AUTOINCREMENT,
                id TEXT UNIQUE NOT NULL,
                classified_at TEXT NOT NULL,
                source TEXT NOT NULL,
                start_line INTEGER NOT NULL,
                end_line INTEGER NOT NULL,
                label TEXT NOT NULL,
                confidence REAL NOT NULL,
                class_scores TEXT NOT NULL,
                model_digest TEXT NOT NULL,
                input_digest TEXT NOT NULL,
                input_text TEXT
            )
            """
        )
        self._conn.commit()

    @staticmethod
    def _row_to_record(row) -> ClassificationRecord:
        return ClassificationRecord(
            id=row[0],
            classified_at=datetime.fromisoformat(row[1]),
            source=row[2],
            start_line=row[3],
            end_line=row[4],
            label=row[5],
            confidence=row[6],
            class_scores=json.loads(row[7]),
            model_digest=row[8],
            input_digest=row[9],
            input_text=row[10],
        )

    _COLUMNS = ("id, classified_at, source, start_line, end_line, label, "
                "confidence, class_scores, model_digest, input_digest, input_text")

    def append(self, record: ClassificationRecord) -> None:
        with self._lock:
            try:
                self._conn.execute(
                    f"INSERT INTO results ({self._COLUMNS}) "
                    "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        record.id,
                        record.classified_at.isoformat(),
                        record.source,
                        record.start_line,
                        record.end_line,
                        record.label,
                        record.confidence,
                        json.dumps(record.class_scores, sort_keys=True),
                        record.model_digest,
                        record.input_digest,
                        record.input_text,
                    ),
                )
            except sqlite3.IntegrityError:
                raise ValueError(f"record id {record.id!r} already stored") from None
            self._conn.commit()

    def update(self, record: ClassificationRecord) -> None:
        with self._lock:
            cur = self._conn.execute(
                "UPDATE results SET classified_at=?, source=?, start_line=?, "
                "end_line=?, label=?, confidence=?, class_scores=?, "
                "model_digest=?, input_digest=?, input_text=? WHERE id=?",
                (
                    record.classified_at.isoformat(),
                    record.source,
                    record.start_line,
                    record.end_line,
                    record.label,
                    record.confidence,
                    json.dumps(record.class_scores, sort_keys=True),
                    record.model_digest,
                    record.input_digest,
                    record.input_text,
                    record.id,
                ),
            )
            self._conn.commit()
            if cur.rowcount == 0:
                raise UnknownRecord(f"no record with id {record.id!r}")

    def get(self, record_id: str) -> ClassificationRecord:
        with self._lock:
            row = self._conn.execute(
                f"SELECT {self._COLUMNS} FROM results WHERE id=?", (record_id,)
            ).fetchone()
        if row is None:
            raise UnknownRecord(f"no record with id {record_id!r}")
        return self._row_to_record(row)

    def query(self, from_time=None, to_time=None, label=None,
              min_confidence=None, model=None, limit=None):
        clauses, params = [], []
        if from_time is not None:
            clauses.append("classified_at >= ?")
            params.append(from_time.isoformat())
        if to_time is not None:
            clauses.append("classified_at <= ?")
            params.append(to_time.isoformat())
        if label is not None:
            clauses.append("label = ?")
            params.append(label)
        if min_confidence is not None:
            clauses.append("confidence >= ?")
            params.append(min_confidence)
        if model is not None:
            clauses.append("model_digest = ?")
            params.append(model)
        sql = f"SELECT {self._COLUMNS} FROM results"
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY classified_at, seq"
        if limit is not None:
            sql += " LIMIT ?"
            params.append(limit)
        with self._lock:
            rows = self._conn.execute(sql, params).fetchall()
        return [self._row_to_record(r) for r in rows]

    def count(self) -> int:
        with self._lock:
            (n,) = self._conn.execute("SELECT COUNT(*) FROM results").fetchone()
        return n

    def close(self) -> None:
        self._conn.close()


def make_result_store(backend: str, path: Union[str, Path]) -> ResultStore:
    if backend == "jsonl":
        return JsonlResultStore(path)
    if backend == "sqlite":
        return SqliteResultStore(path)
    raise ValueError(f"unknown result store backend {backend!r}")


def strip_input(record: ClassificationRecord) -> ClassificationRecord:
    """Drop retained input, e.g. when retention is disabled."""
    return replace(record, input_text=None)
