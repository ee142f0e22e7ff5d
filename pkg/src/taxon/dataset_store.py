"""Single-file dataset persistence for the training service.

Every mutation rewrites the whole store to a temporary file and atomically
replaces the original (os.replace), so a crash mid-write leaves the previous
consistent state on disk rather than a torn file. All mutations are serialized
through one lock; reads return copies.

Annotation records are append-only and survive dataset deletion: the history
is the audit trail, the dataset is just current state.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

from .errors import UnknownDataset, UnknownExample
from .pipeline import LabeledExample

__all__ = ["AnnotationRecord", "DatasetStore", "export_bytes"]

EXPORT_FIELDS = ("id", "component", "label", "log")


@dataclass(frozen=True)
class AnnotationRecord:
    """One relabelling event; old_label is None for first-time labels."""

    dataset_id: str
    example_id: str
    annotator: str
    old_label: Optional[str]
    new_label: str
    annotated_at: datetime
    seq: int

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "example_id": self.example_id,
            "annotator": self.annotator,
            "old_label": self.old_label,
            "new_label": self.new_label,
            "annotated_at": self.annotated_at.isoformat(),
            "seq": self.seq,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationRecord":
        return cls(
            dataset_id=data["dataset_id"],
            example_id=data["example_id"],
            annotator=data["annotator"],
            old_label=data["old_label"],
            new_label=data["new_label"],
            annotated_at=datetime.fromisoformat(data["annotated_at"]),
            seq=data["seq"],
        )


def export_bytes(examples: list[dict]) -> bytes:
    """Deterministic export: field order id/component/label/log, 2-space indent.

    Identical content always yields identical bytes, which is what lets a
    round-trip through the annotation UI be verified by byte comparison.
    """
    rows = [{field: ex[field] for field in EXPORT_FIELDS} for ex in examples]
    return (json.dumps(rows, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _now() -> datetime:
    return datetime.now(timezone.utc)


class DatasetStore:
    """Datasets plus their append-only annotation history, in one JSON file."""

    def __init__(self, path: Union[str, Path]):
        self._path = Path(path)
        self._lock = threading.Lock()
        if self._path.exists():
            state = json.loads(self._path.read_text(encoding="utf-8"))
        else:
            state = {"datasets": {}, "annotations": [], "next_seq": 0}
        self._datasets: dict[str, dict] = state["datasets"]
        self._annotations: list[dict] = state["annotations"]
        self._next_seq: int = state["next_seq"]
        if not self._path.exists():
            with self._lock:
                self._commit()

    # -- persistence ------------------------------------------------------

    def _commit(self) -> None:
        state = {
            "datasets": self._datasets,
            "annotations": self._annotations,
            "next_seq": self._next_seq,
        }
        tmp = self._path.with_suffix(self._path.suffix + ".tmp")
        self._path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_text(json.dumps(state, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, self._path)

    def _dataset(self, dataset_id: str) -> dict:
        try:
            return self._datasets[dataset_id]
        except KeyError:
            raise UnknownDataset(f"no dataset with id {dataset_id!r}") from None

    # -- dataset CRUD -----------------------------------------------------

    def create_dataset(
        self, name: Optional[str] = None, dataset_id: Optional[str] = None
    ) -> str:
        with self._lock:
            dataset_id = dataset_id or f"ds-{uuid.uuid4().hex[:12]}"
            if dataset_id in self._datasets:
                raise ValueError(f"dataset id {dataset_id!r} already exists")
            self._datasets[dataset_id] = {
                "name": name or dataset_id,
                "created_at": _now().isoformat(),
                "modified_at": _now().isoformat(),
                "examples": [],
            }
            self._commit()
            return dataset_id

    def delete_dataset(self, dataset_id: str) -> None:
        with self._lock:
            self._dataset(dataset_id)
            del self._datasets[dataset_id]
            self._commit()

    def dataset_ids(self) -> list[str]:
        with self._lock:
            return list(self._datasets)

    def summaries(self) -> list[dict]:
        with self._lock:
            out = []
            for dataset_id, data in self._datasets.items():
                per_label: dict[str, int] = {}
                for ex in data["examples"]:
                    per_label[ex["label"]] = per_label.get(ex["label"], 0) + 1
                out.append(
                    {
                        "id": dataset_id,
                        "name": data["name"],
                        "example_count": len(data["examples"]),
                        "per_label": per_label,
                        "created_at": data["created_at"],
                        "modified_at": data["modified_at"],
                    }
                )
            return out

    # -- examples ---------------------------------------------------------

    def add_example(
        self, dataset_id: str, example: LabeledExample, source: str = "inline"
    ) -> None:
        with self._lock:
            data = self._dataset(dataset_id)
            if any(ex["id"] == example.id for ex in data["examples"]):
                raise ValueError(f"duplicate example id {example.id!r}")
            data["examples"].append(
                {
                    "id": example.id,
                    "component": example.component,
                    "label": example.label,
                    "log": example.log,
                    "source": source,
                }
            )
            data["modified_at"] = _now().isoformat()
            self._commit()

    def examples(self, dataset_id: str) -> list[dict]:
        with self._lock:
            return [dict(ex) for ex in self._dataset(dataset_id)["examples"]]

    def get_example(self, dataset_id: str, example_id: str) -> dict:
        with self._lock:
            for ex in self._dataset(dataset_id)["examples"]:
                if ex["id"] == example_id:
                    return dict(ex)
            raise UnknownExample(
                f"dataset {dataset_id!r} has no example {example_id!r}"
            )

    def all_examples(self) -> list[LabeledExample]:
        """The training pool: every example across every dataset."""
        with self._lock:
            out = []
            for data in self._datasets.values():
                for ex in data["examples"]:
                    out.append(
                        LabeledExample(
                            id=ex["id"],
                            component=ex["component"],
                            label=ex["label"],
                            log=ex["log"],
                        )
                    )
            return out

    def known_labels(self) -> list[str]:
        with self._lock:
            labels = set()
            for data in self._datasets.values():
                labels.update(ex["label"] for ex in data["examples"])
            return sorted(labels)

    def export_dataset(self, dataset_id: str) -> bytes:
        with self._lock:
            return export_bytes(self._dataset(dataset_id)["examples"])

    # -- annotation -------------------------------------------------------

    def annotate(
        self,
        dataset_id: str,
        example_id: str,
        new_label: str,
        annotator: str,
        now: Optional[datetime] = None,
    ) -> AnnotationRecord:
        with self._lock:
            data = self._dataset(dataset_id)
            for ex in data["examples"]:
                if ex["id"] == example_id:
                    record = AnnotationRecord(
                        dataset_id=dataset_id,
                        example_id=example_id,
                        annotator=annotator,
                        old_label=ex["label"],
                        new_label=new_label,
                        annotated_at=now or _now(),
                        seq=self._next_seq,
                    )
                    ex["label"] = new_label
                    data["modified_at"] = _now().isoformat()
                    self._annotations.append(record.to_dict())
                    self._next_seq += 1
                    self._commit()
                    return record
            raise UnknownExample(
                f"dataset {dataset_id!r} has no example {example_id!r}"
            )

    def history(self, dataset_id: Optional[str] = None) -> list[AnnotationRecord]:
        """Annotation records, oldest first; seq breaks timestamp ties."""
        with self._lock:
            records = [
                AnnotationRecord.from_dict(a)
                for a in self._annotations
                if dataset_id is None or a["dataset_id"] == dataset_id
            ]
        return sorted(records, key=lambda r: (r.annotated_at, r.seq))
