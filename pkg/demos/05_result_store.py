"""
An append-only result store you can query and replay
=====================================================

Every stored classification is a timestamped record keyed by a stable id,
carrying the window it covered, the full score distribution, and the digest
of the model that produced it. Records are never mutated in place: a
correction appends a new version, and the JSONL backend compacts itself
once superseded versions pile up. The same interface runs on a single
JSONL file or on SQLite.
"""

import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

from taxon.result_store import ClassificationRecord, JsonlResultStore, SqliteResultStore

scratch = Path(tempfile.mkdtemp(prefix="taxon-demo-"))
t0 = datetime(2026, 1, 10, 9, 0, 0, tzinfo=timezone.utc)


def record(i, label, confidence, model="digest-aaa"):
    return ClassificationRecord(
        id=f"rec-{i:03d}",
        classified_at=t0 + timedelta(minutes=i),
        source="ci-run-4481",
        start_line=i * 100,
        end_line=i * 100 + 99,
        label=label,
        confidence=confidence,
        class_scores={label: confidence, "other": round(1 - confidence, 6)},
        model_digest=model,
        input_digest=f"sha-{i:03d}",
    )


# --- append and query ---------------------------------------------------------

store = JsonlResultStore(scratch / "results.jsonl")
for i, (label, conf) in enumerate(
    [("OOM", 0.97), ("network", 0.81), ("OOM", 0.92), ("disk", 0.88), ("OOM", 0.64)]
):
    store.append(record(i, label, conf))

print(f"stored {store.count()} records in {scratch / 'results.jsonl'}")

high_conf_oom = store.query(label="OOM", min_confidence=0.9)
print(f"\nOOM at >= 0.9 confidence: {[r.id for r in high_conf_oom]}")

morning = store.query(
    from_time=t0 + timedelta(minutes=1), to_time=t0 + timedelta(minutes=3)
)
print(f"minutes 1..3 (inclusive both ends): {[r.id for r in morning]}")

# --- correction by version, not mutation ----------------------------------------

fixed = record(4, "OOM", 0.95, model="digest-bbb")
store.update(fixed)
print(f"\nrec-004 reclassified under a newer model: {store.get('rec-004').model_digest}")
print(f"count stays {store.count()} (latest version wins, history lives in the file)")

# --- export / import across backends ---------------------------------------------

exported = store.export()
print(f"\nexport: {len(exported.splitlines())} JSONL lines, first one:")
print(" ", exported.splitlines()[0][:100].decode(), "...")

mirror = SqliteResultStore(scratch / "results.db")
mirror.import_records(exported)
assert [r.id for r in mirror.query()] == [r.id for r in store.query()]
print(f"\nSQLite mirror answers the same queries: {[r.id for r in mirror.query(label='OOM')]}")

# --- compaction -------------------------------------------------------------------

# Rewriting the same record hundreds of times grows the JSONL file with
# dead versions; once superseded lines outnumber max(64, live), the store
# rewrites the file down to the live set on its own.
updates = 70
for version in range(updates):
    store.update(record(0, "OOM", 0.97))
lines = len((scratch / "results.jsonl").read_bytes().splitlines())
print(
    f"\nafter {updates} rewrites of one record: {lines} lines on disk"
    f" (an append-only file would hold {5 + 1 + updates}); live records: {store.count()}"
)
assert lines < 5 + 1 + updates
assert store.count() == 5

store.close()
mirror.close()
