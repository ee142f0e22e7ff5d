"""
The pipeline artifact: one portable, verifiable blob
=====================================================

A trained model is useless if serving needs the training code's Python
state. The artifact is a single self-contained blob: tokenizer settings,
vocabulary, idf table, fitted parameters, label set. This script trains a
small model, takes the artifact apart, tampers with it to show the digest
check, and proves the round trip changes nothing at all.
"""

import json
import zlib

import numpy as np

from taxon import (
    Dataset,
    GridSearchSpec,
    LabeledExample,
    artifact_digest,
    deserialize_pipeline,
    grid_search,
    serialize_pipeline,
)
from taxon.errors import DigestMismatch

rng = np.random.default_rng(23)
pools = {"auth": ["login_failed", "token_expired"], "storage": ["disk_full", "quota_hit"]}
filler = "request handler session worker retry status".split()
examples = [
    LabeledExample(
        f"{label}-{i}", "demo", label,
        " ".join(list(rng.choice(filler, 8)) + list(rng.choice(pool, 3))),
    )
    for label, pool in pools.items()
    for i in range(20)
]

spec = GridSearchSpec(
    algorithm_grids={"logistic": ({"reg": "l2", "strength": 0.01},)}, cv_folds=2, seed=23
)
artifact, _ = grid_search(Dataset.from_examples(examples), spec)
blob = serialize_pipeline(artifact)

# --- anatomy -----------------------------------------------------------------

header_line, _, payload = blob.partition(b"\n")
header = json.loads(header_line)
print(f"blob size: {len(blob)} bytes ({len(payload)} compressed payload)")
print("header:", json.dumps(header, indent=2))

decompressed = json.loads(zlib.decompress(payload))
print("\npayload sections:", ", ".join(sorted(decompressed)))
print(f"vocabulary size:  {len(decompressed['vocabulary']['tokens'])} tokens")
print(f"algorithm:        {decompressed['algorithm']} {decompressed['hyperparams']}")

# The digest in the header is the model's identity. Every classification
# record stores it, so results stay attributable across hot swaps.
digest = artifact_digest(blob)
print(f"\ndigest: {digest[:16]}... (sha256 of the compressed payload)")

# --- tampering is detected -----------------------------------------------------

corrupted = header_line + b"\n" + payload[:-4] + b"beef"
try:
    deserialize_pipeline(corrupted)
except DigestMismatch as exc:
    print(f"\ntampered payload rejected: {exc}")

# --- round trip is exact --------------------------------------------------------

restored = deserialize_pipeline(blob)
probes = [
    "worker login_failed token_expired retry",
    "disk_full on volume quota_hit",
    "session status request handler",
]
for text in probes:
    before = artifact.classify_text(text)
    after = restored.classify_text(text)
    match = "bit-identical" if before.class_scores == after.class_scores else "DIFFER"
    print(f"{match}: {text[:40]!r} -> {after.label} {after.confidence:.6f}")

# Re-serializing the restored artifact reproduces the same digest, so a
# model can hop train service -> disk -> classify service and keep its name.
assert artifact_digest(serialize_pipeline(restored)) == digest
print(f"\nre-serialized digest unchanged: {digest[:16]}...")
