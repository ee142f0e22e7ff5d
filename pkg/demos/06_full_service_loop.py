"""
The full operational loop: install, train, hot-swap, classify
==============================================================

Everything the library does is also reachable as two long-running
services managed by the ``taxon`` command: a training service that owns
labeled datasets and produces model artifacts, and a classification
service that serves whichever artifact was last swapped in. This script
drives the entire loop against a scratch install root and cleans up
after itself. Expect it to take on the order of ten seconds.
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import httpx
import numpy as np

TRAIN = "http://127.0.0.1:18701/api/v1"
CLASSIFY = "http://127.0.0.1:18702/api/v1"

root = Path(tempfile.mkdtemp(prefix="taxon-demo-")) / "root"


def taxon(*args):
    result = subprocess.run(
        [sys.executable, "-m", "taxon.cli", *map(str, args), "--root", root],
        capture_output=True,
        text=True,
    )
    print(f"$ taxon {' '.join(map(str, args))}")
    for line in result.stdout.strip().splitlines():
        print(f"  {line}")
    if result.returncode != 0:
        raise SystemExit(result.stderr or f"exit {result.returncode}")
    return result


# --- 1. install and start both services --------------------------------------

taxon("install", "all")
taxon(
    "start", "all",
    "--set", "service.train_port=18701",
    "--set", "service.classify_port=18702",
    "--timeout", 30,
)

try:
    # --- 2. ingest a labeled corpus -------------------------------------------

    rng = np.random.default_rng(31)
    pools = {
        "OOM": ["oom_killer", "malloc_failed", "swap_full", "heap_exhausted"],
        "network": ["packet_loss", "dns_timeout", "link_down", "socket_reset"],
    }
    filler = "daemon worker status retry queue event node agent".split()
    examples = [
        {
            "id": f"{label}-{i}",
            "component": "demo",
            "label": label,
            "log": " ".join(list(rng.choice(filler, 10)) + list(rng.choice(pool, 4))),
        }
        for label, pool in pools.items()
        for i in range(30)
    ]
    ingested = httpx.post(f"{TRAIN}/train/data", json={"examples": examples}).json()
    print(f"\ningested: {ingested['accepted']} accepted, {len(ingested['rejected'])} rejected")

    # --- 3. train and wait ------------------------------------------------------

    job = httpx.post(
        f"{TRAIN}/train/start",
        json={"algorithms": ["logistic"], "cv_folds": 2},
    ).json()
    print(f"training job {job['job_id']} submitted (state: {job['state']})")

    import time

    while True:
        job = httpx.get(f"{TRAIN}/train/jobs/{job['job_id']}").json()
        if job["state"] in ("succeeded", "failed"):
            break
        time.sleep(0.2)
    assert job["state"] == "succeeded", job["error"]
    print(f"job finished; winner: {job['leaderboard'][0]['algorithm']}"
          f" (CV macro-F1 {job['leaderboard'][0]['mean_score']:.3f})")
    print(f"held-out accuracy: {job['metrics']['accuracy']:.3f}")

    # --- 4. move the artifact into the classifier -------------------------------

    download = httpx.get(f"{TRAIN}/train/model")
    swap = httpx.post(f"{CLASSIFY}/model", content=download.content).json()
    print(f"\nhot-swapped model {swap['digest'][:16]}... into the classifier")
    print(f"labels: {swap['labels']}")

    # --- 5. classify a windowed log ---------------------------------------------

    lines = [" ".join(rng.choice(filler, 5)) for _ in range(400)]
    for i in range(250, 270):  # bury a network fault in lines 250..269
        lines[i] = " ".join(rng.choice(pools["network"], 4))

    response = httpx.post(
        f"{CLASSIFY}/classify",
        json={"log": "\n".join(lines), "window_lines": 50},
    ).json()
    item = response["items"][0]
    print(f"\nclassified {len(item['records'])} windows of 50 lines each:")
    for rec in item["records"]:
        w = rec["window"]
        flag = " <-- stored" if rec["stored"] else ""
        print(f"  lines {w['start_line']:>3}-{w['end_line']:>3}:"
              f" {rec['label']:<8} confidence {rec['confidence']:.3f}{flag}")
    agg = item["aggregate"]
    print(f"verdict: {agg['label']} in lines"
          f" {agg['window']['start_line']}-{agg['window']['end_line']}")

    # --- 6. the stored record survives and is queryable ---------------------------

    stored = httpx.get(f"{CLASSIFY}/results", params={"min_confidence": 0.8}).json()
    print(f"\nrecords stored at >= 0.8 confidence: {len(stored['records'])}")

finally:
    print()
    taxon("stop", "all")
    taxon("remove", "all", "--purge")
    shutil.rmtree(root.parent, ignore_errors=True)
