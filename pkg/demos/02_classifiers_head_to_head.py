"""
Four classifiers on one failure corpus
=======================================

The training pipeline supports four model families: Gaussian naive Bayes,
multinomial logistic regression, a linear SVM, and a random forest. Here
each one trains on the same synthetic failure corpus and reports held-out
accuracy, so their trade-offs are visible side by side: naive Bayes trains
in milliseconds, the forest costs the most and is the only non-linear one.
"""

import time

import numpy as np

from taxon import Dataset, GridSearchSpec, LabeledExample, evaluate, grid_search, split_train_test

# --- build a labeled corpus ------------------------------------------------
# Three failure categories, each with exclusive keywords, diluted with a
# shared pool of boilerplate so documents are mostly indistinguishable.

KEYWORDS = {
    "OOM": ["oom_killer", "malloc_failed", "out_of_memory", "swap_full"],
    "network": ["connection_refused", "packet_loss", "dns_timeout", "link_down"],
    "disk": ["io_error", "sector_remap", "raid_degraded", "fs_readonly"],
}
BOILERPLATE = (
    "info daemon service started stopped process thread status update "
    "request response node host agent worker retry queue event handler"
).split()

rng = np.random.default_rng(3)
examples = []
for label, pool in KEYWORDS.items():
    for i in range(60):
        tokens = list(rng.choice(BOILERPLATE, size=14)) + list(rng.choice(pool, size=6))
        rng.shuffle(tokens)
        examples.append(
            LabeledExample(
                id=f"{label}-{i}",
                component="demo",
                label=label,
                log=" ".join(tokens),
            )
        )

dataset = Dataset.from_examples(examples)
train, test = split_train_test(dataset, test_fraction=0.25, seed=3)
print(f"corpus: {len(examples)} documents, 3 classes")
print(f"split:  {len(train.examples)} train / {len(test.examples)} test\n")

# --- train each family with one fixed hyperparameter point ------------------

candidates = {
    "gaussian_nb": {"epsilon": 1e-9},
    "logistic": {"reg": "l2", "strength": 0.01},
    "linear_svm": {"C": 1.0},
    "random_forest": {"n_trees": 50, "max_depth": 16},
}

print(f"{'algorithm':<14} {'test acc':>8} {'macro F1':>9} {'train time':>11}")
for name, hyperparams in candidates.items():
    spec = GridSearchSpec(algorithm_grids={name: (hyperparams,)}, cv_folds=2, seed=3)
    started = time.perf_counter()
    artifact, _ = grid_search(train, spec)
    elapsed = time.perf_counter() - started
    metrics = evaluate(artifact, test, training_time=elapsed)
    print(f"{name:<14} {metrics.accuracy:>8.3f} {metrics.macro_f1:>9.3f} {elapsed:>10.2f}s")

# --- inspect one prediction --------------------------------------------------

spec = GridSearchSpec(algorithm_grids={"logistic": ({"reg": "l2", "strength": 0.01},)}, cv_folds=2, seed=3)
artifact, _ = grid_search(train, spec)

probe = "worker retry malloc_failed swap_full oom_killer status update"
prediction = artifact.classify_text(probe)
print(f"\nprobe: {probe!r}")
print(f"label: {prediction.label}  (confidence {prediction.confidence:.3f})")
for label, score in zip(artifact.label_set.labels, prediction.class_scores):
    bar = "#" * int(score * 40)
    print(f"  {label:<8} {score:6.3f} {bar}")
