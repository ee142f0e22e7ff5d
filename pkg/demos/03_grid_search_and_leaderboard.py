"""
Exhaustive grid search with a cross-validated leaderboard
==========================================================

Model selection is a declared search space, not a loop someone wrote by
hand: every tokenizer x vectorizer x algorithm x hyperparameter combination
is scored by stratified k-fold macro-F1, every combination lands on the
leaderboard (including failed ones, with their error), and the winner is
refit on the full training split.
"""

import numpy as np

from taxon import (
    Dataset,
    GridSearchSpec,
    LabeledExample,
    TokenizerConfig,
    VectorizerConfig,
    enumerate_combos,
    evaluate,
    grid_search,
    leaderboard_text,
    split_train_test,
)

rng = np.random.default_rng(17)
POOLS = {
    "overload": ["cpu_saturated", "queue_overflow", "backpressure", "latency_breach"],
    "hardware": ["ecc_error", "fan_stall", "raid_degraded", "sensor_fault"],
}
FILLER = "service node status retry queue worker update event check report".split()

other = {"overload": POOLS["hardware"], "hardware": POOLS["overload"]}
examples = []
for label, pool in POOLS.items():
    for i in range(40):
        tokens = list(rng.choice(FILLER, size=16)) + list(rng.choice(pool, size=2))
        if i % 5 == 0:  # a fifth of the corpus carries a misleading keyword
            tokens.append(str(rng.choice(other[label])))
        rng.shuffle(tokens)
        examples.append(LabeledExample(f"{label}-{i}", "demo", label, " ".join(tokens)))

train, test = split_train_test(Dataset.from_examples(examples), test_fraction=0.2, seed=17)

# The search space: two tokenizers (unigrams vs uni+bigrams), one vectorizer,
# two algorithm families with small hyperparameter sweeps.
spec = GridSearchSpec(
    tokenizer_grid=(TokenizerConfig(), TokenizerConfig(n_min=1, n_max=2)),
    vectorizer_grid=(VectorizerConfig(),),
    algorithm_grids={
        "gaussian_nb": ({"epsilon": 1e-9}, {"epsilon": 1e-6}),
        "logistic": ({"reg": "l2", "strength": 0.01}, {"reg": "l1", "strength": 0.01}),
    },
    cv_folds=3,
    seed=17,
)

combos = enumerate_combos(spec)
print(f"search space: {len(combos)} combinations")
print("  2 tokenizers x 1 vectorizer x (2 nb + 2 logistic) hyperparameter points\n")

artifact, leaderboard = grid_search(train, spec)

print(leaderboard_text(leaderboard))

print(f"winner: {artifact.algorithm} {artifact.hyperparams}")
print(f"  tokenizer n-grams: {artifact.tokenizer.n_min}..{artifact.tokenizer.n_max}")

metrics = evaluate(artifact, test)
print(f"\nheld-out evaluation ({len(test.examples)} documents):")
print(f"  accuracy {metrics.accuracy:.3f}, macro F1 {metrics.macro_f1:.3f}")
print(f"  {'class':<10} {'precision':>9} {'recall':>7} {'F1':>6} {'n':>4}")
for label, per_class in metrics.per_class.items():
    print(
        f"  {label:<10} {per_class.precision:>9.3f} {per_class.recall:>7.3f}"
        f" {per_class.f1:>6.3f} {per_class.support:>4}"
    )

print("\nconfusion matrix (rows = true class):")
labels = list(artifact.label_set.labels)
print("  " + " ".join(f"{l[:8]:>9}" for l in [""] + labels))
for label, row in zip(labels, metrics.confusion):
    print(f"  {label:>9} " + " ".join(f"{v:>9}" for v in row))
