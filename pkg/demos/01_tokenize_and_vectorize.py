"""
From raw log text to weighted feature vectors
==============================================

A log line becomes a classification input in three steps: cut the text
into n-gram tokens, build a vocabulary with document frequencies over a
corpus, then weight each token count by its inverse document frequency.
This script walks a tiny corpus through all three and prints what each
stage produces.
"""

from datetime import datetime, timedelta, timezone

from taxon import TokenizerConfig, VectorizerConfig, build_vocabulary, compute_idf, tokenize, vectorize
from taxon.tokenize import LogSnippet, extract_failure_window

# --- 1. tokenization -----------------------------------------------------

line = "kernel: Out of memory: Kill process 4321 (java) score 987"

unigrams = tokenize(line, TokenizerConfig())
print("word unigrams:")
print(" ", unigrams)

# Bigrams keep phrases like "out of" / "kill process" together, which a
# bag-of-words model would otherwise lose entirely.
bigrams = tokenize(line, TokenizerConfig(n_min=1, n_max=2))
print(f"\nwith bigrams added ({len(bigrams)} tokens total), a sample:")
print(" ", [t for t in bigrams if " " in t][:5])

trigrams = tokenize("disk fail", TokenizerConfig(mode="char", n_min=3, n_max=3))
print("\ncharacter trigrams of 'disk fail':")
print(" ", trigrams)

# --- 2. failure-window extraction ----------------------------------------

# Real CI logs are long; the informative part is the few seconds before
# the failure. Lines without their own timestamp inherit the one above.
raw = "\n".join(
    [
        "2024-03-07T10:15:01Z boot: loading modules",
        "2024-03-07T10:15:02Z scheduler: all queues ready",
        "2024-03-07T10:17:40Z worker: task 88 started",
        "    at java.base/java.lang.Thread.run",  # no timestamp, inherits 10:17:40
        "2024-03-07T10:17:43Z kernel: oom_killer invoked",
        "2024-03-07T10:17:44Z worker: task 88 killed",
    ]
)
failure = datetime(2024, 3, 7, 10, 17, 44, tzinfo=timezone.utc)
window = extract_failure_window(
    LogSnippet(text=raw), failure_time=failure, lookback=timedelta(seconds=5)
)
print("\nlines within 5s of the failure:")
for kept in window.text.splitlines():
    print("  |", kept)

# --- 3. vocabulary, idf, tf-idf ------------------------------------------

corpus = [
    "oom_killer invoked for process java",
    "connection refused by upstream host",
    "process exited normally status zero",
    "oom_killer invoked for process python",
    "upstream host healthy again process resumed",
]
config = TokenizerConfig()
token_docs = [tokenize(doc, config) for doc in corpus]

vec_config = VectorizerConfig()  # keep every token, tf-idf on
vocab = build_vocabulary(token_docs, vec_config)
idf = compute_idf(vocab)

print(f"\nvocabulary over {len(corpus)} documents ({vocab.dimension} tokens):")
print(f"  {'token':<12} {'df':>3} {'idf':>8}")
for token in vocab.index_order():
    print(f"  {token:<12} {vocab.doc_freq[token]:>3} {idf[vocab.tokens[token]]:>8.4f}")

# "process" appears in 4 of 5 documents, so ln(5/(1+4)) = 0 exactly: a
# token present everywhere carries no class signal and is weighted out.
# A token in every document would even go negative; that is the signal
# to revisit the stop-word list rather than a bug in the math.

vector = vectorize(token_docs[0], vocab, idf, vec_config)
print(f"\ntf-idf vector of doc 0 ({len(vector.entries)} non-zeros of {vector.dimension}):")
order = vocab.index_order()
for index, weight in sorted(vector.entries.items()):
    print(f"  {order[index]:<12} {weight:>8.4f}")
