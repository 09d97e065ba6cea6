"""
Counting and scoring every decomposition
========================================

The set of spellings of a target forms a lattice.  Counting uses dynamic
programming; enumeration lists every path.  With a model, the lattice gives
the exact marginal likelihood and the posterior over spellings.
"""

import numpy as np

from lsd import (ModelConfig, Seq2Seq, Vocabulary, count_decompositions, enumerate_decompositions,
                 exact_log_marginal, exact_posterior)

vocab = Vocabulary.from_texts(["a", "b", "ab", "ba", "aba"])
y = "ababa"

print("count:", count_decompositions(y, vocab))
for z in enumerate_decompositions(y, vocab):
    print("  ", "|".join(vocab[t].text for t in z))

# Counts grow like Fibonacci numbers when every pair is a token.
fib = Vocabulary.from_texts(["a", "aa"])
print([count_decompositions("a" * n, fib) for n in range(1, 12)])

# An untrained model already assigns a posterior over the spellings.
cfg = ModelConfig(input_dim=3, vocab_size=len(vocab), enc_hidden=8, enc_layers=2,
                  subsample_layers=1, dec_hidden=8, att_hidden=8, embed_dim=4, out_hidden=8,
                  dtype="float64")
model = Seq2Seq(cfg, seed=0)
# fresh weights are tiny and give a nearly flat posterior; sharpen them
for v in model.params.values.values():
    v *= 15
x = np.random.default_rng(0).normal(size=(6, 3))
print("log p(y|x) =", exact_log_marginal(model, x, y, vocab))
post = exact_posterior(model, x, y, vocab)
for z, p in sorted(zip(post.items, post.probabilities()), key=lambda t: -t[1])[:4]:
    print(f"  {'|'.join(vocab[t].text for t in z):12s} {p:.4f}")
