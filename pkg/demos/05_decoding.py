"""
Beam search, n-best lists and error rates
=========================================

Beam search keeps the best partial spellings at every step.  Different
spellings of the same string may appear separately in the n-best list;
merging keeps only the best one.  Edit distance gives word and character
error rates.
"""

import numpy as np

from lsd import BeamConfig, ModelConfig, Seq2Seq, Vocabulary, beam_search
from lsd.decoding import collapse_nbest, coverage_distribution, edit_distance_metrics, format_nbest

vocab = Vocabulary.from_texts(["a", "b", "ab", "ba"])
model = Seq2Seq(ModelConfig(input_dim=3, vocab_size=len(vocab), enc_hidden=6, enc_layers=2,
                            subsample_layers=1, dec_hidden=6, att_hidden=6, embed_dim=3,
                            out_hidden=6), seed=3)
# scale up the weights so the untrained model is confident enough to stop
for v in model.params.values.values():
    v *= 20
x = np.random.default_rng(3).normal(size=(5, 3))

cfg = BeamConfig(beam_width=8, max_steps=6, n_best=5)
hyps = beam_search(model, x, vocab, cfg)
print(format_nbest(collapse_nbest(hyps, vocab), vocab))
print(format_nbest(collapse_nbest(hyps, vocab, merge=True), vocab))

print(edit_distance_metrics("the cat sat", "the hat sat", unit="word"))
print(edit_distance_metrics("the cat sat", "the hat sat", unit="char"))

# Fraction of output characters produced by tokens of each length.
print(coverage_distribution([h.token_ids for h in hyps], vocab))
