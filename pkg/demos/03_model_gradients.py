"""
The attention model and a gradient check
========================================

The encoder is a stack of bidirectional LSTMs that halves the time axis
after some layers; the decoder is an LSTM with MLP attention.  Gradients
come from a small reverse-mode tape, and finite differences confirm them.
"""

import numpy as np

from lsd import ModelConfig, Seq2Seq
from lsd import autodiff as ad

cfg = ModelConfig(input_dim=4, vocab_size=6, enc_hidden=5, enc_layers=3, subsample_layers=2,
                  dec_hidden=6, att_hidden=5, embed_dim=3, out_hidden=6, dtype="float64")
model = Seq2Seq(cfg, seed=1)
print("parameters:", model.params.size())

x = np.random.default_rng(1).normal(size=(10, 4))
enc = model.encode([x])
print("10 frames become", enc.h.value.shape[1], "encoder states")

z = [2, 4, 3, 0]          # token ids ending with EOS
print("log p(z|x) =", model.log_prob_sequence(x, z))

tape = ad.Tape()
model.backward(model.log_prob_sequence(x, z, tape))
grad = model.params.flat_grad().copy()

flat = model.params.flat().copy()
h = 1e-4
worst = 0.0
for i in np.random.default_rng(2).choice(flat.size, 50, replace=False):
    e = np.zeros_like(flat)
    e[i] = h
    model.params.set_flat(flat + e)
    up = model.log_prob_sequence(x, z)
    model.params.set_flat(flat - e)
    down = model.log_prob_sequence(x, z)
    num = (up - down) / (2 * h)
    worst = max(worst, abs(num - grad[i]) / max(abs(num), abs(grad[i]), 1e-6))
model.params.set_flat(flat)
print(f"worst relative error over 50 coordinates: {worst:.2e}")
