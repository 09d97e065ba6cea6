"""
Training with sampled decompositions
====================================

Each update samples one spelling per target from the model itself (mixed
with uniform exploration), then maximizes its log-probability.  Here a
small model learns a toy frame-to-text task for a few hundred steps.

"""

from lsd import (DatasetSpec, EpsilonSchedule, ModelConfig, OptimizerConfig, Seq2Seq, Trainer,
                 generate, train_run, vocab_from_corpus)
from lsd.decoding import corpus_error_rate, decode_strings

splits = generate(DatasetSpec(seed=0, n_train=200, n_dev=20, n_test=20, lexicon_size=6,
                              max_words=2, noise_std=0.05))
targets = [y for _, y in splits["train"]]
print("example targets:", targets[:3])

vocab = vocab_from_corpus(targets, n_max=3, size=30)
model = Seq2Seq(ModelConfig(input_dim=8, vocab_size=len(vocab), enc_hidden=16, dec_hidden=32,
                            att_hidden=16, out_hidden=32), seed=0)
steps = 400
trainer = Trainer(model, vocab, "lsd", OptimizerConfig(lr_start=1e-2, lr_end=1e-3, weight_noise_std=0.0),
                  EpsilonSchedule.default(steps), seed=0, total_steps=steps)


def show(s):
    if s.step % 50 == 0:
        print(f"step {s.step:4d}  loss {s.loss:7.3f}  eps {s.epsilon:.2f}")


res = train_run(trainer, splits["train"], splits["dev"], steps, batch_size=16, eval_every=50,
                patience=10, progress=show)
print("best step:", res.best_step)
print("test CER:", round(corpus_error_rate(model, vocab, splits["test"])["rate"], 3))
for (text, z), (_, ref) in list(zip(decode_strings(model, vocab, [x for x, _ in splits["test"]]),
                                    splits["test"]))[:3]:
    print(f"  {ref!r:24} -> {text!r:24} {'|'.join(vocab[t].text for t in z if t)}")
