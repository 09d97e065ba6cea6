import itertools

import numpy as np
import pytest

from lsd.model import ModelConfig, Seq2Seq
from lsd.tokens import Vocabulary


def brute_force_segmentations(y, texts):
    """Every split of ``y`` into pieces that all lie in ``texts`` (2^(n-1) cuts)."""
    allowed = set(texts)
    out = []
    n = len(y)
    for cuts in itertools.product((False, True), repeat=max(n - 1, 0)):
        pieces, start = [], 0
        for i, cut in enumerate(cuts, 1):
            if cut:
                pieces.append(y[start:i])
                start = i
        pieces.append(y[start:])
        if all(p in allowed for p in pieces):
            out.append(pieces)
    return out


def random_vocab(rng, alphabet="abc", n_max=3, n_extra=6):
    """Singletons over ``alphabet`` plus random multi-character strings."""
    extra = set()
    while len(extra) < n_extra:
        n = int(rng.integers(2, n_max + 1))
        extra.add("".join(rng.choice(list(alphabet), size=n)))
    return Vocabulary.from_texts(list(alphabet) + sorted(extra))


def random_target(rng, alphabet="abc", length=6):
    return "".join(rng.choice(list(alphabet), size=length))


@pytest.fixture
def cat_vocab():
    return Vocabulary.from_texts(["a", "b", "c", "t", "at", "ca", "cat"])


def tiny_model(vocab_size, seed=0, input_dim=3, dtype="float64", scale=None, **dims):
    kw = dict(enc_hidden=3, enc_layers=2, subsample_layers=1, dec_hidden=4, att_hidden=3,
              embed_dim=3, out_hidden=4)
    kw.update(dims)
    cfg = ModelConfig(input_dim=input_dim, vocab_size=vocab_size, dtype=dtype, **kw)
    model = Seq2Seq(cfg, seed=seed)
    if scale is not None:
        rng = np.random.default_rng(seed + 1000)
        for k, v in model.params.values.items():
            v[...] = rng.uniform(-scale, scale, size=v.shape)
    return model


def tiny_input(seed=0, length=4, input_dim=3):
    return np.random.default_rng(seed).normal(size=(length, input_dim))


def pytest_terminal_summary(terminalreporter):
    """Print one line per acceptance criterion that ran."""
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
