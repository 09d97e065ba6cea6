"""Exact oracles over the set of decompositions of a target string.

These enumerate every decomposition, so they only work for short targets.
Past ``limit`` paths they raise :class:`~lsd.errors.CapacityError` rather than
truncate.  A decomposition here is a list of token ids *without* EOS unless
stated otherwise; scoring functions append EOS themselves.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .errors import CapacityError, InvalidInputError
from .tokens import EOS_ID, Vocabulary, collapse, extension_table

DEFAULT_LIMIT = 100_000
_CHUNK = 512


@dataclass
class DecompositionSet:
    target: str
    items: list
    log_weights: np.ndarray | None = field(default=None)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights)


def count_decompositions(y: str, vocab: Vocabulary) -> int:
    """Exact number of decompositions (Python ints, no overflow)."""
    table = extension_table(y, vocab)
    n = len(y)
    counts = [0] * (n + 1)
    counts[n] = 1
    for pos in range(n - 1, -1, -1):
        counts[pos] = sum(counts[pos + t.length] for t in table[pos])
    return counts[0]


def enumerate_decompositions(y: str, vocab: Vocabulary, limit=DEFAULT_LIMIT) -> DecompositionSet:
    """Every decomposition of ``y`` in lexicographic token-id order."""
    total = count_decompositions(y, vocab)
    if total > limit:
        raise CapacityError(f"{total} decompositions of {y!r} exceed the limit of {limit}", total)
    table = extension_table(y, vocab)
    n = len(y)
    items = []
    prefix = []

    def walk(pos):
        if pos == n:
            items.append(list(prefix))
            return
        for tok in table[pos]:
            prefix.append(tok.id)
            walk(pos + tok.length)
            prefix.pop()

    walk(0)
    return DecompositionSet(y, items)


def with_eos(z):
    z = list(z)
    return z if z and z[-1] == EOS_ID else z + [EOS_ID]


def path_log_probs(model, x, paths) -> np.ndarray:
    """``log p(z | x)`` for each path (EOS appended), in chunks."""
    out = []
    paths = [with_eos(z) for z in paths]
    for i in range(0, len(paths), _CHUNK):
        chunk = paths[i:i + _CHUNK]
        out.append(model.log_prob_sequences([x] * len(chunk), chunk))
    return np.concatenate(out) if out else np.zeros(0)


def exact_log_marginal(model, x, y: str, vocab: Vocabulary, limit=DEFAULT_LIMIT) -> float:
    """``log sum_z p(z | x)`` over all z that collapse to ``y``."""
    dset = enumerate_decompositions(y, vocab, limit)
    return float(logsumexp(path_log_probs(model, x, dset.items)))


def exact_posterior(model, x, y: str, vocab: Vocabulary, limit=DEFAULT_LIMIT) -> DecompositionSet:
    dset = enumerate_decompositions(y, vocab, limit)
    lp = path_log_probs(model, x, dset.items)
    dset.log_weights = lp - logsumexp(lp)
    return dset


def exact_gradient(model, x, y: str, vocab: Vocabulary, limit=DEFAULT_LIMIT,
                   posterior: DecompositionSet | None = None) -> "OrderedDict[str, np.ndarray]":
    """Gradient of ``log p(y | x)``: posterior-weighted average of path gradients.

    Paths are processed in enumeration order in fixed-size chunks, so the
    summation order never depends on anything but the inputs.
    """
    if posterior is None:
        posterior = exact_posterior(model, x, y, vocab, limit)
    weights = np.exp(posterior.log_weights)
    total = OrderedDict((k, np.zeros(v.shape, dtype=np.float64)) for k, v in model.params.values.items())
    paths = [with_eos(z) for z in posterior.items]
    for i in range(0, len(paths), _CHUNK):
        chunk = paths[i:i + _CHUNK]
        w = weights[i:i + _CHUNK]
        tape = ad.Tape()
        lp, mask = model.step_logprobs([x] * len(chunk), chunk, model.bind(tape))
        loss = ad.weighted_sum(lp, mask * w[:, None].astype(mask.dtype))
        tape.backward(loss)
        for k, g in tape.gradients().items():
            total[k] += g
    return total


def sample_posterior(model, x, y: str, vocab: Vocabulary, rng, limit=DEFAULT_LIMIT,
                     posterior: DecompositionSet | None = None) -> list:
    """Draw one decomposition (EOS appended) from the exact posterior.

    One uniform variate is compared against the cumulative weights in
    enumeration order.  Pass a precomputed ``posterior`` to draw repeatedly.
    """
    if posterior is None:
        posterior = exact_posterior(model, x, y, vocab, limit)
    cdf = np.cumsum(np.exp(posterior.log_weights))
    u = rng.random() * cdf[-1]
    k = min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)
    return with_eos(posterior.items[k])


# ------------------------------------------------------------------ history-free scorers

def dp_log_marginal(y: str, vocab: Vocabulary, score) -> float:
    """Forward DP marginal for a scorer ``score(pos, token_id) -> log p``.

    Only valid when the score depends on the consumed position alone, not on
    the token history; EOS is scored at ``pos == len(y)``.
    """
    table = extension_table(y, vocab)
    n = len(y)
    alpha = np.full(n + 1, -np.inf)
    alpha[0] = 0.0
    for pos in range(n):
        if alpha[pos] == -np.inf:
            continue
        for tok in table[pos]:
            alpha[pos + tok.length] = np.logaddexp(alpha[pos + tok.length], alpha[pos] + score(pos, tok.id))
    return float(alpha[n] + score(n, EOS_ID))


def enumerated_log_marginal(y: str, vocab: Vocabulary, score, limit=DEFAULT_LIMIT) -> float:
    dset = enumerate_decompositions(y, vocab, limit)
    terms = []
    for z in dset.items:
        pos = 0
        s = 0.0
        for t in z:
            s += score(pos, t)
            pos += vocab[t].length
        terms.append(s + score(pos, EOS_ID))
    return float(logsumexp(terms))


def check_items(dset: DecompositionSet, vocab: Vocabulary):
    for z in dset.items:
        if collapse(z, vocab) != dset.target:
            raise InvalidInputError(f"{z} does not collapse to {dset.target!r}")
