"""Unconstrained left-to-right decoding, n-best output and error metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyResultError
from .model import DecoderStepState, EncoderStates, Seq2Seq
from .tokens import EOS_ID, SPACE, SPACE_ID, Vocabulary, collapse


@dataclass(frozen=True)
class Hypothesis:
    token_ids: tuple
    log_prob: float
    finished: bool = False


@dataclass
class BeamConfig:
    beam_width: int = 8
    max_steps: int = 100
    n_best: int = 8
    collapse_merge: bool = False
    length_penalty: float = 0.0

    def __post_init__(self):
        if self.beam_width < 1 or self.max_steps < 1:
            raise ConfigError("beam_width and max_steps must be >= 1")
        if not 1 <= self.n_best <= self.beam_width:
            raise ConfigError("n_best must lie in [1, beam_width]")


def _select(state_vars, idx, tape):
    return [tape.const(v.value[idx]) for v in state_vars]


def _tile(enc: EncoderStates, h_proj, k, tape):
    idx = np.zeros(k, dtype=np.int64)
    return (EncoderStates(tape.const(enc.h.value[idx]), enc.mask[idx], enc.lengths[idx]),
            tape.const(h_proj.value[idx]))


def _rank_key(score, seq, penalty):
    if penalty:
        score = score / (len(seq) ** penalty)
    return (-score, seq)


def beam_search(model: Seq2Seq, x, vocab: Vocabulary | None = None,
                cfg: BeamConfig | None = None) -> list:
    """Best finished hypotheses by log-probability, highest first.

    Every live hypothesis is expanded over the whole vocabulary and the top
    ``beam_width`` expansions survive.  Expansions ending in EOS retire to the
    finished pool and stop taking beam slots.  Equal scores are ordered by the
    token-id sequence.
    """
    cfg = cfg or BeamConfig()
    b = model.bind()
    tape = b.tape
    enc0 = model.encode([x], b)
    hp0 = model.prepare(enc0, b)
    live = [Hypothesis((), 0.0)]
    st = model.initial_state(1, b)
    state_vars = [st.s, st.cell, st.c]
    finished = []
    for _ in range(cfg.max_steps):
        k = len(live)
        enc, h_proj = _tile(enc0, hp0, k, tape)
        prev = np.array([h.token_ids[-1] if h.token_ids else model.config.start_id for h in live])
        state = DecoderStepState(*state_vars)
        state, logp = model.decode_step(prev, state, enc, h_proj, b)
        lp = logp.value.astype(np.float64)
        cand = []
        for i, h in enumerate(live):
            for v in range(lp.shape[1]):
                seq = h.token_ids + (v,)
                score = h.log_prob + lp[i, v]
                cand.append((_rank_key(score, seq, cfg.length_penalty), i, v, score))
        cand.sort(key=lambda c: c[0])
        new_live, parents = [], []
        for _, i, v, score in cand[:cfg.beam_width]:
            seq = live[i].token_ids + (v,)
            if v == EOS_ID:
                finished.append(Hypothesis(seq, score, True))
            else:
                new_live.append(Hypothesis(seq, score))
                parents.append(i)
        if not new_live:
            live = []
            break
        live = new_live
        state_vars = _select([state.s, state.cell, state.c], np.array(parents), tape)
    if not finished:
        raise EmptyResultError(f"no hypothesis reached EOS within {cfg.max_steps} steps",
                               sorted(live, key=lambda h: (-h.log_prob, h.token_ids))[:cfg.n_best])
    finished.sort(key=lambda h: _rank_key(h.log_prob, h.token_ids, cfg.length_penalty))
    return finished[:cfg.n_best]


def greedy_decode(model: Seq2Seq, xs, max_steps=None) -> list:
    """Batched argmax decoding; returns token-id lists (EOS kept when reached)."""
    if isinstance(xs, np.ndarray) and xs.ndim == 2:
        xs = [xs]
    b = model.bind()
    enc = model.encode(xs, b)
    h_proj = model.prepare(enc, b)
    B = len(xs)
    if max_steps is None:
        max_steps = max(len(x) for x in xs) + 1
    state = model.initial_state(B, b)
    prev = np.full(B, model.config.start_id)
    out = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    for _ in range(max_steps):
        state, logp = model.decode_step(prev, state, enc, h_proj, b)
        best = logp.value.argmax(axis=1)
        for i in np.flatnonzero(~done):
            out[i].append(int(best[i]))
        done |= best == EOS_ID
        if done.all():
            break
        prev = best
    return out


def collapse_nbest(hyps, vocab: Vocabulary, merge=False) -> list:
    """``(output string, decomposition, log_prob)`` rows in input order.

    With ``merge`` only the best-scoring decomposition of each output string
    is kept.
    """
    rows = [(collapse(h.token_ids, vocab), tuple(h.token_ids), h.log_prob) for h in hyps]
    if not merge:
        return rows
    best = {}
    for r in rows:
        if r[0] not in best or r[2] > best[r[0]][2]:
            best[r[0]] = r
    return [r for r in rows if best[r[0]] is r]


def format_nbest(rows, vocab: Vocabulary) -> str:
    """Tab-separated ``rank, pieces joined by '|', log_prob`` lines."""
    lines = []
    for rank, (_, z, lp) in enumerate(rows, 1):
        pieces = "|".join(vocab[t].text for t in z if t != EOS_ID)
        lines.append(f"{rank}\t{pieces}\t{lp:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")


# ------------------------------------------------------------------ metrics

def levenshtein(hyp, ref) -> int:
    """Unit-cost edit distance between two sequences."""
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, 1):
        cur = [i] + [0] * len(ref)
        for j, r in enumerate(ref, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (h != r))
        prev = cur
    return prev[-1]


def _units(s, unit):
    if unit == "word":
        return [w for w in s.split(SPACE) if w]
    if unit == "char":
        return list(s)
    raise ConfigError(f"unit must be 'word' or 'char', got {unit!r}")


def edit_distance_metrics(hyp: str, ref: str, unit="word") -> dict:
    """Errors, reference length and rate; an empty reference gives rate = errors."""
    h, r = _units(hyp, unit), _units(ref, unit)
    errors = levenshtein(h, r)
    rate = errors / len(r) if r else float(errors)
    return {"errors": errors, "ref_len": len(r), "rate": rate}


def decode_strings(model, vocab, xs, batch_size=64):
    out = []
    for i in range(0, len(xs), batch_size):
        for z in greedy_decode(model, xs[i:i + batch_size]):
            out.append((collapse(z, vocab), z))
    return out


def corpus_error_rate(model, vocab, data, unit="char", batch_size=64) -> dict:
    """Pooled error rate of greedy decodes over ``(x, y)`` pairs."""
    decoded = decode_strings(model, vocab, [x for x, _ in data], batch_size)
    errors = ref_len = 0
    for (hyp, _), (_, ref) in zip(decoded, data):
        m = edit_distance_metrics(hyp, ref, unit)
        errors += m["errors"]
        ref_len += m["ref_len"]
    return {"errors": errors, "ref_len": ref_len, "rate": errors / ref_len if ref_len else float(errors)}


def coverage_distribution(decompositions, vocab: Vocabulary) -> dict:
    """Fraction of non-space characters emitted inside tokens of each length."""
    buckets = {}
    for z in decompositions:
        for t in z:
            if t in (EOS_ID, SPACE_ID):
                continue
            n = vocab[t].length
            buckets[n] = buckets.get(n, 0) + n
    total = sum(buckets.values())
    if not total:
        return {}
    return {n: buckets[n] / total for n in sorted(buckets)}
