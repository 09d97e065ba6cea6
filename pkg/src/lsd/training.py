"""Training with latent decompositions.

Each step samples a decomposition of every target left to right: at each
position the model's next-token distribution is restricted to the valid
extensions, renormalized, and mixed with a uniform distribution over the same
extensions (epsilon-greedy).  The sampled path's ``-log p(z | x)`` is
backpropagated; its gradient is a (biased) estimate of the marginal
likelihood gradient.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import save_checkpoint
from .errors import ConfigError, InvalidInputError, NonFiniteError
from .model import Seq2Seq, is_bias
from .tokens import EOS_ID, Vocabulary, collapse, extension_table, max_ext

log = logging.getLogger(__name__)

MODES = ("lsd", "maxext", "char")
STATS_HEADER = ("step", "epsilon", "lr", "loss", "len_ratio", "grad_norm", "wall_ms")


@dataclass
class EpsilonSchedule:
    eps_start: float = 1.0
    eps_end: float = 0.1
    decay_steps: int = 1000
    shape: str = "linear"

    def __post_init__(self):
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ConfigError("need 0 <= eps_end <= eps_start <= 1")
        if self.shape not in ("linear", "exponential"):
            raise ConfigError(f"unknown epsilon schedule shape {self.shape!r}")
        if self.decay_steps < 0:
            raise ConfigError("decay_steps must be >= 0")

    @classmethod
    def default(cls, total_steps) -> "EpsilonSchedule":
        """Linear 1.0 -> 0.1 over the first quarter of training."""
        return cls(1.0, 0.1, max(1, total_steps // 4), "linear")

    @classmethod
    def constant(cls, eps) -> "EpsilonSchedule":
        return cls(eps, eps, 0, "linear")

    def __call__(self, step) -> float:
        if step >= self.decay_steps:
            return self.eps_end
        frac = step / self.decay_steps
        if self.shape == "linear":
            r = 1.0 - frac
        else:
            k = 5.0
            r = (math.exp(-k * frac) - math.exp(-k)) / (1.0 - math.exp(-k))
        return self.eps_end + (self.eps_start - self.eps_end) * r


@dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    lr_decay_steps: int | None = None
    lr_shape: str = "exponential"
    grad_clip_norm: float = 1.0
    weight_noise_std: float = 0.075
    l2_decay: float = 1e-5

    def __post_init__(self):
        if self.lr_shape not in ("linear", "exponential"):
            raise ConfigError(f"unknown learning-rate shape {self.lr_shape!r}")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ConfigError("learning rates must be positive")
        if self.grad_clip_norm <= 0:
            raise ConfigError("grad_clip_norm must be positive")
        if self.weight_noise_std < 0 or self.l2_decay < 0:
            raise ConfigError("weight_noise_std and l2_decay must be >= 0")

    def lr(self, step, total_steps=None) -> float:
        n = self.lr_decay_steps or total_steps
        if not n:
            return self.lr_start
        frac = min(step / n, 1.0)
        if self.lr_shape == "linear":
            return self.lr_start + (self.lr_end - self.lr_start) * frac
        return self.lr_start * (self.lr_end / self.lr_start) ** frac


class Adam:
    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {}
        self.v = {}

    def update(self, values, grads, lr):
        c = self.cfg
        self.t += 1
        b1t = 1.0 - c.beta1 ** self.t
        b2t = 1.0 - c.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            step = lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + c.adam_eps)
            values[k] -= step.astype(values[k].dtype)


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))


def clip_by_global_norm(grads, max_norm):
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if norm > max_norm:
        s = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * s
    return norm


@dataclass
class TrainStats:
    step: int
    epsilon: float | None
    lr: float
    loss: float
    len_ratio: float
    grad_norm: float
    wall_ms: float = 0.0
    clipped_norm: float = field(default=0.0, repr=False)

    def row(self):
        eps = "n/a" if self.epsilon is None else f"{self.epsilon:.6g}"
        return [str(self.step), eps, f"{self.lr:.8g}", f"{self.loss:.8g}",
                f"{self.len_ratio:.6g}", f"{self.grad_norm:.8g}", f"{self.wall_ms:.0f}"]


def stats_to_csv(stats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_HEADER)
    for s in stats:
        w.writerow(s.row())
    return buf.getvalue()


# ------------------------------------------------------------------ sampling

def _draw(options, logp_row, epsilon, rng):
    """Index into ``options`` drawn from the epsilon-mixed restricted distribution."""
    if len(options) == 1:
        rng.random()
        return 0
    if rng.random() < epsilon:
        return int(rng.integers(len(options)))
    lp = logp_row[[t.id for t in options]].astype(np.float64)
    p = np.exp(lp - lp.max())
    p /= p.sum()
    return int(rng.choice(len(options), p=p))


def _sample_batch(model, b, xs, tables, epsilon, rngs):
    """Sample one decomposition per example on bound parameters ``b``.

    Returns ``(paths, lp, mask)`` with ``lp`` the (B, L) Var of chosen-token
    log-probabilities.
    """
    B = len(xs)
    enc = model.encode(xs, b)
    h_proj = model.prepare(enc, b)
    state = model.initial_state(B, b)
    prev = np.full(B, model.config.start_id)
    pos = [0] * B
    done = [False] * B
    paths = [[] for _ in range(B)]
    picks, masks = [], []
    while not all(done):
        state, logp = model.decode_step(prev, state, enc, h_proj, b)
        chosen = np.full(B, EOS_ID)
        m = np.zeros(B, dtype=model.config.dtype)
        for i in range(B):
            if done[i]:
                continue
            options = tables[i][pos[i]]
            tok = options[_draw(options, logp.value[i], epsilon, rngs[i])]
            chosen[i] = tok.id
            m[i] = 1
            paths[i].append(tok.id)
            if tok.id == EOS_ID:
                done[i] = True
            else:
                pos[i] += tok.length
        picks.append(ad.pick(logp, chosen))
        masks.append(m)
        prev = chosen
    return paths, ad.stack(picks, axis=1), np.stack(masks, axis=1)


def sample_decomposition(model: Seq2Seq, x, y: str, vocab: Vocabulary, epsilon: float, rng) -> list:
    """Left-to-right epsilon-greedy sample of a decomposition of ``y`` (EOS appended)."""
    return sample_decompositions(model, [x], [y], vocab, epsilon, [rng])[0]


def sample_decompositions(model: Seq2Seq, xs, ys, vocab: Vocabulary, epsilon: float, rngs) -> list:
    """Batched :func:`sample_decomposition`, one generator per example."""
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidInputError(f"epsilon must lie in [0, 1], got {epsilon}")
    tables = [extension_table(y, vocab) for y in ys]
    paths, _, _ = _sample_batch(model, model.bind(), list(xs), tables, epsilon, list(rngs))
    return paths


def sampler_path_probabilities(model: Seq2Seq, x, y: str, vocab: Vocabulary, epsilon: float,
                               paths) -> np.ndarray:
    """Exact probability that the sampler emits each of ``paths`` (EOS appended)."""
    table = extension_table(y, vocab)
    out = []
    for z in paths:
        rows = model.step_distributions(x, z)
        pos = 0
        p = 1.0
        for t, row in zip(z, rows):
            options = table[pos]
            if len(options) > 1:
                lp = row[[o.id for o in options]].astype(np.float64)
                q = np.exp(lp - lp.max())
                q /= q.sum()
                k = [o.id for o in options].index(t)
                p *= epsilon / len(options) + (1.0 - epsilon) * q[k]
            if t != EOS_ID:
                pos += vocab[t].length
        out.append(p)
    return np.array(out)


def sampler_bias(model: Seq2Seq, x, y: str, vocab: Vocabulary, epsilon: float, limit=10_000) -> float:
    """Total-variation distance between the sampler's path law and the exact posterior."""
    from .lattice import exact_posterior, with_eos

    post = exact_posterior(model, x, y, vocab, limit)
    paths = [with_eos(z) for z in post.items]
    ps = sampler_path_probabilities(model, x, y, vocab, epsilon, paths)
    return 0.5 * float(np.abs(ps - np.exp(post.log_weights)).sum())


# ------------------------------------------------------------------ gradients

def estimate_gradient(model: Seq2Seq, x, y: str, z, vocab: Vocabulary | None = None):
    """Backpropagate ``-log p(z | x)`` for one sampled path.

    The gradient lands in ``model.params.grads`` and is also returned.  Its
    negation is a single-sample estimate of the gradient of ``log p(y | x)``.
    """
    if vocab is not None and collapse(z, vocab) != y:
        raise InvalidInputError(f"decomposition {z} does not collapse to {y!r}")
    tape = ad.Tape()
    lp = model.log_prob_sequence(x, z, tape)
    return model.backward(ad.scale(lp, -1.0))


def fixed_decomposition(y: str, vocab: Vocabulary) -> list:
    return max_ext(y, vocab) + [EOS_ID]


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


class Trainer:
    """Owns the optimizer state and performs synchronized batch updates.

    Per-example randomness comes from a stream keyed on (seed, step, index)
    so results do not depend on evaluation order.
    """

    def __init__(self, model: Seq2Seq, vocab: Vocabulary, mode="lsd",
                 optimizer: OptimizerConfig | None = None,
                 schedule: EpsilonSchedule | None = None,
                 seed=0, total_steps=None, record_wall_time=False):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if mode == "char" and not vocab.is_singleton_only():
            raise ConfigError("char mode needs a singleton-only vocabulary")
        if model.vocab_size != len(vocab):
            raise ConfigError(f"model has {model.vocab_size} outputs, vocabulary {len(vocab)} tokens")
        self.model = model
        self.vocab = vocab
        self.mode = mode
        self.opt = optimizer or OptimizerConfig()
        self.total_steps = total_steps
        self.schedule = schedule or EpsilonSchedule.default(total_steps or 1000)
        self.seed = seed
        self.step = 0
        self.adam = Adam(self.opt)
        self.record_wall_time = record_wall_time
        self._tables = {}

    def _table(self, y):
        t = self._tables.get(y)
        if t is None:
            t = self._tables[y] = extension_table(y, self.vocab)
        return t

    def epsilon(self):
        return self.schedule(self.step) if self.mode == "lsd" else None

    def lr(self):
        return self.opt.lr(self.step, self.total_steps)

    def train_step(self, batch) -> TrainStats:
        """One synchronized update on ``batch``, a list of ``(x, y)`` pairs."""
        if not batch:
            raise InvalidInputError("empty batch")
        t0 = time.perf_counter()
        model = self.model
        xs = [x for x, _ in batch]
        ys = [y for _, y in batch]
        tape = ad.Tape()
        b = model.bind(tape, self.opt.weight_noise_std, _rng(self.seed, 1, self.step))
        eps = self.epsilon()
        if self.mode == "lsd":
            rngs = [_rng(self.seed, 0, self.step, i) for i in range(len(batch))]
            paths, lp, mask = _sample_batch(model, b, xs, [self._table(y) for y in ys], eps, rngs)
        else:
            paths = [fixed_decomposition(y, self.vocab) for y in ys]
            lp, mask = model.step_logprobs(xs, paths, b)
        per_example = (lp.value * mask).sum(axis=1)
        bad = np.flatnonzero(~np.isfinite(per_example))
        if bad.size:
            i = int(bad[0])
            raise NonFiniteError(f"step {self.step}: non-finite loss for example {i} (target {ys[i]!r})")
        loss = ad.weighted_sum(lp, mask * (-1.0 / len(batch)))
        tape.backward(loss)
        grads = OrderedDict()
        for k, g in tape.gradients().items():
            g = g.astype(np.float64)
            if self.opt.l2_decay:
                g = g + self.opt.l2_decay * model.params.values[k]
            grads[k] = g
        norm = global_norm(grads)
        if not math.isfinite(norm):
            raise NonFiniteError(f"step {self.step}: non-finite gradient (batch targets {ys!r})")
        clip_by_global_norm(grads, self.opt.grad_clip_norm)
        for k, g in grads.items():
            model.params.grads[k][...] = g
        lr = self.lr()
        self.adam.update(model.params.values, grads, lr)
        ratio = np.mean([(len(z) - 1) / len(y) for z, y in zip(paths, ys) if y] or [0.0])
        stats = TrainStats(self.step, eps, lr, float(-per_example.mean()), float(ratio), norm,
                           (time.perf_counter() - t0) * 1000.0 if self.record_wall_time else 0.0,
                           global_norm(grads))
        self.step += 1
        return stats

    def batches(self, data, batch_size):
        """Endless shuffled minibatches; the order depends only on the seed."""
        epoch = 0
        while True:
            order = _rng(self.seed, 2, epoch).permutation(len(data))
            if len(order) <= batch_size:
                yield [data[j] for j in order]
            else:
                for i in range(0, len(order) - batch_size + 1, batch_size):
                    yield [data[j] for j in order[i:i + batch_size]]
            epoch += 1


@dataclass
class RunResult:
    stats: list
    best_step: int
    best_dev_cer: float
    evals: list
    stopped_early: bool


def train_run(trainer: Trainer, train, dev, steps, batch_size=16, eval_every=100, patience=10,
              out_dir=None, eval_fn=None, progress=None) -> RunResult:
    """Train for ``steps`` updates with early stopping on dev error.

    ``eval_fn(model, dev) -> float`` defaults to greedy-decode CER.  The best
    parameters are restored into the model at the end; with ``out_dir`` the
    best checkpoint and the stats CSV are written there.
    """
    if not train:
        raise InvalidInputError("training set is empty")
    if not dev:
        raise InvalidInputError("validation set is empty")
    if eval_fn is None:
        from .decoding import corpus_error_rate

        def eval_fn(model, data):
            return corpus_error_rate(model, trainer.vocab, data, unit="char")["rate"]

    model = trainer.model
    stats, evals = [], []
    best = (math.inf, -1, model.params.copy())
    bad_evals = 0
    stopped = False
    batches = trainer.batches(train, batch_size)
    while trainer.step < steps:
        s = trainer.train_step(next(batches))
        stats.append(s)
        if progress is not None:
            progress(s)
        if trainer.step % eval_every == 0 or trainer.step == steps:
            err = eval_fn(model, dev)
            evals.append((trainer.step, err))
            log.info("step %d dev error %.4f", trainer.step, err)
            if err < best[0]:
                best = (err, trainer.step, model.params.copy())
                bad_evals = 0
            else:
                bad_evals += 1
                if bad_evals >= patience:
                    stopped = True
                    break
    model.params = best[2]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        try:
            save_checkpoint(model.params, out / "model.ckpt")
            (out / "stats.csv").write_text(stats_to_csv(stats))
        except OSError as exc:
            raise OSError(f"writing training outputs to {out}: {exc}") from exc
    return RunResult(stats, best[1], best[0], evals, stopped)


def noise_applies_to(name) -> bool:
    return not is_bias(name)
