"""Attention encoder-decoder scoring token sequences ``p(z | x)``.

Encoder: stacked bidirectional LSTM; between the first ``subsample_layers``
pairs of layers adjacent time steps are concatenated, halving the time axis
each time.  Decoder: one LSTM layer fed with the previous token embedding and
the previous attention context, content-based MLP attention, and a one hidden
layer MLP with a softmax over the whole token vocabulary.

Everything is batched over a leading axis.  Passing a recording
:class:`~lsd.autodiff.Tape` makes the forward differentiable; otherwise a
throwaway non-recording tape is used.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InvalidInputError, ShapeMismatchError
from .tokens import EOS_ID

INIT_SCALE = 0.075


@dataclass
class ModelConfig:
    input_dim: int
    vocab_size: int
    enc_hidden: int = 32
    enc_layers: int = 3
    subsample_layers: int = 2
    dec_hidden: int = 64
    att_hidden: int = 32
    embed_dim: int = 16
    out_hidden: int = 64
    dtype: str = "float32"

    def __post_init__(self):
        if self.subsample_layers > self.enc_layers - 1:
            raise ConfigError("subsample_layers must be < enc_layers")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and f.name != "subsample_layers" and v < 1:
                raise ConfigError(f"{f.name} must be positive")

    @property
    def subsample_factor(self) -> int:
        return 2 ** self.subsample_layers

    @property
    def start_id(self) -> int:
        """Embedding row used to condition the first decoder step."""
        return self.vocab_size

    def to_dict(self):
        return asdict(self)


def is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


def param_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple]":
    shapes = OrderedDict()
    He = cfg.enc_hidden
    d = cfg.input_dim
    for layer in range(cfg.enc_layers):
        for direction in ("fw", "bw"):
            shapes[f"enc.l{layer}.{direction}.W"] = (d + He, 4 * He)
            shapes[f"enc.l{layer}.{direction}.b"] = (4 * He,)
        d = 2 * He * (2 if layer < cfg.subsample_layers else 1)
    D = 2 * He
    S = cfg.dec_hidden
    shapes["dec.embed"] = (cfg.vocab_size + 1, cfg.embed_dim)
    shapes["dec.lstm.W"] = (cfg.embed_dim + D + S, 4 * S)
    shapes["dec.lstm.b"] = (4 * S,)
    shapes["att.phi.W"] = (S + D, cfg.att_hidden)
    shapes["att.phi.b"] = (cfg.att_hidden,)
    shapes["att.v"] = (cfg.att_hidden,)
    shapes["out.W1"] = (S + D, cfg.out_hidden)
    shapes["out.b1"] = (cfg.out_hidden,)
    shapes["out.W2"] = (cfg.out_hidden, cfg.vocab_size)
    shapes["out.b2"] = (cfg.vocab_size,)
    return shapes


class ModelParams:
    """Named parameter arrays with a paired gradient buffer each."""

    def __init__(self, values: "OrderedDict[str, np.ndarray]"):
        self.values = OrderedDict(values)
        self.grads = OrderedDict((k, np.zeros_like(v)) for k, v in self.values.items())

    @classmethod
    def initialize(cls, cfg: ModelConfig, seed=0, scale=INIT_SCALE) -> "ModelParams":
        rng = np.random.default_rng(seed)
        vals = OrderedDict()
        for name, shape in param_shapes(cfg).items():
            if is_bias(name):
                vals[name] = np.zeros(shape, dtype=cfg.dtype)
            else:
                vals[name] = rng.uniform(-scale, scale, size=shape).astype(cfg.dtype)
        return cls(vals)

    @classmethod
    def zeros(cls, cfg: ModelConfig) -> "ModelParams":
        return cls(OrderedDict((n, np.zeros(s, dtype=cfg.dtype))
                               for n, s in param_shapes(cfg).items()))

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, name):
        return self.values[name]

    @property
    def dtype(self):
        return next(iter(self.values.values())).dtype

    def size(self) -> int:
        return sum(v.size for v in self.values.values())

    def copy(self) -> "ModelParams":
        out = ModelParams(OrderedDict((k, v.copy()) for k, v in self.values.items()))
        for k, g in self.grads.items():
            out.grads[k] = g.copy()
        return out

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.values.values()])

    def set_flat(self, vec):
        off = 0
        for v in self.values.values():
            v[...] = vec[off:off + v.size].reshape(v.shape)
            off += v.size

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads.values()])

    def check_compatible(self, other: "ModelParams"):
        """Raise ShapeMismatchError naming the first tensor that differs."""
        if list(self.values) != list(other.values):
            missing = [k for k in self.values if k not in other.values]
            extra = [k for k in other.values if k not in self.values]
            name = (missing or extra or [None])[0]
            raise ShapeMismatchError(f"tensor set differs (missing {missing}, unexpected {extra})", name)
        for k, v in self.values.items():
            o = other.values[k]
            if v.shape != o.shape:
                raise ShapeMismatchError(f"tensor {k!r}: expected shape {v.shape}, got {o.shape}", k)
            if v.dtype != o.dtype:
                raise ShapeMismatchError(f"tensor {k!r}: expected {v.dtype}, got {o.dtype}", k)


@dataclass
class EncoderStates:
    h: ad.Var          # (B, T', 2*enc_hidden)
    mask: np.ndarray   # (B, T') bool
    lengths: np.ndarray


@dataclass
class DecoderStepState:
    s: ad.Var          # decoder LSTM output
    cell: ad.Var       # decoder LSTM cell
    c: ad.Var          # attention context
    alpha: ad.Var = None
    e: np.ndarray = None


class _Bound:
    """Parameters bound to one tape plus the per-pass derived views."""

    def __init__(self, model, tape, noise_std=0.0, rng=None):
        self.tape = tape
        self.cfg = model.config
        self.P = {}
        for name, val in model.params.values.items():
            if noise_std > 0 and not is_bias(name):
                val = val + rng.normal(0.0, noise_std, size=val.shape).astype(val.dtype)
            self.P[name] = tape.param(name, val)
        S = self.cfg.dec_hidden
        D = 2 * self.cfg.enc_hidden
        phi = self.P["att.phi.W"]
        self.phi_s = ad.rows(phi, 0, S)
        self.phi_h = ad.rows(phi, S, S + D)


class Seq2Seq:
    def __init__(self, config: ModelConfig, params: ModelParams | None = None, seed=0):
        self.config = config
        self.params = params if params is not None else ModelParams.initialize(config, seed)
        ModelParams.zeros(config).check_compatible(self.params)

    @property
    def vocab_size(self):
        return self.config.vocab_size

    def bind(self, tape=None, noise_std=0.0, rng=None) -> _Bound:
        if tape is None:
            tape = ad.Tape(record=False)
        return _Bound(self, tape, noise_std, rng)

    # ------------------------------------------------------------- encoder

    def _pad_inputs(self, xs):
        dt = self.config.dtype
        lengths = np.array([len(x) for x in xs])
        f = self.config.subsample_factor
        for x in xs:
            x = np.asarray(x)
            if x.ndim != 2 or x.shape[1] != self.config.input_dim:
                raise InvalidInputError(
                    f"input must have shape [T, {self.config.input_dim}], got {x.shape}")
            if len(x) < f:
                raise InvalidInputError(f"input length {len(x)} shorter than subsampling factor {f}")
        T = int(lengths.max())
        X = np.zeros((len(xs), T, self.config.input_dim), dtype=dt)
        mask = np.zeros((len(xs), T), dtype=bool)
        for i, x in enumerate(xs):
            X[i, :len(x)] = x
            mask[i, :len(x)] = True
        return X, mask, lengths

    def _blstm(self, b: _Bound, X: ad.Var, mask, layer):
        tape = b.tape
        B, T, D = X.value.shape
        H = self.config.enc_hidden
        dirs = []
        for direction in ("fw", "bw"):
            W = b.P[f"enc.l{layer}.{direction}.W"]
            px = ad.affine(X, ad.rows(W, 0, D), b.P[f"enc.l{layer}.{direction}.b"])
            Wh = ad.rows(W, D, D + H)
            steps = ad.unstack(px, axis=1)
            h = tape.const(np.zeros((B, H), dtype=X.value.dtype))
            c = h
            hs = [None] * T
            order = range(T) if direction == "fw" else range(T - 1, -1, -1)
            for t in order:
                h, c = ad.lstm_cell(ad.add(steps[t], ad.matmul(h, Wh)), h, c, mask[:, t])
                hs[t] = h
            dirs.append(ad.stack(hs, axis=1))
        return ad.mask_rows(ad.concat(dirs, axis=-1), mask)

    def encode(self, xs, bound: _Bound | None = None) -> EncoderStates:
        """Encode a list of ``[T_b, input_dim]`` arrays (or one array)."""
        if isinstance(xs, np.ndarray) and xs.ndim == 2:
            xs = [xs]
        b = bound or self.bind()
        X, mask, lengths = self._pad_inputs(xs)
        h = b.tape.const(X)
        for layer in range(self.config.enc_layers):
            h = self._blstm(b, h, mask, layer)
            if layer < self.config.subsample_layers:
                B, T, D = h.value.shape
                if T % 2:
                    h = ad.pad(h, ((0, 0), (0, 1), (0, 0)))
                    mask = np.concatenate([mask, np.zeros((B, 1), dtype=bool)], axis=1)
                    T += 1
                h = ad.reshape(h, (B, T // 2, 2 * D))
                mask = mask[:, ::2]
        f = self.config.subsample_factor
        return EncoderStates(h, mask, -(-lengths // f))

    # ------------------------------------------------------------- decoder

    def prepare(self, enc: EncoderStates, b: _Bound):
        """Project encoder states once for all attention steps."""
        return ad.affine(enc.h, b.phi_h, b.P["att.phi.b"])

    def initial_state(self, batch, b: _Bound) -> DecoderStepState:
        dt = self.config.dtype
        S, D = self.config.dec_hidden, 2 * self.config.enc_hidden
        z = b.tape.const(np.zeros((batch, S), dtype=dt))
        return DecoderStepState(z, z, b.tape.const(np.zeros((batch, D), dtype=dt)))

    def attend(self, s: ad.Var, enc: EncoderStates, h_proj: ad.Var, b: _Bound):
        return ad.attention(ad.matmul(s, b.phi_s), h_proj, b.P["att.v"], enc.h, enc.mask)

    def decode_step(self, z_prev, state: DecoderStepState, enc: EncoderStates,
                    h_proj: ad.Var, b: _Bound):
        """One decoder step; returns the new state and token log-probabilities."""
        z_prev = np.asarray(z_prev)
        if z_prev.min() < 0 or z_prev.max() > self.config.start_id:
            raise InvalidInputError(f"token id out of range: {z_prev}")
        P = b.P
        emb = ad.take(P["dec.embed"], z_prev)
        pre = ad.affine(ad.concat([emb, state.c, state.s]), P["dec.lstm.W"], P["dec.lstm.b"])
        s, cell = ad.lstm_cell(pre, state.s, state.cell)
        c, alpha, e = self.attend(s, enc, h_proj, b)
        o = ad.tanh(ad.affine(ad.concat([s, c]), P["out.W1"], P["out.b1"]))
        logp = ad.log_softmax(ad.affine(o, P["out.W2"], P["out.b2"]))
        return DecoderStepState(s, cell, c, alpha, e), logp

    # ------------------------------------------------------------- scoring

    def step_logprobs(self, xs, zs, bound: _Bound | None = None):
        """Teacher-forced per-step log-probabilities.

        Returns ``(lp, mask)`` where ``lp`` is a (B, L) Var of
        ``log p(z_i | x, z_<i)`` and ``mask`` marks real steps.
        """
        b = bound or self.bind()
        zs = [list(z) for z in zs]
        if len(xs) != len(zs):
            raise InvalidInputError("inputs and decompositions differ in count")
        V = self.vocab_size
        for z in zs:
            if not z or z[-1] != EOS_ID:
                raise InvalidInputError("decomposition must end with the EOS token")
            if min(z) < 0 or max(z) >= V:
                raise InvalidInputError(f"token id out of range in {z}")
        B = len(zs)
        L = max(len(z) for z in zs)
        Z = np.full((B, L), EOS_ID, dtype=np.int64)
        mask = np.zeros((B, L), dtype=self.config.dtype)
        for i, z in enumerate(zs):
            Z[i, :len(z)] = z
            mask[i, :len(z)] = 1
        enc = self.encode(xs, b)
        h_proj = self.prepare(enc, b)
        state = self.initial_state(B, b)
        prev = np.full(B, self.config.start_id)
        picks = []
        for i in range(L):
            state, logp = self.decode_step(prev, state, enc, h_proj, b)
            picks.append(ad.pick(logp, Z[:, i]))
            prev = Z[:, i]
        return ad.stack(picks, axis=1), mask

    def step_distributions(self, x, z) -> np.ndarray:
        """(len(z), V) next-token log-distributions along the prefix of ``z``."""
        b = self.bind()
        enc = self.encode([x], b)
        h_proj = self.prepare(enc, b)
        state = self.initial_state(1, b)
        prev = np.array([self.config.start_id])
        rows = []
        for t in z:
            state, logp = self.decode_step(prev, state, enc, h_proj, b)
            rows.append(logp.value[0])
            prev = np.array([t])
        return np.array(rows)

    def log_prob_sequences(self, xs, zs, bound: _Bound | None = None) -> np.ndarray:
        lp, mask = self.step_logprobs(xs, zs, bound)
        return (lp.value * mask).sum(axis=1).astype(np.float64)

    def log_prob_sequence(self, x, z, tape: ad.Tape | None = None):
        """``log p(z | x)``.  With a recording tape returns a scalar Var."""
        if tape is None:
            return float(self.log_prob_sequences([x], [z])[0])
        lp, mask = self.step_logprobs([x], [z], self.bind(tape))
        return ad.weighted_sum(lp, mask)

    def backward(self, loss: ad.Var, accumulate=False):
        """Run the tape behind ``loss`` and store parameter gradients."""
        tape = loss.tape
        tape.backward(loss)
        grads = tape.gradients()
        for name, g in grads.items():
            if accumulate:
                self.params.grads[name] += g
            else:
                self.params.grads[name][...] = g
        return self.params.grads
