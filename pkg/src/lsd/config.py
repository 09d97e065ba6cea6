"""Flat ``key = value`` experiment configuration.

One key per line, ``#`` starts a comment, blank lines are ignored.  Every
key has a default, so an empty file is a valid configuration.  Unknown or
repeated keys are errors.  :data:`KEYS` documents each key.
"""

from __future__ import annotations

import difflib
import typing
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .data import DatasetSpec
from .decoding import BeamConfig
from .errors import ConfigError
from .model import ModelConfig
from .training import EpsilonSchedule, OptimizerConfig

EXPERIMENT_MODES = ("lsd", "maxext", "char-baseline")
TRAINER_MODE = {"lsd": "lsd", "maxext": "maxext", "char-baseline": "char"}


@dataclass
class ExperimentConfig:
    task: str = "toy"
    mode: str = "lsd"
    seed: int = 0
    # dataset: paths, or the synthetic generator when train_path is empty
    train_path: str = ""
    dev_path: str = ""
    test_path: str = ""
    data_language: str = "plain"
    data_n_train: int = 600
    data_n_dev: int = 60
    data_n_test: int = 100
    data_min_words: int = 1
    data_max_words: int = 3
    data_lexicon_size: int = 40
    data_input_dim: int = 8
    data_noise_std: float = 0.3
    data_min_duration: int = 1
    data_max_duration: int = 3
    data_min_frames: int = 4
    # vocabulary
    vocab_path: str = ""
    n_max: int = 4
    vocab_size: int = 0
    vocab_extra: int = 16
    # model
    enc_hidden: int = 32
    enc_layers: int = 3
    subsample_layers: int = 2
    dec_hidden: int = 64
    att_hidden: int = 32
    embed_dim: int = 16
    out_hidden: int = 64
    dtype: str = "float32"
    # optimizer
    lr_start: float = 3e-3
    lr_end: float = 1e-4
    lr_decay_steps: int = 0
    lr_shape: str = "exponential"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 1.0
    weight_noise_std: float = 0.075
    l2_decay: float = 1e-5
    # epsilon schedule
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_steps: int = -1
    eps_shape: str = "linear"
    # training loop
    steps: int = 2000
    batch_size: int = 16
    eval_every: int = 100
    patience: int = 10
    # decoding and reports
    beam_width: int = 8
    beam_max_steps: int = 100
    n_best: int = 8
    collapse_merge: bool = False
    length_penalty: float = 0.0
    nbest_samples: int = 5

    def __post_init__(self):
        if self.mode not in EXPERIMENT_MODES:
            raise ConfigError(f"mode must be one of {', '.join(EXPERIMENT_MODES)}, got {self.mode!r}")
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if self.vocab_size < 0 or self.vocab_extra < 0:
            raise ConfigError("vocab_size and vocab_extra must be >= 0")
        if self.steps < 1 or self.batch_size < 1 or self.eval_every < 1 or self.patience < 1:
            raise ConfigError("steps, batch_size, eval_every and patience must be >= 1")
        if self.nbest_samples < 0:
            raise ConfigError("nbest_samples must be >= 0")
        if bool(self.train_path) != bool(self.dev_path) or bool(self.train_path) != bool(self.test_path):
            raise ConfigError("set all of train_path, dev_path, test_path or none of them")
        # Build the sub-configs once so invalid values fail at load time.
        self.dataset_spec()
        self.optimizer()
        self.schedule()
        self.beam()

    @property
    def trainer_mode(self) -> str:
        return TRAINER_MODE[self.mode]

    @property
    def effective_n_max(self) -> int:
        return 1 if self.mode == "char-baseline" else self.n_max

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(
            seed=self.seed, language=self.data_language, n_train=self.data_n_train,
            n_dev=self.data_n_dev, n_test=self.data_n_test, min_words=self.data_min_words,
            max_words=self.data_max_words, lexicon_size=self.data_lexicon_size,
            input_dim=self.data_input_dim, noise_std=self.data_noise_std,
            min_duration=self.data_min_duration, max_duration=self.data_max_duration,
            min_frames=self.data_min_frames)

    def model_config(self, input_dim, vocab_size) -> ModelConfig:
        return ModelConfig(input_dim=input_dim, vocab_size=vocab_size, enc_hidden=self.enc_hidden,
                           enc_layers=self.enc_layers, subsample_layers=self.subsample_layers,
                           dec_hidden=self.dec_hidden, att_hidden=self.att_hidden,
                           embed_dim=self.embed_dim, out_hidden=self.out_hidden, dtype=self.dtype)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(beta1=self.beta1, beta2=self.beta2, adam_eps=self.adam_eps,
                               lr_start=self.lr_start, lr_end=self.lr_end,
                               lr_decay_steps=self.lr_decay_steps or None, lr_shape=self.lr_shape,
                               grad_clip_norm=self.grad_clip_norm,
                               weight_noise_std=self.weight_noise_std, l2_decay=self.l2_decay)

    def schedule(self) -> EpsilonSchedule:
        decay = self.eps_decay_steps if self.eps_decay_steps >= 0 else max(1, self.steps // 4)
        return EpsilonSchedule(self.eps_start, self.eps_end, decay, self.eps_shape)

    def beam(self) -> BeamConfig:
        return BeamConfig(beam_width=self.beam_width, max_steps=self.beam_max_steps,
                          n_best=self.n_best, collapse_merge=self.collapse_merge,
                          length_penalty=self.length_penalty)

    def replace(self, **changes) -> "ExperimentConfig":
        d = asdict(self)
        for k in changes:
            if k not in d:
                raise ConfigError(_unknown(k))
        d.update(changes)
        return ExperimentConfig(**d)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


KEYS = {
    "task": "free-form experiment name, copied into reports",
    "mode": "lsd (sampled decompositions), maxext (fixed longest-match) or char-baseline (singleton vocabulary)",
    "seed": "seeds data generation, initialization, sampling, noise and batch order",
    "train_path": "TSV training split; empty means generate synthetic data",
    "dev_path": "TSV validation split used for early stopping",
    "test_path": "TSV test split used for the reported metrics",
    "data_language": "synthetic toy language: plain or qu (every q followed by u)",
    "data_n_train": "synthetic training examples",
    "data_n_dev": "synthetic validation examples",
    "data_n_test": "synthetic test examples",
    "data_min_words": "fewest words per synthetic target",
    "data_max_words": "most words per synthetic target",
    "data_lexicon_size": "distinct words in the toy lexicon",
    "data_input_dim": "feature dimension of synthetic frames",
    "data_noise_std": "std of Gaussian noise added to frames",
    "data_min_duration": "fewest frames per character",
    "data_max_duration": "most frames per character",
    "data_min_frames": "short inputs are padded with silence frames to this length",
    "vocab_path": "existing vocabulary file; empty means build from training targets",
    "n_max": "longest token length when building a vocabulary",
    "vocab_size": "total tokens including EOS and singletons; 0 means alphabet + vocab_extra",
    "vocab_extra": "multi-character tokens added when vocab_size is 0",
    "enc_hidden": "encoder units per direction",
    "enc_layers": "stacked bidirectional encoder layers",
    "subsample_layers": "layers followed by pairwise frame concatenation (factor 2 each)",
    "dec_hidden": "decoder recurrent units",
    "att_hidden": "attention MLP units",
    "embed_dim": "token embedding size",
    "out_hidden": "hidden units of the output MLP",
    "dtype": "float32 or float64",
    "lr_start": "initial Adam learning rate",
    "lr_end": "final learning rate",
    "lr_decay_steps": "steps over which the rate decays; 0 means all steps",
    "lr_shape": "exponential (geometric) or linear decay",
    "beta1": "Adam first-moment decay",
    "beta2": "Adam second-moment decay",
    "adam_eps": "Adam denominator stabilizer",
    "grad_clip_norm": "global gradient norm bound",
    "weight_noise_std": "std of Gaussian noise on non-bias weights during training",
    "l2_decay": "L2 coefficient added to gradients before clipping",
    "eps_start": "initial exploration rate",
    "eps_end": "final exploration rate",
    "eps_decay_steps": "steps over which epsilon decays; -1 means a quarter of steps",
    "eps_shape": "linear or exponential decay",
    "steps": "maximum optimizer updates",
    "batch_size": "examples per update",
    "eval_every": "updates between validation decodes",
    "patience": "validation checks without improvement before stopping",
    "beam_width": "beam width for n-best dumps",
    "beam_max_steps": "longest decoded token sequence",
    "n_best": "hypotheses printed per input",
    "collapse_merge": "keep only the best decomposition of each output string",
    "length_penalty": "rank by score / length**penalty; 0 disables",
    "nbest_samples": "test inputs included in the n-best dump",
}


def _unknown(key):
    close = difflib.get_close_matches(key, [f.name for f in fields(ExperimentConfig)], n=1)
    hint = f"; did you mean {close[0]!r}?" if close else "; run 'lsd config-keys' for the list"
    return f"unknown config key {key!r}{hint}"


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(key, raw: str, typ):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot read {raw!r} as {typ.__name__}") from None


def parse_config(text: str, source="<string>", overrides: dict | None = None) -> ExperimentConfig:
    """Parse config text; ``overrides`` (raw string values) win over the file."""
    hints = typing.get_type_hints(ExperimentConfig)
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in hints:
            raise ConfigError(f"{source}:{lineno}: {_unknown(key)}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: key {key!r} given twice")
        values[key] = _coerce(key, raw, hints[key])
    for key, raw in (overrides or {}).items():
        if key not in hints:
            raise ConfigError(_unknown(key))
        values[key] = _coerce(key, str(raw), hints[key])
    return ExperimentConfig(**values)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path), overrides)
