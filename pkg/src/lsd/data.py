"""Synthetic frame-input tasks and the TSV dataset format.

A toy language supplies target strings.  Each target character is rendered
as a fixed random embedding repeated for a random duration of 1-3 frames, with
additive Gaussian noise, so the alignment evidence lives in the input frames.
Renders shorter than ``min_frames`` are padded with a fixed silence frame so
they survive encoder subsampling.

TSV rows are ``input<TAB>target``.  Frame inputs are written as
``<T>x<D>:<base64 of little-endian float32 data>``; any other input field is
kept as a raw string.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInputError
from .tokens import SPACE

CONSONANTS = "bdklmnrst"
VOWELS = "aeiou"
_FRAME_RE = re.compile(r"^(\d+)x(\d+):([A-Za-z0-9+/=]*)$")


@dataclass
class DatasetSpec:
    seed: int = 0
    language: str = "plain"
    n_train: int = 800
    n_dev: int = 100
    n_test: int = 100
    min_words: int = 1
    max_words: int = 3
    lexicon_size: int = 40
    input_dim: int = 8
    noise_std: float = 0.3
    min_duration: int = 1
    max_duration: int = 3
    min_frames: int = 4

    def __post_init__(self):
        if self.language not in ("plain", "qu"):
            raise ConfigError(f"language must be 'plain' or 'qu', got {self.language!r}")
        if min(self.n_train, self.n_dev, self.n_test) < 0:
            raise ConfigError("split sizes must be >= 0")
        if not 1 <= self.min_words <= self.max_words:
            raise ConfigError("need 1 <= min_words <= max_words")
        if not 1 <= self.min_duration <= self.max_duration:
            raise ConfigError("need 1 <= min_duration <= max_duration")
        if self.min_frames < 1:
            raise ConfigError("min_frames must be >= 1")
        if self.lexicon_size < 1 or self.input_dim < 1 or self.noise_std < 0:
            raise ConfigError("lexicon_size and input_dim must be positive, noise_std >= 0")


class ToyLanguage:
    """Lexicon of consonant-vowel words with Zipfian word frequencies.

    In the ``qu`` variant a share of the words start with ``qu`` + vowel, and
    ``q`` never occurs anywhere else, so every ``q`` is followed by ``u``.
    """

    def __init__(self, kind="plain", lexicon_size=40, seed=0):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
        self.kind = kind
        words = []
        seen = set()
        while len(words) < lexicon_size:
            n_syll = int(rng.integers(1, 4))
            sylls = [str(rng.choice(list(CONSONANTS))) + str(rng.choice(list(VOWELS))) for _ in range(n_syll)]
            if kind == "qu" and rng.random() < 0.3:
                sylls[0] = "qu" + str(rng.choice(list("aeio")))
            w = "".join(sylls)
            if w not in seen:
                seen.add(w)
                words.append(w)
        self.words = words
        ranks = np.arange(1, len(words) + 1)
        self.probs = (1.0 / ranks) / np.sum(1.0 / ranks)

    @property
    def alphabet(self):
        chars = set(CONSONANTS) | set(VOWELS) | {SPACE}
        if self.kind == "qu":
            chars.add("q")
        return sorted(chars)

    def sentence(self, rng, min_words, max_words):
        n = int(rng.integers(min_words, max_words + 1))
        idx = rng.choice(len(self.words), size=n, p=self.probs)
        return SPACE.join(self.words[i] for i in idx)


class FrameRenderer:
    def __init__(self, alphabet, input_dim, noise_std, min_duration=1, max_duration=3, seed=0,
                 min_frames=1):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(8,)))
        self.table = {ch: rng.normal(size=input_dim) for ch in alphabet}
        self.silence = np.zeros(input_dim)
        self.min_frames = min_frames
        self.noise_std = noise_std
        self.min_duration = min_duration
        self.max_duration = max_duration

    def render(self, text, rng) -> np.ndarray:
        frames = []
        for ch in text:
            d = int(rng.integers(self.min_duration, self.max_duration + 1))
            frames.extend([self.table[ch]] * d)
        frames.extend([self.silence] * (self.min_frames - len(frames)))
        x = np.array(frames)
        return (x + rng.normal(scale=self.noise_std, size=x.shape)).astype(np.float32)


def generate(spec: DatasetSpec) -> dict:
    """Deterministic ``{"train", "dev", "test"}`` lists of ``(frames, target)``."""
    lang = ToyLanguage(spec.language, spec.lexicon_size, spec.seed)
    renderer = FrameRenderer(lang.alphabet, spec.input_dim, spec.noise_std,
                             spec.min_duration, spec.max_duration, spec.seed, spec.min_frames)
    splits = {}
    for key, (name, n) in enumerate([("train", spec.n_train), ("dev", spec.n_dev), ("test", spec.n_test)]):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(9, key)))
        rows = []
        for _ in range(n):
            y = lang.sentence(rng, spec.min_words, spec.max_words)
            rows.append((renderer.render(y, rng), y))
        splits[name] = rows
    return splits


# ------------------------------------------------------------------ TSV

def encode_input(x) -> str:
    if isinstance(x, str):
        if _FRAME_RE.match(x) or "\t" in x or "\n" in x:
            raise InvalidInputError(f"raw input {x!r} is ambiguous or contains tab/newline")
        return x
    x = np.asarray(x, dtype="<f4")
    if x.ndim != 2:
        raise InvalidInputError(f"frame input must be 2-D, got shape {x.shape}")
    return f"{x.shape[0]}x{x.shape[1]}:" + base64.b64encode(x.tobytes()).decode("ascii")


def decode_input(field: str):
    m = _FRAME_RE.match(field)
    if not m:
        return field
    T, D = int(m.group(1)), int(m.group(2))
    raw = base64.b64decode(m.group(3))
    if len(raw) != T * D * 4:
        raise InvalidInputError(f"frame field declares {T}x{D} but carries {len(raw)} bytes")
    return np.frombuffer(raw, dtype="<f4").reshape(T, D).astype(np.float32)


def format_tsv(rows) -> str:
    lines = []
    for x, y in rows:
        if "\t" in y or "\n" in y:
            raise InvalidInputError(f"target {y!r} contains tab or newline")
        lines.append(f"{encode_input(x)}\t{y}\n")
    return "".join(lines)


def parse_tsv(text: str, source="<string>") -> list:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        field, sep, y = line.partition("\t")
        if not sep:
            raise InvalidInputError(f"{source}:{lineno}: expected '<input>\\t<target>'")
        rows.append((decode_input(field), y))
    return rows


def write_tsv(rows, path):
    try:
        Path(path).write_text(format_tsv(rows), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write dataset {path}: {exc}") from exc


def read_tsv(path) -> list:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    return parse_tsv(text, path)


def write_splits(splits: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, rows in splits.items():
        paths[name] = out / f"{name}.tsv"
        write_tsv(rows, paths[name])
    return paths
