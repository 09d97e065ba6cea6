"""Build a word-piece vocabulary from character n-gram counts."""

from __future__ import annotations

import warnings
from collections import Counter
from typing import Iterable

from .errors import ConfigError
from .tokens import EOS, SPACE, BaseAlphabet, Vocabulary

# vocabulary size used for each maximum token length at full scale
PRESET_SIZES = {2: 256, 3: 256, 4: 512, 5: 512}


def count_ngrams(lines: Iterable[str], n_max: int) -> Counter:
    """Sliding-window counts of all n-grams of length 1..n_max.

    Windows never cross a space; each space is counted once as a unigram.
    """
    if n_max < 1:
        raise ConfigError("n_max must be >= 1")
    counts = Counter()
    for line in lines:
        line = line.rstrip("\n")
        counts[SPACE] += line.count(SPACE)
        for word in line.split(SPACE):
            for n in range(1, n_max + 1):
                for i in range(len(word) - n + 1):
                    counts[word[i:i + n]] += 1
    if counts[SPACE] == 0:
        del counts[SPACE]
    return counts


def build_vocab(counts: Counter, alphabet: BaseAlphabet, n_max: int, size: int) -> Vocabulary:
    """Singletons + EOS + the most frequent multi-symbol n-grams.

    ``size`` counts every token including singletons and EOS.  Equal counts
    are ordered lexicographically.
    """
    singles = [s for s in alphabet.symbols if s != EOS]
    if size < len(singles) + 1:
        raise ConfigError(
            f"vocabulary size {size} leaves no room for {len(singles)} singletons plus EOS")
    room = size - len(singles) - 1
    candidates = [
        (text, c) for text, c in counts.items()
        if 2 <= len(text) <= n_max and SPACE not in text and all(ch in alphabet for ch in text)
    ]
    candidates.sort(key=lambda tc: (-tc[1], tc[0]))
    if len(candidates) < room:
        warnings.warn(
            f"corpus supplies only {len(candidates)} multi-symbol n-grams for {room} slots; "
            f"vocabulary will have {len(singles) + 1 + len(candidates)} tokens",
            stacklevel=2)
    chosen = candidates[:room]
    texts = [EOS] + singles + [t for t, _ in chosen]
    cnts = [0] + [counts.get(s, 0) for s in singles] + [c for _, c in chosen]
    return Vocabulary(texts, cnts)


def vocab_from_corpus(lines: Iterable[str], n_max: int, size: int,
                      alphabet: BaseAlphabet | None = None) -> Vocabulary:
    lines = [ln.rstrip("\n") for ln in lines]
    if alphabet is None:
        alphabet = BaseAlphabet.from_text(lines)
    return build_vocab(count_ngrams(lines, n_max), alphabet, n_max, size)


def singleton_vocab(alphabet: BaseAlphabet) -> Vocabulary:
    return Vocabulary(list(alphabet.symbols), None)
