"""Token space: base alphabet, variable-length token vocabulary, collapse.

Token ids are dense.  Id 0 is always the end-of-sequence token and id 1 the
space token; every other base symbol follows as a singleton, and multi-symbol
tokens come after that in whatever order the vocabulary was built with.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidInputError

EOS = "\x03"
SPACE = " "
EOS_ID = 0
SPACE_ID = 1

_ESCAPES = {SPACE: "\\s", EOS: "\\e", "\\": "\\\\", "\t": "\\t", "\n": "\\n"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


@dataclass(frozen=True)
class Token:
    id: int
    text: str

    @property
    def length(self) -> int:
        return len(self.text)

    @property
    def is_eos(self) -> bool:
        return self.id == EOS_ID


class BaseAlphabet:
    """Ordered set of base symbols, with EOS and space at fixed positions."""

    def __init__(self, symbols: Iterable[str]):
        rest = []
        seen = {EOS, SPACE}
        for s in symbols:
            if len(s) != 1:
                raise InvalidInputError(f"base symbol must be one character, got {s!r}")
            if s not in seen:
                seen.add(s)
                rest.append(s)
        self.symbols = (EOS, SPACE, *rest)
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_text(cls, lines: Iterable[str]) -> "BaseAlphabet":
        chars = set()
        for line in lines:
            chars.update(line)
        chars.discard("\n")
        return cls(sorted(chars))

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, s):
        return s in self._index

    def __iter__(self):
        return iter(self.symbols)

    def __repr__(self):
        return f"BaseAlphabet({''.join(self.symbols[2:])!r})"


class _Node:
    __slots__ = ("children", "token")

    def __init__(self):
        self.children = {}
        self.token = None


class Vocabulary:
    """Immutable token vocabulary indexed by a prefix trie.

    ``texts`` is in id order and must start with EOS and space.  Every symbol
    used inside a longer token must also be present as a singleton, so any
    string over the alphabet has at least one decomposition.
    """

    def __init__(self, texts: Sequence[str], counts: Sequence[int] | None = None):
        texts = list(texts)
        if len(texts) < 2 or texts[EOS_ID] != EOS or texts[SPACE_ID] != SPACE:
            raise InvalidInputError("vocabulary must start with the EOS and space tokens")
        if len(set(texts)) != len(texts):
            dup = sorted({t for t in texts if texts.count(t) > 1})
            raise InvalidInputError(f"duplicate token texts: {dup!r}")
        if counts is None:
            counts = [0] * len(texts)
        elif len(counts) != len(texts):
            raise InvalidInputError("counts and texts differ in length")
        singletons = {t for t in texts if len(t) == 1}
        for t in texts:
            if not t:
                raise InvalidInputError("empty token text")
            if len(t) > 1:
                if SPACE in t or EOS in t:
                    raise InvalidInputError(f"token {t!r} contains space or EOS; both must be singletons")
                missing = set(t) - singletons
                if missing:
                    raise InvalidInputError(f"token {t!r} uses symbols with no singleton: {sorted(missing)!r}")
        self.tokens = tuple(Token(i, t) for i, t in enumerate(texts))
        self.counts = tuple(int(c) for c in counts)
        self.n_max = max(len(t) for t in texts)
        self.alphabet = BaseAlphabet(t for t in texts[2:] if len(t) == 1)
        self._by_text = {t: i for i, t in enumerate(texts)}
        self._root = _Node()
        for tok in self.tokens[1:]:
            node = self._root
            for ch in tok.text:
                node = node.children.setdefault(ch, _Node())
            node.token = tok

    @classmethod
    def from_texts(cls, texts: Iterable[str], counts: Sequence[int] | None = None) -> "Vocabulary":
        """Build from token texts, adding EOS, space and missing singletons."""
        texts = list(texts)
        cnt = dict(zip(texts, counts)) if counts is not None else {}
        ordered = [EOS, SPACE]
        for t in texts:
            for ch in t:
                if ch not in ordered:
                    ordered.append(ch)
        for t in texts:
            if t not in ordered:
                ordered.append(t)
        return cls(ordered, [cnt.get(t, 0) for t in ordered])

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, text):
        return text in self._by_text

    def __getitem__(self, token_id: int) -> Token:
        return self.tokens[token_id]

    def __repr__(self):
        return f"Vocabulary(size={len(self)}, n_max={self.n_max})"

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def id(self, text: str) -> int:
        try:
            return self._by_text[text]
        except KeyError:
            raise InvalidInputError(f"token {text!r} not in vocabulary") from None

    def ids(self, texts: Iterable[str]) -> list[int]:
        return [self.id(t) for t in texts]

    def text(self, token_id: int) -> str:
        self._check_id(token_id)
        return self.tokens[token_id].text

    def _check_id(self, token_id):
        if not (0 <= token_id < len(self.tokens)) or int(token_id) != token_id:
            raise InvalidInputError(f"unknown token id {token_id!r}")

    def check_target(self, y: str):
        for ch in y:
            if ch not in self._by_text:
                raise InvalidInputError(f"symbol {ch!r} of target {y!r} is not in the vocabulary")

    def prefix_matches(self, y: str, pos: int) -> list[Token]:
        """All tokens whose text equals ``y[pos:pos+len]``, shortest first."""
        out = []
        node = self._root
        for ch in y[pos:pos + self.n_max]:
            node = node.children.get(ch)
            if node is None:
                break
            if node.token is not None:
                out.append(node.token)
        return out

    def is_singleton_only(self) -> bool:
        return self.n_max == 1

    def save(self, path):
        write_vocab(self, path)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return read_vocab(path)


def collapse(z: Iterable[int], vocab: Vocabulary) -> str:
    """Concatenate token texts; EOS contributes nothing."""
    parts = []
    for t in z:
        vocab._check_id(t)
        if t != EOS_ID:
            parts.append(vocab.tokens[t].text)
    return "".join(parts)


def valid_extensions(y: str, pos: int, vocab: Vocabulary) -> list[Token]:
    """Tokens that match ``y`` starting at ``pos``, ordered by id.

    At ``pos == len(y)`` the only valid extension is EOS.
    """
    if not 0 <= pos <= len(y):
        raise InvalidInputError(f"position {pos} outside target of length {len(y)}")
    if pos == len(y):
        return [vocab.tokens[EOS_ID]]
    out = vocab.prefix_matches(y, pos)
    if not out:
        raise InvalidInputError(f"symbol {y[pos]!r} of target {y!r} is not in the vocabulary")
    return sorted(out, key=lambda t: t.id)


def extension_table(y: str, vocab: Vocabulary) -> list[list[Token]]:
    """``valid_extensions`` for every position ``0..len(y)``."""
    return [valid_extensions(y, pos, vocab) for pos in range(len(y) + 1)]


def max_ext(y: str, vocab: Vocabulary) -> list[int]:
    """Greedy left-to-right longest-match decomposition (no EOS)."""
    z = []
    pos = 0
    while pos < len(y):
        matches = vocab.prefix_matches(y, pos)
        if not matches:
            raise InvalidInputError(f"symbol {y[pos]!r} of target {y!r} is not in the vocabulary")
        best = matches[-1]
        z.append(best.id)
        pos += best.length
    return z


def is_valid_decomposition(z: Iterable[int], y: str, vocab: Vocabulary) -> bool:
    try:
        return collapse(z, vocab) == y
    except InvalidInputError:
        return False


def _escape(text: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def _unescape(field: str) -> str:
    out = []
    i = 0
    while i < len(field):
        if field[i] == "\\":
            pair = field[i:i + 2]
            if pair not in _UNESCAPES:
                raise InvalidInputError(f"bad escape {pair!r} in vocabulary entry {field!r}")
            out.append(_UNESCAPES[pair])
            i += 2
        else:
            out.append(field[i])
            i += 1
    return "".join(out)


def write_vocab(vocab: Vocabulary, path):
    """One ``<text>\\t<count>`` line per token in id order."""
    lines = [f"{_escape(t.text)}\t{c}\n" for t, c in zip(vocab.tokens, vocab.counts)]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_vocab(path) -> Vocabulary:
    """Read a vocabulary file.

    Either every line is ``<text>\\t<count>`` in id order, or no line has a
    tab and the file is a plain token list; EOS, space and missing singletons
    are then added in front.
    """
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    numbered = [(i, ln) for i, ln in enumerate(lines, 1) if ln]
    if not any("\t" in ln for _, ln in numbered):
        return Vocabulary.from_texts([_unescape(ln) for _, ln in numbered])
    texts, counts = [], []
    for lineno, line in numbered:
        text, sep, count = line.rpartition("\t")
        if not sep:
            raise InvalidInputError(f"{path}:{lineno}: expected '<text>\\t<count>'")
        try:
            counts.append(int(count))
        except ValueError:
            raise InvalidInputError(f"{path}:{lineno}: count {count!r} is not an integer") from None
        texts.append(_unescape(text))
    return Vocabulary(texts, counts)
