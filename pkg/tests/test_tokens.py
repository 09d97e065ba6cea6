import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsd.errors import InvalidInputError
from lsd.tokens import (EOS, EOS_ID, SPACE, SPACE_ID, BaseAlphabet, Vocabulary, collapse,
                        extension_table, is_valid_decomposition, max_ext, read_vocab,
                        valid_extensions, write_vocab)

from conftest import random_target, random_vocab


class TestVocabulary:
    def test_reserved_ids(self, cat_vocab):
        assert cat_vocab[EOS_ID].text == EOS
        assert cat_vocab[SPACE_ID].text == SPACE
        assert cat_vocab[EOS_ID].is_eos

    def test_from_texts_adds_missing_singletons(self):
        v = Vocabulary.from_texts(["xy"])
        assert v.texts == [EOS, SPACE, "x", "y", "xy"]

    def test_n_max_and_lengths(self, cat_vocab):
        assert cat_vocab.n_max == 3
        assert cat_vocab[cat_vocab.id("cat")].length == 3

    def test_rejects_missing_reserved(self):
        with pytest.raises(InvalidInputError):
            Vocabulary(["a", "b"])

    def test_rejects_duplicates(self):
        with pytest.raises(InvalidInputError, match="duplicate"):
            Vocabulary([EOS, SPACE, "a", "a"])

    def test_rejects_space_inside_token(self):
        with pytest.raises(InvalidInputError, match="space"):
            Vocabulary([EOS, SPACE, "a", "a "])

    def test_rejects_token_without_singletons(self):
        with pytest.raises(InvalidInputError, match="no singleton"):
            Vocabulary([EOS, SPACE, "a", "ab"])

    def test_unknown_text_and_id(self, cat_vocab):
        with pytest.raises(InvalidInputError):
            cat_vocab.id("dog")
        with pytest.raises(InvalidInputError):
            collapse([99], cat_vocab)

    def test_singleton_only(self, cat_vocab):
        assert not cat_vocab.is_singleton_only()
        assert Vocabulary.from_texts(["a", "b"]).is_singleton_only()


class TestExample:
    """The three-letter example: {a,b,c,t,at,ca,cat} on "cat"."""

    def test_first_step_extensions(self, cat_vocab):
        got = {t.text for t in valid_extensions("cat", 0, cat_vocab)}
        assert got == {"c", "ca", "cat"}

    def test_extensions_later_positions(self, cat_vocab):
        assert {t.text for t in valid_extensions("cat", 1, cat_vocab)} == {"a", "at"}
        assert {t.text for t in valid_extensions("cat", 2, cat_vocab)} == {"t"}

    def test_end_of_target_gives_eos(self, cat_vocab):
        assert [t.id for t in valid_extensions("cat", 3, cat_vocab)] == [EOS_ID]

    def test_max_ext(self, cat_vocab):
        assert [cat_vocab.text(i) for i in max_ext("cat", cat_vocab)] == ["cat"]

    def test_collapse(self, cat_vocab):
        z = cat_vocab.ids(["c", "at"]) + [EOS_ID]
        assert collapse(z, cat_vocab) == "cat"


class TestExtensions:
    def test_sorted_by_id(self):
        v = Vocabulary.from_texts(["ab", "a", "b"])
        ids = [t.id for t in valid_extensions("ab", 0, v)]
        assert ids == sorted(ids)

    def test_bad_position(self, cat_vocab):
        with pytest.raises(InvalidInputError):
            valid_extensions("cat", 4, cat_vocab)
        with pytest.raises(InvalidInputError):
            valid_extensions("cat", -1, cat_vocab)

    def test_unknown_symbol(self, cat_vocab):
        with pytest.raises(InvalidInputError, match="'x'"):
            valid_extensions("xa", 0, cat_vocab)
        with pytest.raises(InvalidInputError):
            max_ext("cax", cat_vocab)

    def test_table_matches_pointwise(self, cat_vocab):
        table = extension_table("catcat", cat_vocab)
        assert len(table) == 7
        for pos, opts in enumerate(table):
            assert opts == valid_extensions("catcat", pos, cat_vocab)

    def test_space_only_as_singleton(self):
        v = Vocabulary.from_texts(["ab", "ba"])
        opts = valid_extensions("a b", 1, v)
        assert [t.id for t in opts] == [SPACE_ID]

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10_000), length=st.integers(1, 12))
    def test_every_extension_matches_target(self, seed, length):
        rng = np.random.default_rng(seed)
        v = random_vocab(rng)
        y = random_target(rng, length=length)
        for pos in range(len(y)):
            for tok in valid_extensions(y, pos, v):
                assert y.startswith(tok.text, pos)
            # every matching token is offered
            offered = {t.text for t in valid_extensions(y, pos, v)}
            assert offered == {t.text for t in v.tokens[1:] if y.startswith(t.text, pos)}

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10_000), length=st.integers(1, 12))
    def test_max_ext_is_valid_and_greedy(self, seed, length):
        rng = np.random.default_rng(seed)
        v = random_vocab(rng)
        y = random_target(rng, length=length)
        z = max_ext(y, v)
        assert is_valid_decomposition(z, y, v)
        pos = 0
        for t in z:
            longest = max(o.length for o in valid_extensions(y, pos, v))
            assert v[t].length == longest
            pos += v[t].length


class TestCollapse:
    def test_eos_contributes_nothing(self, cat_vocab):
        assert collapse([EOS_ID], cat_vocab) == ""
        assert collapse([], cat_vocab) == ""

    def test_invalid_decomposition(self, cat_vocab):
        assert not is_valid_decomposition(cat_vocab.ids(["c", "a"]), "cat", cat_vocab)
        assert not is_valid_decomposition([1234], "cat", cat_vocab)


class TestAlphabet:
    def test_reserved_first(self):
        a = BaseAlphabet("ba")
        assert a.symbols == (EOS, SPACE, "b", "a")

    def test_from_text_sorted(self):
        a = BaseAlphabet.from_text(["cab", "ba d"])
        assert a.symbols == (EOS, SPACE, "a", "b", "c", "d")

    def test_multichar_symbol_rejected(self):
        with pytest.raises(InvalidInputError):
            BaseAlphabet(["ab"])


class TestVocabFile:
    def test_round_trip(self, tmp_path):
        v = Vocabulary.from_texts(["a", "b", "\\", "ab", "a\\"], counts=[3, 4, 1, 2, 7])
        path = tmp_path / "v.txt"
        write_vocab(v, path)
        w = read_vocab(path)
        assert w.texts == v.texts
        assert w.counts == v.counts

    def test_reserved_tokens_are_escaped(self, tmp_path, cat_vocab):
        path = tmp_path / "v.txt"
        write_vocab(cat_vocab, path)
        first = path.read_text().splitlines()[:2]
        assert first == ["\\e\t0", "\\s\t0"]

    def test_plain_token_list(self, tmp_path):
        path = tmp_path / "list.vocab"
        path.write_text("a\nb\nc\nt\nat\nca\ncat\n")
        v = read_vocab(path)
        assert v.texts == [EOS, SPACE, "a", "b", "c", "t", "at", "ca", "cat"]

    def test_bad_count(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("\\e\t0\n\\s\tmany\n")
        with pytest.raises(InvalidInputError, match="not an integer"):
            read_vocab(path)

    def test_bad_escape(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("\\e\t0\n\\q\t1\n")
        with pytest.raises(InvalidInputError, match="escape"):
            read_vocab(path)
