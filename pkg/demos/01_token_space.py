"""
Token space: vocabularies, valid extensions, longest match
===========================================================

A vocabulary mixes single characters with longer pieces.  Any target
string can be spelled in many ways; this script walks through the
basic operations on a small example.
"""

from lsd import Vocabulary, collapse, max_ext, valid_extensions, vocab_from_corpus

# EOS and space are added automatically with ids 0 and 1, then the singletons.
vocab = Vocabulary.from_texts(["a", "b", "c", "t", "at", "ca", "cat"])
print(vocab, vocab.texts)

# Which tokens may come first when spelling "cat"?
print("first step:", [t.text for t in valid_extensions("cat", 0, vocab)])
# At the end of the target only EOS is allowed.
print("at the end:", [repr(t.text) for t in valid_extensions("cat", 3, vocab)])

# Longest match takes the biggest piece available at every position.
z = max_ext("cat", vocab)
print("longest match:", [vocab[t].text for t in z], "->", collapse(z, vocab))

# Vocabularies can also be built from a corpus: the most frequent n-grams win.
corpus = ["the cat sat", "the hat", "that cat", "a cat that sat"]
built = vocab_from_corpus(corpus, n_max=3, size=16)
print("built:", built.texts[2:])
print("'that cat' by longest match:", [built[t].text for t in max_ext("that cat", built)])
