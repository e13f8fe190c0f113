import numpy as np
import pytest
from hypothesis import strategies as st

from layerprobe.corpus import DepSentence


def make_sentence(heads, rels=None, tokens=None, sent_id="s"):
    n = len(heads)
    if rels is None:
        rels = tuple("root" if h == 0 else "mod" for h in heads)
    if tokens is None:
        tokens = tuple(f"w{i + 1}" for i in range(n))
    sent = DepSentence(sent_id, tuple(tokens), tuple(heads), tuple(rels))
    sent.validate()
    return sent


@st.composite
def tree_sentences(draw, min_tokens=2, max_tokens=10, labels=("mod", "det", "nsubj", "dobj")):
    """Random well-formed dependency trees."""
    n = draw(st.integers(min_tokens, max_tokens))
    order = draw(st.permutations(range(n)))
    heads = [0] * n
    rels = ["root"] * n
    for k in range(1, n):
        parent = order[draw(st.integers(0, k - 1))]
        heads[order[k]] = parent + 1
        rels[order[k]] = draw(st.sampled_from(labels))
    return make_sentence(heads, tuple(rels))


# Fig. 2-style sentence: "The concert caused a major stir ."
@pytest.fixture
def concert_sentence():
    return DepSentence(
        "concert",
        ("The", "concert", "caused", "a", "major", "stir", "."),
        (2, 3, 0, 6, 6, 3, 3),
        ("det", "nsubj", "root", "det", "amod", "dobj", "punct"),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
