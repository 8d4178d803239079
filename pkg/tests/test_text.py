import pytest

from formquery.documents import BoundingBox, Document, OCRWord
from formquery.text import (
    MASK_ID, PAD_ID, UNK_ID, Vocab, build_vocab, split_text, tokenize,
)


def doc_of(text: str) -> Document:
    words = tuple(
        OCRWord(i, t, BoundingBox(i * 10, 0, i * 10 + 8, 10))
        for i, t in enumerate(text.split())
    )
    return Document(doc_id="t", page_width=1000, page_height=1000, words=words)


def test_split_keeps_punctuation_separate():
    assert split_text("Total Amount:") == ["total", "amount", ":"]
    assert split_text("fax#123") == ["fax", "#", "123"]
    assert split_text("") == []
    assert split_text("invoice_date") == ["invoice", "_", "date"]


def test_build_vocab_minimal():
    v = build_vocab([doc_of("a a b")], max_size=10)
    assert v.id_to_token == ("<pad>", "<unk>", "<mask>", "a", "b")


def test_build_vocab_tie_breaks_lexicographically():
    v = build_vocab([doc_of("y x y x")], max_size=10)
    assert v.id_to_token[3:] == ("x", "y")


def test_build_vocab_cap():
    v = build_vocab([doc_of("e d c b a a")], max_size=4)
    assert v.size == 4
    assert v.id_to_token[3] == "a"
    assert tokenize("b c d e", v) == [UNK_ID] * 4


def test_tokenize_examples():
    v = build_vocab([doc_of("total amount fax 123 # :")], max_size=50)
    assert tokenize("Total Amount:", v) == [v.encode("total"), v.encode("amount"), v.encode(":")]
    assert tokenize("", v) == []
    assert tokenize("fax#123", v) == [v.encode("fax"), v.encode("#"), v.encode("123")]
    assert all(i != UNK_ID for i in tokenize("fax#123", v))


def test_reserved_ids_stable_across_rebuild():
    v = build_vocab([doc_of("alpha beta")], max_size=16)
    again = Vocab(id_to_token=tuple(v.id_to_token))
    assert again == v
    assert again.encode("<pad>") == PAD_ID
    assert again.encode("<mask>") == MASK_ID


def test_vocab_requires_reserved_prefix():
    with pytest.raises(ValueError):
        Vocab(id_to_token=("a", "b", "c"))


def test_max_size_must_exceed_reserved():
    with pytest.raises(ValueError):
        build_vocab([doc_of("a")], max_size=3)
