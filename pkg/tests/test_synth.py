import numpy as np
import pytest

from formquery.synth import FIELD_TEMPLATES, LayoutError, gen_corpus, gen_synthetic_form


def test_minimal_form():
    doc = gen_synthetic_form(np.random.default_rng(0), n_fields=1, doc_id="s")
    assert len(doc.words) >= 2
    assert len(doc.annotations) == 1
    assert doc.normalized


def test_same_seed_identical():
    a = gen_synthetic_form(np.random.default_rng(7), n_fields=5, noise_words=6, doc_id="s")
    b = gen_synthetic_form(np.random.default_rng(7), n_fields=5, noise_words=6, doc_id="s")
    assert a == b


def test_corpus_invariants():
    docs = gen_corpus(seed=3, n_docs=200, n_fields=8)
    assert sum(len(d.annotations) for d in docs) == 1600
    for doc in docs:
        seen_keys = set()
        for ann in doc.annotations:
            assert ann.key_text not in seen_keys
            seen_keys.add(ann.key_text)
            assert ann.field_name is not None
            for answer, text in zip(ann.value_word_ids, ann.value_texts):
                assert text == doc.word_texts(answer)
        for w in doc.words:
            assert 0 <= w.box.x0 <= w.box.x1 <= 1000
            assert 0 <= w.box.y0 <= w.box.y1 <= 1000


def test_paraphrase_variants_differ_from_field_name():
    # the printed key is not the field name, which is the point of the
    # arbitrary-query setting
    docs = gen_corpus(seed=1, n_docs=30, n_fields=8)
    assert all(ann.key_text.lower().rstrip(":") != ann.field_name
               for d in docs for ann in d.annotations)


def test_overfull_page_rejected():
    with pytest.raises(LayoutError):
        gen_synthetic_form(np.random.default_rng(0), n_fields=16,
                           page_height=400, doc_id="s")
    with pytest.raises(LayoutError):
        gen_synthetic_form(np.random.default_rng(0), n_fields=0, doc_id="s")


def test_field_pool_is_diverse():
    names = [t[0] for t in FIELD_TEMPLATES]
    assert len(names) == len(set(names)) >= 16
