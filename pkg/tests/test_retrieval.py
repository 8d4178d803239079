import numpy as np
import pytest

from formquery.documents import BoundingBox, Document, OCRWord
from formquery.model import ModelConfig, init_params
from formquery.retrieval import (
    EvalReport, MatchOptions, NoCandidatesError, RetrieveOptions, evaluate,
    group_candidates, rank_candidates, retrieve_value, run_eval,
)
from formquery.synth import gen_corpus, gen_synthetic_form
from formquery.text import build_vocab
from formquery.train import Checkpoint

SMALL = dict(width=16, layers=2, heads=2, ffn_mult=2)


def words_from_boxes(boxes, texts=None):
    return tuple(
        OCRWord(i, texts[i] if texts else chr(ord("A") + i % 26), BoundingBox(*b))
        for i, b in enumerate(boxes)
    )


# --- independent oracle: full neighbor graph + BFS components ----------------


def oracle_partition(boxes, eps, frac):
    def neighbors(a, b):
        overlap = min(a[3], b[3]) - max(a[1], b[1])
        shorter = min(a[3] - a[1], b[3] - b[1])
        gap = max(max(a[0], b[0]) - min(a[2], b[2]), 0)
        return overlap >= frac * shorter and gap <= eps

    n = len(boxes)
    unvisited = set(range(n))
    parts = []
    while unvisited:
        start = min(unvisited)
        comp = {start}
        frontier = [start]
        unvisited.discard(start)
        while frontier:
            i = frontier.pop()
            for j in list(unvisited):
                if neighbors(boxes[i], boxes[j]):
                    comp.add(j)
                    unvisited.discard(j)
                    frontier.append(j)
        parts.append(frozenset(comp))
    return set(parts)


def test_two_nearby_words_group():
    words = words_from_boxes([(0, 0, 50, 10), (55, 0, 90, 10)])
    cands = group_candidates(words, eps=20)
    assert len(cands) == 1
    assert cands[0].text == "A B"
    assert cands[0].word_ids == (0, 1)
    assert cands[0].box.astuple() == (0, 0, 90, 10)
    assert oracle_partition([w.box.astuple() for w in words], 20, 0.5) == {frozenset({0, 1})}


def test_distant_words_stay_separate():
    words = words_from_boxes([(0, 0, 50, 10), (300, 0, 350, 10)])
    cands = group_candidates(words, eps=20)
    assert len(cands) == 2
    assert oracle_partition([w.box.astuple() for w in words], 20, 0.5) == {
        frozenset({0}), frozenset({1})}


def test_single_word_is_singleton():
    cands = group_candidates(words_from_boxes([(5, 5, 30, 15)]))
    assert len(cands) == 1
    assert cands[0].word_ids == (0,)
    assert group_candidates(()) == []


def test_members_ordered_left_to_right():
    words = words_from_boxes([(60, 0, 90, 10), (0, 0, 50, 10)], texts=["right", "left"])
    cands = group_candidates(words, eps=20)
    assert len(cands) == 1
    assert cands[0].text == "left right"
    assert cands[0].word_ids == (1, 0)


def random_layout(rng, n):
    boxes = []
    for _ in range(n):
        x0 = int(rng.integers(0, 900))
        y0 = int(rng.integers(0, 950))
        boxes.append((x0, y0, x0 + int(rng.integers(5, 100)), y0 + int(rng.integers(5, 40))))
    return boxes


@pytest.mark.parametrize("seed", range(5))
def test_grouping_matches_oracle_on_random_layouts(seed):
    rng = np.random.default_rng(seed)
    for _ in range(40):
        n = int(rng.integers(1, 51))
        boxes = random_layout(rng, n)
        words = words_from_boxes(boxes)
        got = {frozenset(c.word_ids) for c in group_candidates(words)}
        want = oracle_partition(boxes, 15.0, 0.5)
        assert got == want
        # partition: every word appears exactly once
        all_ids = sorted(i for c in group_candidates(words) for i in c.word_ids)
        assert all_ids == list(range(n))


def test_candidate_score_is_member_max():
    words = words_from_boxes([(0, 0, 50, 10), (55, 0, 90, 10), (300, 0, 350, 10)])
    ranked = rank_candidates(group_candidates(words, eps=20), np.array([0.2, 0.7, 0.4]))
    assert ranked[0].score == 0.7
    assert ranked[0].word_ids == (0, 1)
    assert ranked[1].score == 0.4


def make_ckpt(doc, seed=0, **cfg):
    vocab = build_vocab([doc], max_size=512)
    config = ModelConfig(vocab_size=vocab.size, **{**SMALL, **cfg})
    params = init_params(config, np.random.default_rng(seed))
    return Checkpoint(config=config, params=params, vocab=vocab,
                      phase="finetune", step=0)


def test_retrieve_value_argmax_and_ties():
    doc = gen_synthetic_form(np.random.default_rng(0), n_fields=3, doc_id="r0")
    ckpt = make_ckpt(doc)
    # zero head: every candidate scores exactly 0.5, tie broken by top-left
    ckpt.params["head_w"].value[:] = 0.0
    ckpt.params["head_b"].value[:] = 0.0
    pred = retrieve_value(doc, "Total:", ckpt)
    assert pred.candidate.score == 0.5
    first = pred.candidate
    others = pred.all_candidates[1:]
    assert all((first.box.y0, first.box.x0) <= (c.box.y0, c.box.x0) for c in others)
    assert pred.candidate == pred.all_candidates[0]


def test_retrieve_value_empty_document():
    doc = Document(doc_id="empty", page_width=100, page_height=100)
    ckpt = make_ckpt(gen_synthetic_form(np.random.default_rng(0), n_fields=2, doc_id="x"))
    with pytest.raises(NoCandidatesError):
        retrieve_value(doc, "Total:", ckpt)


def test_prediction_invariant_to_word_order():
    doc = gen_synthetic_form(np.random.default_rng(3), n_fields=4, doc_id="r1")
    ckpt = make_ckpt(doc, seed=5)
    pred = retrieve_value(doc, doc.annotations[0].key_text, ckpt)
    rng = np.random.default_rng(9)
    for _ in range(3):
        perm = rng.permutation(len(doc.words))
        remap = {int(old): new for new, old in enumerate(perm)}
        shuffled_words = tuple(
            OCRWord(new, doc.words[old].text, doc.words[old].box)
            for new, old in enumerate(perm))
        shuffled = Document(doc_id=doc.doc_id, page_width=doc.page_width,
                            page_height=doc.page_height, words=shuffled_words)
        pred2 = retrieve_value(shuffled, doc.annotations[0].key_text, ckpt)
        assert pred2.candidate.text == pred.candidate.text
        assert abs(pred2.candidate.score - pred.candidate.score) < 1e-9
        assert ({remap[i] for i in pred.candidate.word_ids}
                == set(pred2.candidate.word_ids))


def test_evaluate_all_correct():
    gold = {("d", "a"): ("1",), ("d", "b"): ("2",)}
    rep = evaluate({("d", "a"): "1", ("d", "b"): "2"}, gold)
    assert (rep.precision, rep.recall, rep.f1) == (1.0, 1.0, 1.0)


def test_evaluate_half_correct():
    gold = {("d", "a"): ("1",), ("d", "b"): ("2",)}
    rep = evaluate({("d", "a"): "1", ("d", "b"): "wrong"}, gold)
    assert (rep.tp, rep.fp, rep.fn) == (1, 1, 1)
    assert (rep.precision, rep.recall, rep.f1) == (0.5, 0.5, 0.5)


def test_evaluate_multi_answer_rule():
    gold = {("d", "a"): ("first", "second")}
    rep = evaluate({("d", "a"): "second"}, gold)
    assert rep.tp == 1 and rep.fp == 0


def test_evaluate_abstention_counts_fn_only():
    gold = {("d", "a"): ("1",), ("d", "b"): ("2",)}
    rep = evaluate({("d", "a"): "1", ("d", "b"): None}, gold)
    assert (rep.tp, rep.fp, rep.fn) == (1, 0, 1)
    assert rep.precision == 1.0 and rep.recall == 0.5


def test_evaluate_unknown_query_rejected():
    with pytest.raises(ValueError, match="unknown"):
        evaluate({("d", "zzz"): "1"}, {("d", "a"): ("1",)})


def test_evaluate_match_options():
    gold = {("d", "a"): ("Total  Amount",)}
    assert evaluate({("d", "a"): "total amount"}, gold).tp == 0
    loose = MatchOptions(case_fold=True, squash_whitespace=True)
    assert evaluate({("d", "a"): "total amount"}, gold, loose).tp == 1


@pytest.mark.parametrize("seed", range(3))
def test_evaluate_identities_on_random_outcomes(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    gold = {}
    preds = {}
    for i in range(n):
        key = ("doc", f"q{i}")
        gold[key] = (f"v{i}",)
        u = rng.random()
        if u < 0.4:
            preds[key] = f"v{i}"
        elif u < 0.8:
            preds[key] = "wrong"
        else:
            preds[key] = None
    rep = evaluate(preds, gold)
    answered = sum(1 for v in preds.values() if v is not None)
    assert rep.tp + rep.fp == answered
    assert rep.tp + rep.fn == n
    if rep.precision + rep.recall:
        assert np.isclose(rep.f1, 2 * rep.precision * rep.recall
                          / (rep.precision + rep.recall))
    else:
        assert rep.f1 == 0.0


def test_run_eval_requires_data_and_mode():
    doc = gen_synthetic_form(np.random.default_rng(1), n_fields=2, doc_id="r")
    ckpt = make_ckpt(doc)
    with pytest.raises(ValueError):
        run_eval(ckpt, [])
    from dataclasses import replace as dreplace

    nameless = Document(
        doc_id="n", page_width=doc.page_width, page_height=doc.page_height,
        words=doc.words,
        annotations=tuple(dreplace(a, field_name=None) for a in doc.annotations))
    with pytest.raises(ValueError, match="field"):
        run_eval(ckpt, [nameless], query_mode="field-name")


def test_run_eval_produces_report():
    docs = gen_corpus(seed=2, n_docs=3, n_fields=3)
    ckpt = make_ckpt(docs[0])
    rep = run_eval(ckpt, docs)
    assert rep.tp + rep.fn == 9
    assert len(rep.records) == 9
    d = rep.to_dict()
    assert set(d) == {"precision", "recall", "f1", "tp", "fp", "fn", "records"}


def test_min_score_threshold_abstains():
    doc = gen_synthetic_form(np.random.default_rng(4), n_fields=2, doc_id="r2")
    ckpt = make_ckpt(doc)
    pred = retrieve_value(doc, "Total:", ckpt, RetrieveOptions(min_score=1.1))
    assert pred.candidate is None
    assert len(pred.all_candidates) > 0
