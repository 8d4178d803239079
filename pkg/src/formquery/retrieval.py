"""Inference-time value extraction and exact-match evaluation.

Words are grouped horizontally into value candidates with a density scan
(minPts=1, so clustering reduces to connected components of the neighbor
graph); a candidate scores the max of its member words and the best-scoring
candidate becomes the prediction.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from . import model as fm
from .documents import BoundingBox, Document
from .packing import EXACT_KEY, FIELD_NAME, pack_sequence
from .text import tokenize

log = logging.getLogger(__name__)


class NoCandidatesError(RuntimeError):
    """The document offers no words to group into candidates."""


@dataclass(frozen=True)
class RetrieveOptions:
    eps: float = 15.0              # horizontal gap threshold, normalized units
    min_vert_overlap: float = 0.5  # fraction of the shorter box's height
    top_k: int = 5
    min_score: float | None = None  # abstain below this when set


@dataclass(frozen=True)
class MatchOptions:
    case_fold: bool = False
    squash_whitespace: bool = False


@dataclass(frozen=True)
class ValueCandidate:
    word_ids: tuple[int, ...]  # ordered by x0 then word id
    text: str
    box: BoundingBox
    score: float = 0.0


@dataclass(frozen=True)
class ValuePrediction:
    candidate: ValueCandidate | None  # None when abstaining under min_score
    query: str
    doc_id: str
    all_candidates: tuple[ValueCandidate, ...]


def group_candidates(words, eps: float = 15.0,
                     min_vert_overlap: float = 0.5) -> list[ValueCandidate]:
    """Partition words into horizontal clusters. Two words are neighbors iff
    their vertical overlap is at least min_vert_overlap times the shorter
    height and the signed gap between their nearer vertical edges is at most
    eps; clusters are connected components of that graph."""
    words = list(words)
    if not words:
        return []
    boxes = np.array([w.box.astuple() for w in words], dtype=np.float64)
    adj = kernels.box_neighbors(boxes, eps, min_vert_overlap)

    seen = [False] * len(words)
    out = []
    for start in range(len(words)):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        members = []
        while stack:
            i = stack.pop()
            members.append(i)
            for j in np.flatnonzero(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        members.sort(key=lambda i: (words[i].box.x0, words[i].id))
        ids = tuple(words[i].id for i in members)
        box = BoundingBox(
            min(words[i].box.x0 for i in members),
            min(words[i].box.y0 for i in members),
            max(words[i].box.x1 for i in members),
            max(words[i].box.y1 for i in members),
        )
        out.append(ValueCandidate(
            word_ids=ids, text=" ".join(words[i].text for i in members), box=box))
    return out


def word_scores_for_query(doc: Document, query: str, ckpt) -> np.ndarray:
    """Per-word likelihoods: model token scores reduced per word by max.
    Words that fall outside the packing budget keep score 0."""
    query_ids = tokenize(query, ckpt.vocab)
    packed = pack_sequence(query_ids, doc.words, ckpt.vocab, max_len=ckpt.config.max_len)
    out = fm.score_batch(packed, ckpt.params, ckpt.config)
    scores = np.zeros(len(doc.words))
    row = out.scores.value[0]
    wids = out.word_ids[0]
    for pos in np.flatnonzero(out.ocr_mask[0]):
        wid = int(wids[pos])
        if wid >= 0 and row[pos] > scores[wid]:
            scores[wid] = row[pos]
    return scores


def rank_candidates(candidates, word_scores) -> list[ValueCandidate]:
    scored = [replace(c, score=float(max(word_scores[i] for i in c.word_ids)))
              for c in candidates]
    scored.sort(key=lambda c: (-c.score, c.box.y0, c.box.x0, c.word_ids[0]))
    return scored


def retrieve_value(doc: Document, query: str, ckpt,
                   opts: RetrieveOptions = RetrieveOptions()) -> ValuePrediction:
    """Score all words against the query, group candidates, pick the argmax.
    Ties go to the candidate nearer the top-left, then to the lower word id."""
    if not doc.words:
        raise NoCandidatesError(f"document {doc.doc_id} has no words")
    scores = word_scores_for_query(doc, query, ckpt)
    ranked = rank_candidates(group_candidates(doc.words, opts.eps, opts.min_vert_overlap),
                             scores)
    best = ranked[0]
    if opts.min_score is not None and best.score < opts.min_score:
        best = None
    return ValuePrediction(candidate=best, query=query, doc_id=doc.doc_id,
                           all_candidates=tuple(ranked[: opts.top_k]))


# --- evaluation --------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    records: tuple[dict, ...] = ()

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "records": list(self.records)}


def _norm_text(text: str, opts: MatchOptions) -> str:
    if opts.squash_whitespace:
        text = " ".join(text.split())
    if opts.case_fold:
        text = text.casefold()
    return text


def evaluate(predictions: dict, gold: dict,
             opts: MatchOptions = MatchOptions()) -> EvalReport:
    """Exact-string scoring. Keys identify one query on one document; gold
    maps each key to its acceptable answer texts (a prediction matching any
    one of them is correct). A missing or None prediction counts one false
    negative; a wrong one counts a false positive and a false negative."""
    unknown = set(predictions) - set(gold)
    if unknown:
        raise ValueError(f"predictions for unknown queries: {sorted(unknown)!r}")
    tp = fp = fn = 0
    records = []
    for key in gold:
        answers = [_norm_text(t, opts) for t in gold[key]]
        predicted = predictions.get(key)
        correct = predicted is not None and _norm_text(predicted, opts) in answers
        if correct:
            tp += 1
        elif predicted is None:
            fn += 1
        else:
            fp += 1
            fn += 1
        doc_id, query = key if isinstance(key, tuple) else (None, key)
        records.append({"doc_id": doc_id, "query": query, "predicted": predicted,
                        "gold": list(gold[key]), "correct": correct})
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalReport(precision=precision, recall=recall, f1=f1,
                      tp=tp, fp=fp, fn=fn, records=tuple(records))


def run_eval(ckpt, docs, query_mode: str = EXACT_KEY,
             opts: RetrieveOptions = RetrieveOptions(),
             match: MatchOptions = MatchOptions()) -> EvalReport:
    """Retrieve a value for every (document, annotation) pair and score it."""
    if not docs:
        raise ValueError("run_eval needs a non-empty dataset")
    if query_mode not in (EXACT_KEY, FIELD_NAME):
        raise ValueError(f"unknown query_mode {query_mode!r}")
    if query_mode == FIELD_NAME and not any(
            a.field_name for d in docs for a in d.annotations):
        raise ValueError("field-name evaluation needs field_name annotations")

    predictions = {}
    gold = {}
    for doc in docs:
        for ann in doc.annotations:
            if query_mode == FIELD_NAME:
                if ann.field_name is None:
                    log.warning("%s/%r: no field name, skipped", doc.doc_id, ann.key_text)
                    continue
                query = ann.field_name
            else:
                query = ann.key_text
            key = (doc.doc_id, query)
            try:
                pred = retrieve_value(doc, query, ckpt, opts)
                text = None if pred.candidate is None else pred.candidate.text
            except NoCandidatesError:
                text = None
            predictions[key] = text
            gold.setdefault(key, set())
            gold[key] = gold[key] | set(ann.value_texts)
    gold = {k: tuple(sorted(v)) for k, v in gold.items()}
    return evaluate(predictions, gold, match)
