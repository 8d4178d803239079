"""Joint query+OCR input packing, label construction, and MLM masking."""

import logging
from dataclasses import dataclass

import numpy as np

from .documents import Document, QueryAnnotation
from .text import MASK_ID, PAD_ID, Vocab, tokenize

log = logging.getLogger(__name__)

MAX_LEN = 512
SEG_QUERY = 0
SEG_OCR = 1
SEG_PAD = 2

QUERY_BOX = (0, 0, 1000, 1000)
PAD_BOX = (0, 0, 0, 0)

EXACT_KEY = "exact-key"
FIELD_NAME = "field-name"


class PackError(ValueError):
    pass


def _frozen(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PackedInput:
    """Query tokens then OCR tokens then padding, with parallel boxes.

    word_ids maps each OCR token back to its source word (-1 elsewhere).
    """

    token_ids: np.ndarray
    boxes: np.ndarray
    segments: np.ndarray
    word_ids: np.ndarray
    M: int
    N: int

    @property
    def length(self) -> int:
        return len(self.token_ids)


def pack_sequence(query_ids, ocr_words, vocab: Vocab,
                  pad_to: int | None = None, max_len: int = MAX_LEN) -> PackedInput:
    """Pack query ids and OCR words into one sequence of at most max_len.

    OCR words are tokenized in file order and truncated at token granularity
    to the remaining budget; multi-token words repeat the word's box. Query
    tokens carry the fixed dummy box; PAD fills up to pad_to when given.
    """
    m = len(query_ids)
    if m > max_len:
        raise PackError(f"query alone has {m} tokens, budget is {max_len}")
    budget = max_len - m

    ids = list(query_ids)
    boxes = [QUERY_BOX] * m
    segments = [SEG_QUERY] * m
    word_ids = [-1] * m

    n = 0
    for word in ocr_words:
        if n >= budget:
            break
        toks = tokenize(word.text, vocab)
        for t in toks[: budget - n]:
            ids.append(t)
            boxes.append(word.box.astuple())
            segments.append(SEG_OCR)
            word_ids.append(word.id)
            n += 1

    total = m + n
    if pad_to is not None:
        if pad_to < total:
            raise PackError(f"pad_to={pad_to} below packed length {total}")
        pad = pad_to - total
        ids.extend([PAD_ID] * pad)
        boxes.extend([PAD_BOX] * pad)
        segments.extend([SEG_PAD] * pad)
        word_ids.extend([-1] * pad)

    return PackedInput(
        token_ids=_frozen(np.asarray(ids, dtype=np.int64)),
        boxes=_frozen(np.asarray(boxes, dtype=np.int64).reshape(-1, 4)),
        segments=_frozen(np.asarray(segments, dtype=np.int8)),
        word_ids=_frozen(np.asarray(word_ids, dtype=np.int64)),
        M=m, N=n,
    )


@dataclass(frozen=True, eq=False)
class TrainingExample:
    packed: PackedInput
    labels: np.ndarray  # one per OCR token
    doc_id: str
    query: str
    negative: bool


def make_example(doc: Document, ann: QueryAnnotation, query_mode: str,
                 vocab: Vocab, pad_to: int | None = None) -> TrainingExample | None:
    """Build one training example, or None when the annotation lacks the
    field name required by field-name mode (logged as a warning)."""
    if query_mode == EXACT_KEY:
        query = ann.key_text
    elif query_mode == FIELD_NAME:
        if ann.field_name is None:
            log.warning("skipping %s/%r: no field_name for field-name mode",
                        doc.doc_id, ann.key_text)
            return None
        query = ann.field_name
    else:
        raise ValueError(f"unknown query_mode {query_mode!r}")

    packed = pack_sequence(tokenize(query, vocab), doc.words, vocab, pad_to=pad_to)
    positive = set()
    for answer in ann.value_word_ids:
        positive.update(answer)
    ocr_words = packed.word_ids[packed.M: packed.M + packed.N]
    labels = np.isin(ocr_words, sorted(positive)).astype(np.float64)
    labels.flags.writeable = False
    return TrainingExample(packed=packed, labels=labels, doc_id=doc.doc_id,
                           query=query, negative=not labels.any())


def mask_tokens(packed: PackedInput, rate: float, rng: np.random.Generator,
                vocab_size: int):
    """BERT-style masking over non-PAD positions: each position is selected
    independently with probability rate; selected positions become MASK 80%
    of the time, a random vocab id 10%, and stay unchanged 10%.

    Returns the masked PackedInput and {position: original id} targets.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0,1], got {rate}")
    ids = packed.token_ids.copy()
    eligible = packed.segments != SEG_PAD
    selected = (rng.random(len(ids)) < rate) & eligible
    targets = {}
    for pos in np.flatnonzero(selected):
        targets[int(pos)] = int(ids[pos])
        u = rng.random()
        if u < 0.8:
            ids[pos] = MASK_ID
        elif u < 0.9:
            ids[pos] = int(rng.integers(0, vocab_size))
    masked = PackedInput(
        token_ids=_frozen(ids), boxes=packed.boxes, segments=packed.segments,
        word_ids=packed.word_ids, M=packed.M, N=packed.N,
    )
    return masked, targets
