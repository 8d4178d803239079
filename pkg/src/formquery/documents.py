"""Document data model and fqdoc/1 ingestion.

Boxes on disk are in original pixel units; in-memory documents are normalized
to the [0, 1000] page grid at load. All types are frozen and safe to share.
"""

import json
import math
from dataclasses import dataclass, replace

FORMAT = "fqdoc/1"
PAGE_UNITS = 1000


class IngestError(ValueError):
    """Malformed document input; the message names the offending field."""


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class BoundingBox:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            raise IngestError(f"box: coordinates out of order or negative: {self.astuple()}")

    def astuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class OCRWord:
    id: int
    text: str
    box: BoundingBox

    def __post_init__(self):
        if not self.text.strip():
            raise IngestError(f"words[{self.id}].text: empty or blank")


@dataclass(frozen=True)
class QueryAnnotation:
    key_text: str
    field_name: str | None
    value_word_ids: tuple[tuple[int, ...], ...]
    value_texts: tuple[str, ...]

    def __post_init__(self):
        if not self.key_text.strip():
            raise IngestError("annotations.key_text: empty or blank")
        if not self.value_word_ids:
            raise IngestError(f"annotations[{self.key_text!r}].answers: empty")


@dataclass(frozen=True)
class Document:
    doc_id: str
    page_width: int
    page_height: int
    words: tuple[OCRWord, ...] = ()
    annotations: tuple[QueryAnnotation, ...] = ()
    normalized: bool = True

    def __post_init__(self):
        if self.page_width <= 0 or self.page_height <= 0:
            raise IngestError(f"page dimensions must be positive, got "
                              f"{self.page_width}x{self.page_height}")
        for i, w in enumerate(self.words):
            if w.id != i:
                raise IngestError(f"words[{i}].id: expected {i}, got {w.id}")
            if self.normalized and (w.box.x1 > PAGE_UNITS or w.box.y1 > PAGE_UNITS):
                raise IngestError(f"words[{i}].box: outside normalized page: {w.box.astuple()}")
        n = len(self.words)
        for ann in self.annotations:
            for answer in ann.value_word_ids:
                for wid in answer:
                    if not 0 <= wid < n:
                        raise IngestError(
                            f"annotations[{ann.key_text!r}].answers: dangling reference "
                            f"to word {wid} (document has {n} words)")

    def word_texts(self, word_ids) -> str:
        return " ".join(self.words[i].text for i in word_ids)


def normalize_boxes(doc: Document) -> Document:
    """Rescale pixel boxes onto the [0, 1000] grid (round half-up, clamp).

    Idempotent: an already-normalized document is returned unchanged.
    """
    if doc.normalized:
        return doc
    sx = PAGE_UNITS / doc.page_width
    sy = PAGE_UNITS / doc.page_height

    def norm(v, s):
        return min(max(_round_half_up(v * s), 0), PAGE_UNITS)

    words = tuple(
        replace(w, box=BoundingBox(norm(w.box.x0, sx), norm(w.box.y0, sy),
                                   norm(w.box.x1, sx), norm(w.box.y1, sy)))
        for w in doc.words
    )
    return replace(doc, words=words, normalized=True)


def denormalize_box(box: BoundingBox, page_width: int, page_height: int) -> tuple[int, int, int, int]:
    """Map a normalized box back to pixel units (inverse of normalize_boxes)."""
    sx = page_width / PAGE_UNITS
    sy = page_height / PAGE_UNITS
    return (_round_half_up(box.x0 * sx), _round_half_up(box.y0 * sy),
            _round_half_up(box.x1 * sx), _round_half_up(box.y1 * sy))


def _answer_texts(words, answers, key_text):
    texts = []
    for answer in answers:
        try:
            texts.append(" ".join(words[i].text for i in answer))
        except IndexError:
            raise IngestError(
                f"annotations[{key_text!r}].answers: dangling reference") from None
    return tuple(texts)


def load_document(data: bytes | str | dict) -> Document:
    """Parse one fqdoc/1 JSON document and normalize its boxes."""
    if isinstance(data, (bytes, str)):
        try:
            obj = json.loads(data)
        except json.JSONDecodeError as e:
            raise IngestError(f"malformed JSON: {e}") from None
    else:
        obj = data
    if not isinstance(obj, dict):
        raise IngestError("document: expected a JSON object")
    fmt = obj.get("format", FORMAT)
    if fmt != FORMAT:
        raise IngestError(f"format: unsupported {fmt!r}, expected {FORMAT!r}")
    for key in ("doc_id", "page_width", "page_height", "words"):
        if key not in obj:
            raise IngestError(f"{key}: missing")
    words = []
    for i, w in enumerate(obj["words"]):
        for key in ("id", "text", "box"):
            if key not in w:
                raise IngestError(f"words[{i}].{key}: missing")
        box = w["box"]
        if len(box) != 4:
            raise IngestError(f"words[{i}].box: expected 4 coordinates")
        try:
            words.append(OCRWord(id=int(w["id"]), text=str(w["text"]),
                                 box=BoundingBox(*map(int, box))))
        except IngestError as e:
            raise IngestError(f"words[{i}]: {e}") from None

    raw = Document(
        doc_id=str(obj["doc_id"]),
        page_width=int(obj["page_width"]),
        page_height=int(obj["page_height"]),
        words=tuple(words),
        normalized=False,
    )
    doc = normalize_boxes(raw)

    annotations = []
    for a in obj.get("annotations", ()):
        if "key_text" not in a or "answers" not in a:
            raise IngestError("annotations: key_text and answers are required")
        answers = tuple(tuple(int(i) for i in ans) for ans in a["answers"])
        annotations.append(QueryAnnotation(
            key_text=str(a["key_text"]),
            field_name=None if a.get("field_name") is None else str(a["field_name"]),
            value_word_ids=answers,
            value_texts=_answer_texts(doc.words, answers, a["key_text"]),
        ))
    return replace(doc, annotations=tuple(annotations))


def serialize_document(doc: Document) -> dict:
    """Emit the fqdoc/1 dict for a document (boxes back in pixel units)."""
    words = []
    for w in doc.words:
        box = (denormalize_box(w.box, doc.page_width, doc.page_height)
               if doc.normalized else w.box.astuple())
        words.append({"id": w.id, "text": w.text, "box": list(box)})
    return {
        "format": FORMAT,
        "doc_id": doc.doc_id,
        "page_width": doc.page_width,
        "page_height": doc.page_height,
        "words": words,
        "annotations": [
            {"key_text": a.key_text, "field_name": a.field_name,
             "answers": [list(ans) for ans in a.value_word_ids]}
            for a in doc.annotations
        ],
    }


def load_document_file(path) -> Document:
    with open(path, "rb") as f:
        return load_document(f.read())


def save_document_file(doc: Document, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(serialize_document(doc), f, indent=1)
