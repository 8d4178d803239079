"""Synthetic form generator for desk-scale experiments.

Lays out key:value pairs on a jittered two-column grid in pixel space, then
normalizes through the regular ingestion path. Each field carries an abstract
field name plus several printed key variants, so queries need not match the
printed key. Deterministic for a given rng.
"""

import numpy as np

from .documents import BoundingBox, Document, OCRWord, QueryAnnotation, normalize_boxes

PAGE_W = 850
PAGE_H = 1100

# layout constants (pixel units); chosen so that after normalization the gap
# between a key and its value clears the candidate-grouping eps while the
# gaps inside a value stay well under it.
_TOP = 90
_ROW_STEP = 64
_COL_X = (60, 480)
_CHAR_W = 8.5
_WORD_H = 20
_INTRA_GAP = 7
_KEY_VALUE_GAP = 26


def _date(rng):
    return [f"{rng.integers(1, 13):02d}/{rng.integers(1, 29):02d}/{rng.integers(2018, 2026)}"]


def _amount(rng):
    return [f"${rng.integers(1, 10_000):,}.{rng.integers(0, 100):02d}"]


def _code(rng):
    prefix = ["inv", "ord", "ref", "po", "acct"][rng.integers(0, 5)]
    return [f"{prefix.upper()}-{rng.integers(1000, 100_000)}"]


_FIRST = ["Alice", "Brian", "Carla", "David", "Elena", "Frank", "Grace", "Henry",
          "Irene", "James", "Karen", "Louis", "Maria", "Nora", "Oscar", "Paula"]
_LAST = ["Adams", "Baker", "Chen", "Diaz", "Evans", "Flores", "Gupta", "Hughes",
         "Ito", "Jones", "Kim", "Lopez", "Meyer", "Novak", "Ortiz", "Patel"]
_COMPANY = ["Acme", "Apex", "Borealis", "Cascade", "Delta", "Everest", "Fulcrum",
            "Granite", "Harbor", "Ironwood", "Juniper", "Keystone"]
_SUFFIX = ["Corp", "Inc", "LLC", "Ltd", "Group", "Supply"]
_CITY = [["Austin", "TX"], ["Boston", "MA"], ["Chicago", "IL"], ["Denver", "CO"],
         ["Fresno", "CA"], ["Houston", "TX"], ["Memphis", "TN"], ["Newark", "NJ"],
         ["Omaha", "NE"], ["Phoenix", "AZ"], ["Reno", "NV"], ["Tampa", "FL"]]
_STATUS = ["Approved", "Pending", "Rejected", "Draft"]
_NOISE = ["form", "internal", "use", "only", "confidential", "copy", "page",
          "original", "document", "retain", "records", "dept", "see", "reverse",
          "void", "after", "issue", "file"]


def _person(rng):
    return [_FIRST[rng.integers(0, len(_FIRST))], _LAST[rng.integers(0, len(_LAST))]]


def _company(rng):
    return [_COMPANY[rng.integers(0, len(_COMPANY))], _SUFFIX[rng.integers(0, len(_SUFFIX))]]


def _phone(rng):
    return [f"({rng.integers(200, 1000)})", f"{rng.integers(200, 1000)}-{rng.integers(1000, 10_000)}"]


def _city(rng):
    return list(_CITY[rng.integers(0, len(_CITY))])


def _smallint(rng):
    return [str(rng.integers(1, 100))]


def _percent(rng):
    return [f"{rng.integers(1, 51)}%"]


def _status(rng):
    return [_STATUS[rng.integers(0, len(_STATUS))]]


# (field_name, printed key variants, value sampler)
FIELD_TEMPLATES = [
    ("invoice_number", ["Invoice No:", "Invoice #:", "Inv. Number:"], _code),
    ("invoice_date", ["Date:", "Invoice Date:", "Dated:"], _date),
    ("due_date", ["Due Date:", "Payment Due:", "Due By:"], _date),
    ("total_amount", ["Total:", "Total Amount:", "Amount Due:", "Balance Due:"], _amount),
    ("total_tax", ["Tax:", "Sales Tax:", "Tax Total:"], _amount),
    ("purchase_order", ["PO Number:", "P.O. #:", "Purchase Order:"], _code),
    ("customer_name", ["Customer:", "Bill To:", "Client Name:"], _person),
    ("vendor_name", ["Vendor:", "Sold By:", "Supplier:"], _company),
    ("contact_phone", ["Phone:", "Tel:", "Phone Number:"], _phone),
    ("contact_fax", ["Fax:", "Fax Number:", "Fax #:"], _phone),
    ("shipping_city", ["City:", "Ship To:", "Destination:"], _city),
    ("account_id", ["Account:", "Acct No:", "Account ID:"], _code),
    ("page_count", ["Pages:", "No. of Pages:", "Page Count:"], _smallint),
    ("order_quantity", ["Qty:", "Quantity:", "Units:"], _smallint),
    ("discount_rate", ["Discount:", "Disc. Rate:", "Rebate:"], _percent),
    ("approval_status", ["Status:", "Approved:", "Approval:"], _status),
]


class LayoutError(ValueError):
    pass


def _word_width(text: str) -> int:
    return max(10, round(_CHAR_W * len(text)))


def gen_synthetic_form(rng: np.random.Generator, n_fields: int = 8,
                       page_width: int = PAGE_W, page_height: int = PAGE_H,
                       noise_words: int = 0, doc_id: str = "synth") -> Document:
    """One synthetic form with n_fields annotated key:value pairs."""
    if not 1 <= n_fields <= len(FIELD_TEMPLATES):
        raise LayoutError(f"n_fields must be in [1, {len(FIELD_TEMPLATES)}]")
    rows_per_col = (page_height - _TOP - 60) // _ROW_STEP
    field_rows = (n_fields + 1) // 2
    noise_rows = (noise_words + 4) // 5 if noise_words else 0
    if field_rows + noise_rows > rows_per_col:
        raise LayoutError(
            f"{n_fields} fields + {noise_words} noise words overfill a "
            f"{page_width}x{page_height} page")

    order = rng.permutation(len(FIELD_TEMPLATES))[:n_fields]
    words: list[OCRWord] = []
    annotations: list[QueryAnnotation] = []

    def put(texts, x, y) -> list[int]:
        ids = []
        for text in texts:
            w = _word_width(text)
            jy = int(rng.integers(-2, 3))
            words.append(OCRWord(
                id=len(words), text=text,
                box=BoundingBox(x, y + jy, x + w, y + jy + _WORD_H)))
            ids.append(words[-1].id)
            x += w + _INTRA_GAP
        return ids

    for slot, template_idx in enumerate(order):
        field_name, variants, sampler = FIELD_TEMPLATES[template_idx]
        key_text = variants[rng.integers(0, len(variants))]
        value_words = sampler(rng)
        col = slot % 2
        row = slot // 2
        x = _COL_X[col] + int(rng.integers(0, 9))
        y = _TOP + row * _ROW_STEP + int(rng.integers(-4, 5))

        key_ids = put(key_text.split(), x, y)
        key_end = words[key_ids[-1]].box.x1
        value_x = key_end + _KEY_VALUE_GAP + int(rng.integers(0, 9))
        value_ids = put(value_words, value_x, y)

        annotations.append(QueryAnnotation(
            key_text=key_text,
            field_name=field_name,
            value_word_ids=(tuple(value_ids),),
            value_texts=(" ".join(value_words),),
        ))

    noise_y = _TOP + field_rows * _ROW_STEP + 20
    remaining = noise_words
    while remaining > 0:
        batch = [_NOISE[rng.integers(0, len(_NOISE))] for _ in range(min(5, remaining))]
        put(batch, _COL_X[0] + int(rng.integers(0, 40)), noise_y)
        remaining -= len(batch)
        noise_y += _ROW_STEP

    raw = Document(doc_id=doc_id, page_width=page_width, page_height=page_height,
                   words=tuple(words), annotations=(), normalized=False)
    doc = normalize_boxes(raw)
    return Document(doc_id=doc.doc_id, page_width=doc.page_width,
                    page_height=doc.page_height, words=doc.words,
                    annotations=tuple(annotations), normalized=True)


def gen_corpus(seed: int, n_docs: int, prefix: str = "synth", **kwargs) -> list[Document]:
    """n_docs generated forms; document k uses a child seed so corpora with
    different sizes share a common prefix."""
    docs = []
    for k in range(n_docs):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        docs.append(gen_synthetic_form(rng, doc_id=f"{prefix}-{seed}-{k:04d}", **kwargs))
    return docs
