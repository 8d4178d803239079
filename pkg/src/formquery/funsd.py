"""Converter from the official FUNSD annotation layout to fqdoc/1.

FUNSD stores semantic entities ("question"/"answer"/...) with per-entity word
lists and question->answer linking; fqdoc/1 wants a flat word list plus
annotations that reference word ids. Page size is not recorded in FUNSD
annotation files, so it must be supplied (or read from the page image).
"""

import json
import logging

log = logging.getLogger(__name__)


def convert_funsd(funsd: dict | str | bytes, page_width: int, page_height: int,
                  doc_id: str) -> dict:
    """Return the fqdoc/1 dict for one FUNSD annotation record."""
    if isinstance(funsd, (str, bytes)):
        funsd = json.loads(funsd)
    entities = funsd["form"]

    words = []
    entity_word_ids: dict[int, list[int]] = {}
    for ent in entities:
        ids = []
        for w in ent.get("words", ()):
            if not str(w.get("text", "")).strip():
                continue  # FUNSD contains empty word stubs
            ids.append(len(words))
            words.append({"id": len(words), "text": w["text"],
                          "box": [int(v) for v in w["box"]]})
        entity_word_ids[ent["id"]] = ids

    by_id = {ent["id"]: ent for ent in entities}
    annotations = []
    for ent in entities:
        if ent.get("label") != "question":
            continue
        key_text = str(ent.get("text", "")).strip()
        if not key_text:
            log.warning("%s: question entity %s has no text, skipped", doc_id, ent["id"])
            continue
        answers = []
        for pair in ent.get("linking", ()):
            if len(pair) != 2 or pair[0] != ent["id"]:
                continue
            linked = by_id.get(pair[1])
            if linked is None or linked.get("label") != "answer":
                continue
            ids = entity_word_ids.get(linked["id"], [])
            if ids:
                answers.append(ids)
        if answers:
            annotations.append({"key_text": key_text, "field_name": None,
                                "answers": answers})

    return {
        "format": "fqdoc/1",
        "doc_id": doc_id,
        "page_width": int(page_width),
        "page_height": int(page_height),
        "words": words,
        "annotations": annotations,
    }
