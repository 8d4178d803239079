"""HTTP inference service over an immutable checkpoint + document store."""

import os
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .documents import Document, denormalize_box, load_document_file
from .retrieval import (
    NoCandidatesError, RetrieveOptions, ValuePrediction, retrieve_value,
)
from .train import Checkpoint, load_checkpoint

SCHEMA = "fqapi/1"


def candidate_payload(cand, doc: Document) -> dict:
    return {
        "text": cand.text,
        "score": cand.score,
        "word_ids": list(cand.word_ids),
        "box_norm": list(cand.box.astuple()),
        "box_px": list(denormalize_box(cand.box, doc.page_width, doc.page_height)),
    }


def prediction_payload(pred: ValuePrediction, doc: Document) -> dict:
    return {
        "schema": SCHEMA,
        "doc_id": pred.doc_id,
        "query": pred.query,
        "prediction": None if pred.candidate is None
        else candidate_payload(pred.candidate, doc),
        "candidates": [candidate_payload(c, doc) for c in pred.all_candidates],
    }


def document_payload(doc: Document, has_image: bool) -> dict:
    return {
        "schema": SCHEMA,
        "doc_id": doc.doc_id,
        "page_width": doc.page_width,
        "page_height": doc.page_height,
        "has_image": has_image,
        "words": [
            {"id": w.id, "text": w.text, "box_norm": list(w.box.astuple()),
             "box_px": list(denormalize_box(w.box, doc.page_width, doc.page_height))}
            for w in doc.words
        ],
    }


@dataclass
class ServeState:
    """Immutable inference snapshot plus request counters."""

    checkpoint: Checkpoint
    documents: dict[str, Document]
    images: dict[str, str]
    opts: RetrieveOptions = RetrieveOptions()
    counters: dict = field(default_factory=lambda: {"requests": 0, "retrievals": 0})


def load_state(ckpt_path: str, docs_dir: str,
               opts: RetrieveOptions = RetrieveOptions()) -> ServeState:
    checkpoint = load_checkpoint(ckpt_path)
    documents = {}
    images = {}
    for name in sorted(os.listdir(docs_dir)):
        path = os.path.join(docs_dir, name)
        if name.endswith(".json"):
            doc = load_document_file(path)
            if doc.doc_id in documents:
                raise ValueError(f"duplicate doc_id {doc.doc_id!r} in {docs_dir}")
            documents[doc.doc_id] = doc
    for doc_id in documents:
        png = os.path.join(docs_dir, f"{doc_id}.png")
        if os.path.exists(png):
            images[doc_id] = png
    return ServeState(checkpoint=checkpoint, documents=documents, images=images,
                      opts=opts)


class RetrieveRequest(BaseModel):
    doc_id: str
    query: str
    top_k: int | None = None


def create_app(state: ServeState, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="formquery", version="1")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/api/documents")
    def list_documents():
        state.counters["requests"] += 1
        return {
            "schema": SCHEMA,
            "documents": [
                {"doc_id": d.doc_id, "page_width": d.page_width,
                 "page_height": d.page_height, "word_count": len(d.words)}
                for d in state.documents.values()
            ],
        }

    @app.get("/api/documents/{doc_id}")
    def get_document(doc_id: str):
        state.counters["requests"] += 1
        doc = state.documents.get(doc_id)
        if doc is None:
            raise HTTPException(404, detail=f"unknown document {doc_id!r}")
        return document_payload(doc, has_image=doc_id in state.images)

    @app.get("/api/documents/{doc_id}/image")
    def get_image(doc_id: str):
        state.counters["requests"] += 1
        path = state.images.get(doc_id)
        if path is None:
            raise HTTPException(404, detail=f"no image for document {doc_id!r}")
        return FileResponse(path, media_type="image/png")

    @app.post("/api/retrieve")
    def retrieve(req: RetrieveRequest):
        state.counters["requests"] += 1
        doc = state.documents.get(req.doc_id)
        if doc is None:
            raise HTTPException(404, detail=f"unknown document {req.doc_id!r}")
        if not req.query.strip():
            raise HTTPException(400, detail="query must be non-empty")
        opts = state.opts
        if req.top_k is not None:
            if req.top_k < 1:
                raise HTTPException(400, detail="top_k must be positive")
            opts = RetrieveOptions(eps=opts.eps, min_vert_overlap=opts.min_vert_overlap,
                                   top_k=req.top_k, min_score=opts.min_score)
        try:
            pred = retrieve_value(doc, req.query, state.checkpoint, opts)
        except NoCandidatesError as e:
            raise HTTPException(422, detail=str(e)) from None
        state.counters["retrievals"] += 1
        return prediction_payload(pred, doc)

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def serve(ckpt_path: str, docs_dir: str, host: str = "127.0.0.1", port: int = 8000,
          static_dir: str | None = None) -> None:
    """Blocking entry point used by the CLI."""
    import uvicorn

    state = load_state(ckpt_path, docs_dir)
    app = create_app(state, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
