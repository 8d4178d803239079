"""formquery: query-driven value retrieval from form-like documents.

A free-text query and a document's OCR words (with boxes) go through a joint
transformer; each word is scored as part of the answer, nearby words are
grouped into candidates, and the best candidate is returned. Includes
layout-only masked pre-training, a CLI, and an HTTP service.
"""

from .documents import (
    BoundingBox, Document, IngestError, OCRWord, QueryAnnotation,
    load_document, load_document_file, normalize_boxes, serialize_document,
)
from .model import ARCH_BASELINE, ARCH_JOINT, ModelConfig, ModelParams, init_params
from .packing import EXACT_KEY, FIELD_NAME, PackedInput, TrainingExample, \
    make_example, mask_tokens, pack_sequence
from .retrieval import (
    EvalReport, MatchOptions, NoCandidatesError, RetrieveOptions,
    ValueCandidate, ValuePrediction, evaluate, group_candidates,
    retrieve_value, run_eval,
)
from .synth import gen_corpus, gen_synthetic_form
from .text import Vocab, build_vocab, tokenize
from .train import (
    Checkpoint, TrainConfig, examples_from_documents, finetune,
    load_checkpoint, pretrain, save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "ARCH_BASELINE", "ARCH_JOINT", "BoundingBox", "Checkpoint", "Document",
    "EXACT_KEY", "EvalReport", "FIELD_NAME", "IngestError", "MatchOptions",
    "ModelConfig", "ModelParams", "NoCandidatesError", "OCRWord", "PackedInput",
    "QueryAnnotation", "RetrieveOptions", "TrainConfig", "TrainingExample",
    "ValueCandidate", "ValuePrediction", "Vocab", "build_vocab", "evaluate",
    "examples_from_documents", "finetune", "gen_corpus", "gen_synthetic_form",
    "group_candidates", "init_params", "load_checkpoint", "load_document",
    "load_document_file", "make_example", "mask_tokens", "normalize_boxes",
    "pack_sequence", "pretrain", "retrieve_value", "run_eval", "save_checkpoint",
    "serialize_document", "tokenize",
]
