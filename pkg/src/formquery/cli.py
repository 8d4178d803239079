"""Command-line entry points for the full workflow."""

import argparse
import json
import os
import sys

from .documents import load_document_file, save_document_file
from .funsd import convert_funsd
from .model import ModelConfig
from .packing import EXACT_KEY
from .retrieval import MatchOptions, RetrieveOptions, retrieve_value, run_eval
from .synth import gen_corpus
from .text import build_vocab
from .train import (
    PHASE_FINETUNE, PHASE_PRETRAIN, TrainConfig, examples_from_documents,
    finetune, load_checkpoint, load_run_config, pretrain, save_checkpoint,
)


def _load_docs(data_dir):
    docs = []
    for name in sorted(os.listdir(data_dir)):
        if name.endswith(".json"):
            docs.append(load_document_file(os.path.join(data_dir, name)))
    if not docs:
        raise SystemExit(f"error: no .json documents under {data_dir}")
    return docs


def _configs(args, phase):
    file_cfg = load_run_config(args.config) if args.config else {"model": {}, "train": {}}
    train_kw = dict(file_cfg["train"])
    train_kw["phase"] = phase
    for flag in ("lr", "epochs", "batch_size", "seed", "max_steps", "weight_decay",
                 "mask_rate"):
        v = getattr(args, flag, None)
        if v is not None:
            train_kw[flag] = v
    model_kw = dict(file_cfg["model"])
    model_kw.setdefault("vocab_size", 4096)
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def _add_train_flags(p):
    p.add_argument("--config", help="run config JSON ({'model':…, 'train':…})")
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--mask-rate", dest="mask_rate", type=float)


def cmd_gen(args):
    os.makedirs(args.out, exist_ok=True)
    docs = gen_corpus(seed=args.seed if args.seed is not None else 0,
                      n_docs=args.docs, prefix=args.prefix,
                      n_fields=args.fields, noise_words=args.noise)
    for doc in docs:
        save_document_file(doc, os.path.join(args.out, f"{doc.doc_id}.json"))
    print(f"wrote {len(docs)} documents to {args.out}")
    return 0


def cmd_pretrain(args):
    docs = _load_docs(args.data)
    model_cfg, train_cfg = _configs(args, PHASE_PRETRAIN)
    history = []
    ckpt = pretrain(docs, train_cfg, model_cfg, history=history)
    save_checkpoint(ckpt, args.out)
    print(f"pretrained {ckpt.step} steps, final loss "
          f"{history[-1]['loss']:.4f}, saved to {args.out}")
    return 0


def cmd_finetune(args):
    docs = _load_docs(args.data)
    model_cfg, train_cfg = _configs(args, PHASE_FINETUNE)
    init = load_checkpoint(args.init) if args.init else None
    if init is not None:
        vocab = init.vocab
    else:
        vocab = build_vocab(docs, max_size=model_cfg.vocab_size)
    examples = examples_from_documents(docs, vocab, args.query_mode)
    history = []
    ckpt = finetune(examples, init, train_cfg, model_config=model_cfg,
                    vocab=vocab, history=history)
    save_checkpoint(ckpt, args.out)
    print(f"finetuned {ckpt.step} steps on {len(examples)} examples, final loss "
          f"{history[-1]['loss']:.4f}, saved to {args.out}")
    return 0


def cmd_eval(args):
    ckpt = load_checkpoint(args.ckpt)
    docs = _load_docs(args.data)
    opts = RetrieveOptions(min_score=args.min_score)
    match = MatchOptions(case_fold=args.case_fold, squash_whitespace=args.case_fold)
    report = run_eval(ckpt, docs, query_mode=args.query_mode, opts=opts, match=match)
    json.dump(report.to_dict(), sys.stdout, indent=1)
    print()
    return 0


def cmd_retrieve(args):
    from .server import prediction_payload

    ckpt = load_checkpoint(args.ckpt)
    doc = load_document_file(args.doc)
    pred = retrieve_value(doc, args.query, ckpt,
                          RetrieveOptions(top_k=args.top_k))
    json.dump(prediction_payload(pred, doc), sys.stdout, indent=1)
    print()
    return 0


def cmd_convert_funsd(args):
    width, height = args.width, args.height
    if args.image:
        from PIL import Image

        with Image.open(args.image) as im:
            width, height = im.size
    if not width or not height:
        raise SystemExit("error: supply --width/--height or --image")
    with open(args.input, encoding="utf-8") as f:
        funsd = json.load(f)
    doc_id = args.doc_id or os.path.splitext(os.path.basename(args.input))[0]
    fq = convert_funsd(funsd, width, height, doc_id)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(fq, f, indent=1)
    print(f"wrote {args.out} ({len(fq['words'])} words, "
          f"{len(fq['annotations'])} annotations)")
    return 0


def cmd_serve(args):
    from .server import serve

    serve(args.ckpt, args.data, host=args.host, port=args.port,
          static_dir=args.static)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="formquery",
        description="query-driven value retrieval from form-like documents")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--docs", type=int, default=100)
    p.add_argument("--fields", type=int, default=8)
    p.add_argument("--noise", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="synth")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("pretrain", help="masked-token pre-training over OCR words")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="train the retrieval model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="checkpoint to initialize from")
    p.add_argument("--query-mode", dest="query_mode", default=EXACT_KEY,
                   choices=["exact-key", "field-name"])
    _add_train_flags(p)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="exact-match F1 over an annotated directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--query-mode", dest="query_mode", default=EXACT_KEY,
                   choices=["exact-key", "field-name"])
    p.add_argument("--min-score", dest="min_score", type=float)
    p.add_argument("--case-fold", dest="case_fold", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("retrieve", help="answer one query against one document")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--doc", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--top-k", dest="top_k", type=int, default=5)
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("convert-funsd", help="convert FUNSD annotations to fqdoc/1")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--image", help="page image to read dimensions from")
    p.add_argument("--doc-id", dest="doc_id")
    p.set_defaults(fn=cmd_convert_funsd)

    p = sub.add_parser("serve", help="HTTP inference service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except BrokenPipeError:
        return 1
    except Exception as e:  # file/IO/shape errors become exit 1 with a message
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
