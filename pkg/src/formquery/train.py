"""Training orchestration: layout-only MLM pre-training, retrieval
fine-tuning, and versioned binary checkpoints.

All randomness is derived statelessly from (seed, purpose, counter), so a
(seed, data, config) triple fully determines the parameter trajectory and a
reloaded checkpoint continues exactly where the run stopped. Checkpoints
carry the Adam moments so a resumed step is bit-identical to an
uninterrupted one.
"""

import json
import os
import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as fm
from .autodiff import backward, param, zero_grads
from .documents import Document
from .model import ModelConfig, ModelParams, init_params
from .optim import AdamState, adam_step, init_adam
from .packing import EXACT_KEY, TrainingExample, make_example, mask_tokens, pack_sequence
from .text import Vocab, build_vocab

PHASE_PRETRAIN = "pretrain"
PHASE_FINETUNE = "finetune"

CKPT_FORMAT = "fqckpt/1"
_MAGIC = b"FQCKPT1\n"

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


class CheckpointError(ValueError):
    pass


@dataclass
class TrainConfig:
    """Run settings; lr and epochs default per phase when left None
    (pretrain: 5e-5 / 1 epoch, finetune: 3e-5 / 45 epochs)."""

    phase: str = PHASE_FINETUNE
    lr: float | None = None
    weight_decay: float = 0.01
    batch_size: int = 8
    epochs: int | None = None
    seed: int = 0
    mask_rate: float = 0.15
    eval_every: int = 0
    max_steps: int | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.phase not in (PHASE_PRETRAIN, PHASE_FINETUNE):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.lr is None:
            self.lr = 5e-5 if self.phase == PHASE_PRETRAIN else 3e-5
        if self.epochs is None:
            self.epochs = 1 if self.phase == PHASE_PRETRAIN else 45
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    vocab: Vocab
    phase: str
    step: int
    rng_state: dict = field(default_factory=dict)
    opt_moments: dict | None = None  # {"m": {name: arr}, "v": {name: arr}}


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _log_record(history, log_file, **fields):
    fields["timestamp"] = time.time()
    if history is not None:
        history.append(fields)
    if log_file is not None:
        log_file.write(json.dumps(fields) + "\n")
        log_file.flush()


def _open_log(config: TrainConfig):
    if config.checkpoint_dir is None:
        return None
    os.makedirs(config.checkpoint_dir, exist_ok=True)
    return open(os.path.join(config.checkpoint_dir, "train_log.jsonl"), "a",
                encoding="utf-8")


def _epoch_batches(n: int, config: TrainConfig, epoch: int):
    order = _rng(config.seed, 1, epoch).permutation(n)
    bs = config.batch_size
    return [order[i: i + bs] for i in range(0, n, bs)]


def _finite_or_die(loss: float, phase: str, step: int):
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"{phase} loss became non-finite at step {step}; aborting")


def _make_optimizer(params: ModelParams, config: TrainConfig,
                    resume: Checkpoint | None) -> AdamState:
    nodes = params.nodes()
    opt = init_adam(nodes, lr=config.lr, beta1=_ADAM_BETA1, beta2=_ADAM_BETA2,
                    eps=_ADAM_EPS, weight_decay=config.weight_decay)
    if resume is not None and resume.opt_moments is not None:
        opt.step = resume.step
        for i, name in enumerate(params.names()):
            if name in resume.opt_moments["m"]:
                opt.m[i][:] = resume.opt_moments["m"][name]
                opt.v[i][:] = resume.opt_moments["v"][name]
    return opt


def _finish(mc, params, vocab, phase, step, config, opt, log_file) -> Checkpoint:
    if log_file is not None:
        log_file.close()
    names = params.names()
    ckpt = Checkpoint(
        config=mc, params=params, vocab=vocab, phase=phase, step=step,
        rng_state={"seed": config.seed, "step": step},
        opt_moments={"m": {n: opt.m[i] for i, n in enumerate(names)},
                     "v": {n: opt.v[i] for i, n in enumerate(names)}},
    )
    if config.checkpoint_dir is not None:
        save_checkpoint(ckpt, os.path.join(config.checkpoint_dir, f"{phase}.fqckpt"))
    return ckpt


def pretrain(corpus: list[Document], config: TrainConfig,
             model_config: ModelConfig | None = None, vocab: Vocab | None = None,
             resume: Checkpoint | None = None, history: list | None = None) -> Checkpoint:
    """Masked-token pre-training over OCR words only (no query segment)."""
    if not corpus:
        raise ValueError("pretrain needs a non-empty corpus")
    if config.phase != PHASE_PRETRAIN:
        raise ValueError("config.phase must be 'pretrain'")
    if config.mask_rate <= 0:
        raise ValueError("pretraining needs mask_rate > 0")

    if resume is not None:
        vocab, mc, params = resume.vocab, resume.config, resume.params
        start = resume.step
    else:
        if model_config is None:
            model_config = ModelConfig(vocab_size=4096)
        if vocab is None:
            vocab = build_vocab(corpus, max_size=model_config.vocab_size)
        mc = replace(model_config, vocab_size=vocab.size)
        params = init_params(mc, _rng(config.seed, 0))
        start = 0

    packs = [pack_sequence([], doc.words, vocab, max_len=mc.max_len) for doc in corpus]
    opt = _make_optimizer(params, config, resume)
    log_file = _open_log(config)

    steps_per_epoch = max(1, (len(packs) + config.batch_size - 1) // config.batch_size)
    step = start
    nodes = params.nodes()
    for epoch in range(step // steps_per_epoch, config.epochs):
        batches = _epoch_batches(len(packs), config, epoch)
        for batch_idx in range(step % steps_per_epoch, len(batches)):
            if config.max_steps is not None and step >= config.max_steps:
                return _finish(mc, params, vocab, PHASE_PRETRAIN, step, config, opt, log_file)
            masked, targets = [], []
            for attempt in range(1000):
                mask_rng = _rng(config.seed, 2, step, attempt)
                masked, targets = [], []
                for i in batches[batch_idx]:
                    mp, t = mask_tokens(packs[i], config.mask_rate, mask_rng, vocab.size)
                    masked.append(mp)
                    targets.append(t)
                if any(targets):
                    break
            loss = fm.mlm_loss(fm.collate(masked), params, mc, targets)
            _finite_or_die(float(loss.value), PHASE_PRETRAIN, step)
            zero_grads(nodes)
            backward(loss)
            adam_step(nodes, None, opt)
            step += 1
            _log_record(history, log_file, step=step, phase=PHASE_PRETRAIN,
                        loss=float(loss.value), lr=config.lr)
    return _finish(mc, params, vocab, PHASE_PRETRAIN, step, config, opt, log_file)


def finetune(examples: list[TrainingExample], init: Checkpoint | None,
             config: TrainConfig, model_config: ModelConfig | None = None,
             vocab: Vocab | None = None, eval_fn=None,
             history: list | None = None) -> Checkpoint:
    """BCE fine-tuning of the pairing model on packed training examples.

    `init` may be a pre-training checkpoint (shared weights are copied, the
    rest initialized fresh) or a fine-tuning checkpoint (exact resume).
    """
    if not examples:
        raise ValueError("finetune needs training examples")
    if config.phase != PHASE_FINETUNE:
        raise ValueError("config.phase must be 'finetune'")

    resume = None
    if init is not None:
        vocab = init.vocab
        if init.phase == PHASE_FINETUNE:
            mc, params, start, resume = init.config, init.params, init.step, init
        else:
            mc = init.config if model_config is None else replace(
                model_config, vocab_size=init.vocab.size)
            params = init_from_checkpoint(init, mc, config.seed)
            start = 0
    else:
        if vocab is None or model_config is None:
            raise ValueError("fresh finetune needs model_config and vocab")
        mc = replace(model_config, vocab_size=vocab.size)
        params = init_params(mc, _rng(config.seed, 0))
        start = 0

    opt = _make_optimizer(params, config, resume)
    log_file = _open_log(config)

    steps_per_epoch = max(1, (len(examples) + config.batch_size - 1) // config.batch_size)
    step = start
    nodes = params.nodes()
    for epoch in range(step // steps_per_epoch, config.epochs):
        batches = _epoch_batches(len(examples), config, epoch)
        for batch_idx in range(step % steps_per_epoch, len(batches)):
            if config.max_steps is not None and step >= config.max_steps:
                return _finish(mc, params, vocab, PHASE_FINETUNE, step, config, opt, log_file)
            chosen = [examples[i] for i in batches[batch_idx]]
            out = fm.score_batch(fm.collate([ex.packed for ex in chosen]), params, mc)
            loss = fm.retrieval_loss(out, [ex.labels for ex in chosen])
            _finite_or_die(float(loss.value), PHASE_FINETUNE, step)
            zero_grads(nodes)
            backward(loss)
            adam_step(nodes, None, opt)
            step += 1
            _log_record(history, log_file, step=step, phase=PHASE_FINETUNE,
                        loss=float(loss.value), lr=config.lr)
            if eval_fn is not None and config.eval_every and step % config.eval_every == 0:
                metrics = eval_fn(Checkpoint(mc, params, vocab, PHASE_FINETUNE, step))
                _log_record(history, log_file, step=step, phase="eval", **metrics)
    return _finish(mc, params, vocab, PHASE_FINETUNE, step, config, opt, log_file)


def init_from_checkpoint(ckpt: Checkpoint, config: ModelConfig, seed: int) -> ModelParams:
    """Fresh params for `config`, overwritten by same-name same-shape tensors
    from the checkpoint (so arch changes keep the shared encoder weights)."""
    params = init_params(config, _rng(seed, 0))
    src = ckpt.params.arrays()
    for name in params.names():
        if name in src and src[name].shape == params[name].value.shape:
            params[name].value[:] = src[name]
    return params


def load_run_config(path: str) -> dict:
    """Run config file: {"model": {ModelConfig fields}, "train": {TrainConfig
    fields}}; either section may be omitted. CLI flags override entries."""
    with open(path, encoding="utf-8") as f:
        cfg = json.load(f)
    unknown = set(cfg) - {"model", "train"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return {"model": dict(cfg.get("model", {})), "train": dict(cfg.get("train", {}))}


def examples_from_documents(docs: list[Document], vocab: Vocab,
                            query_mode: str = EXACT_KEY) -> list[TrainingExample]:
    """One training example per (document, annotation); annotations unusable
    in the chosen mode are skipped by make_example."""
    out = []
    for doc in docs:
        for ann in doc.annotations:
            ex = make_example(doc, ann, query_mode, vocab)
            if ex is not None:
                out.append(ex)
    return out


# --- checkpoint container ----------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Binary container: magic, length-prefixed JSON manifest, then raw
    little-endian float64 tensor blobs (crc32 per tensor in the manifest)."""
    named = [(name, arr) for name, arr in ckpt.params.arrays().items()]
    if ckpt.opt_moments is not None:
        for kind in ("m", "v"):
            named.extend((f"adam.{kind}.{n}", a)
                         for n, a in ckpt.opt_moments[kind].items())
    tensors = []
    blobs = []
    offset = 0
    for name, arr in named:
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(data), "crc32": zlib.crc32(data)})
        blobs.append(data)
        offset += len(data)
    manifest = {
        "format": CKPT_FORMAT,
        "model_config": ckpt.config.to_dict(),
        "vocab": list(ckpt.vocab.id_to_token),
        "phase": ckpt.phase,
        "step": ckpt.step,
        "rng_state": ckpt.rng_state,
        "has_opt_moments": ckpt.opt_moments is not None,
        "tensors": tensors,
    }
    payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(len(payload).to_bytes(8, "little"))
        f.write(payload)
        for blob in blobs:
            f.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    n = int.from_bytes(raw[len(_MAGIC): len(_MAGIC) + 8], "little")
    head = len(_MAGIC) + 8
    try:
        manifest = json.loads(raw[head: head + n])
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise CheckpointError(f"{path}: corrupt manifest") from None
    if manifest.get("format") != CKPT_FORMAT:
        raise CheckpointError(
            f"{path}: format {manifest.get('format')!r}, expected {CKPT_FORMAT!r}")
    config = ModelConfig(**manifest["model_config"])
    vocab = Vocab(id_to_token=tuple(manifest["vocab"]))
    body = raw[head + n:]
    arrays = {}
    for spec in manifest["tensors"]:
        chunk = body[spec["offset"]: spec["offset"] + spec["nbytes"]]
        if len(chunk) != spec["nbytes"] or zlib.crc32(chunk) != spec["crc32"]:
            raise CheckpointError(f"{path}: checksum mismatch for {spec['name']} "
                                  f"(file truncated or corrupt)")
        arrays[spec["name"]] = (np.frombuffer(chunk, dtype="<f8")
                                .astype(np.float64).reshape(spec["shape"]))
    params = ModelParams(config, {n: param(a.copy()) for n, a in arrays.items()
                                  if not n.startswith("adam.")})
    opt_moments = None
    if manifest.get("has_opt_moments"):
        opt_moments = {"m": {}, "v": {}}
        for name, arr in arrays.items():
            if name.startswith("adam.m."):
                opt_moments["m"][name[len("adam.m."):]] = arr.copy()
            elif name.startswith("adam.v."):
                opt_moments["v"][name[len("adam.v."):]] = arr.copy()
    return Checkpoint(config=config, params=params, vocab=vocab,
                      phase=manifest["phase"], step=manifest["step"],
                      rng_state=manifest.get("rng_state", {}),
                      opt_moments=opt_moments)
