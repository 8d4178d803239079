import numpy as np
import pytest

from formquery.model import ModelConfig
from formquery.synth import gen_corpus
from formquery.text import build_vocab
from formquery.train import (
    PHASE_FINETUNE, PHASE_PRETRAIN, Checkpoint, CheckpointError, TrainConfig,
    examples_from_documents, finetune, load_checkpoint, pretrain, save_checkpoint,
)

SMALL = dict(width=16, layers=2, heads=2, ffn_mult=2)


@pytest.fixture(scope="module")
def corpus():
    return gen_corpus(seed=21, n_docs=4, n_fields=3, noise_words=4)


@pytest.fixture(scope="module")
def vocab(corpus):
    return build_vocab(corpus, max_size=512)


def pretrain_cfg(**kw):
    kw.setdefault("phase", PHASE_PRETRAIN)
    kw.setdefault("lr", 1e-3)
    return TrainConfig(**kw)


def finetune_cfg(**kw):
    kw.setdefault("phase", PHASE_FINETUNE)
    kw.setdefault("lr", 1e-3)
    return TrainConfig(**kw)


def test_config_defaults_mirror_published_values():
    pre = TrainConfig(phase=PHASE_PRETRAIN)
    fin = TrainConfig(phase=PHASE_FINETUNE)
    assert pre.lr == 5e-5
    assert fin.lr == 3e-5
    assert fin.epochs == 45
    assert fin.batch_size == 8
    assert fin.mask_rate == 0.15


def test_pretrain_step_bookkeeping(corpus):
    history = []
    pretrain(corpus[:1], pretrain_cfg(batch_size=1, epochs=1, seed=3),
             ModelConfig(vocab_size=256, **SMALL), history=history)
    steps = [h for h in history if h["phase"] == PHASE_PRETRAIN]
    assert len(steps) == 1


def test_pretrain_deterministic_trajectory(corpus):
    h1, h2 = [], []
    c1 = pretrain(corpus, pretrain_cfg(epochs=2, seed=5),
                  ModelConfig(vocab_size=256, **SMALL), history=h1)
    c2 = pretrain(corpus, pretrain_cfg(epochs=2, seed=5),
                  ModelConfig(vocab_size=256, **SMALL), history=h2)
    assert [h["loss"] for h in h1] == [h["loss"] for h in h2]
    for name in c1.params.names():
        assert np.array_equal(c1.params[name].value, c2.params[name].value)


def test_pretrain_never_reads_annotations(corpus):
    from dataclasses import replace

    stripped = [replace(d, annotations=()) for d in corpus]
    a = pretrain(corpus, pretrain_cfg(epochs=1, seed=9),
                 ModelConfig(vocab_size=256, **SMALL))
    b = pretrain(stripped, pretrain_cfg(epochs=1, seed=9),
                 ModelConfig(vocab_size=256, **SMALL))
    for name in a.params.names():
        assert np.array_equal(a.params[name].value, b.params[name].value)


def test_pretrain_rejects_empty_corpus():
    with pytest.raises(ValueError, match="non-empty"):
        pretrain([], pretrain_cfg(), ModelConfig(vocab_size=64, **SMALL))


def test_mlm_loss_halves_on_tiny_corpus():
    # 200 steps over 50 documents at the default width must cut the MLM loss
    # to half of log(vocab) (the uniform-prediction level)
    docs = gen_corpus(seed=40, n_docs=50, n_fields=8, noise_words=6)
    history = []
    ckpt = pretrain(docs,
                    pretrain_cfg(lr=2e-3, epochs=29, max_steps=200, seed=4),
                    ModelConfig(vocab_size=4096), history=history)
    assert ckpt.step == 200
    assert history[0]["loss"] > 0.9 * np.log(ckpt.vocab.size)
    tail = np.mean([h["loss"] for h in history[-10:]])
    assert tail <= 0.5 * np.log(ckpt.vocab.size)


def test_finetune_from_pretrained_differs_from_scratch(corpus, vocab):
    examples = examples_from_documents(corpus, vocab)
    mc = ModelConfig(vocab_size=vocab.size, **SMALL)
    pre = pretrain(corpus, pretrain_cfg(epochs=1, seed=1), mc, vocab=vocab)
    h_fresh, h_init = [], []
    finetune(examples, None, finetune_cfg(epochs=1, seed=2), model_config=mc,
             vocab=vocab, history=h_fresh)
    finetune(examples, pre, finetune_cfg(epochs=1, seed=2), history=h_init)
    assert h_fresh[0]["loss"] != h_init[0]["loss"]


def test_finetune_requires_config_when_fresh(corpus, vocab):
    examples = examples_from_documents(corpus, vocab)
    with pytest.raises(ValueError):
        finetune(examples, None, finetune_cfg())


def test_checkpoint_round_trip_bit_exact(tmp_path, corpus, vocab):
    examples = examples_from_documents(corpus, vocab)
    mc = ModelConfig(vocab_size=vocab.size, **SMALL)
    ckpt = finetune(examples, None, finetune_cfg(epochs=1, seed=4),
                    model_config=mc, vocab=vocab)
    path = tmp_path / "model.fqckpt"
    save_checkpoint(ckpt, str(path))
    loaded = load_checkpoint(str(path))
    assert loaded.config == ckpt.config
    assert loaded.vocab == ckpt.vocab
    assert loaded.phase == ckpt.phase
    assert loaded.step == ckpt.step
    for name in ckpt.params.names():
        assert np.array_equal(loaded.params[name].value, ckpt.params[name].value)
    for kind in ("m", "v"):
        for name, arr in ckpt.opt_moments[kind].items():
            assert np.array_equal(loaded.opt_moments[kind][name], arr)


def test_checkpoint_truncation_detected(tmp_path, corpus, vocab):
    mc = ModelConfig(vocab_size=vocab.size, **SMALL)
    ckpt = pretrain(corpus, pretrain_cfg(epochs=1, seed=6), mc, vocab=vocab)
    path = tmp_path / "model.fqckpt"
    save_checkpoint(ckpt, str(path))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 4096])
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(str(path))


def test_checkpoint_rejects_other_formats(tmp_path):
    path = tmp_path / "junk.fqckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))


def test_resume_matches_uninterrupted_run(tmp_path, corpus, vocab):
    examples = examples_from_documents(corpus, vocab)
    mc = ModelConfig(vocab_size=vocab.size, **SMALL)
    # uninterrupted: 3 steps
    full = finetune(examples, None, finetune_cfg(epochs=2, seed=8, max_steps=3),
                    model_config=mc, vocab=vocab)
    # stop after 2, save, reload, run 1 more
    part = finetune(examples, None, finetune_cfg(epochs=2, seed=8, max_steps=2),
                    model_config=mc, vocab=vocab)
    path = tmp_path / "part.fqckpt"
    save_checkpoint(part, str(path))
    resumed = finetune(examples, load_checkpoint(str(path)),
                       finetune_cfg(epochs=2, seed=8, max_steps=3))
    assert resumed.step == full.step == 3
    for name in full.params.names():
        assert np.array_equal(resumed.params[name].value, full.params[name].value)


def test_two_finetune_runs_bit_identical_files(tmp_path, corpus, vocab):
    examples = examples_from_documents(corpus, vocab)
    mc = ModelConfig(vocab_size=vocab.size, **SMALL)
    paths = []
    for run in ("a", "b"):
        ckpt = finetune(examples, None, finetune_cfg(epochs=1, seed=12),
                        model_config=mc, vocab=vocab)
        p = tmp_path / f"{run}.fqckpt"
        save_checkpoint(ckpt, str(p))
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_training_log_written(tmp_path, corpus, vocab):
    import json

    mc = ModelConfig(vocab_size=vocab.size, **SMALL)
    pretrain(corpus, pretrain_cfg(epochs=1, seed=2, checkpoint_dir=str(tmp_path)),
             mc, vocab=vocab)
    log = (tmp_path / "train_log.jsonl").read_text().strip().splitlines()
    rec = json.loads(log[0])
    assert {"step", "phase", "loss", "lr", "timestamp"} <= set(rec)
    assert (tmp_path / "pretrain.fqckpt").exists()
