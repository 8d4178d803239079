"""Joint query+OCR transformer with 2-D location embeddings.

Every token embedding is the sum of a word embedding and lookup-table
embeddings of its box (corners, width, height). A standard post-norm encoder
stack models query/OCR interactions; a projection head scores each OCR token
against the mean-pooled query representation through a sigmoid. The baseline
variant encodes OCR tokens only and embeds the query with a static table, so
query and document never interact inside the encoder.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from .autodiff import NEG_INF, Node
from .packing import SEG_OCR, SEG_PAD, SEG_QUERY, PackedInput

ARCH_JOINT = "joint"
ARCH_BASELINE = "baseline"

COORD_BUCKETS = 1001  # integer coordinates 0..1000 inclusive
LOC_TABLES = ("loc_x0", "loc_y0", "loc_x1", "loc_y1", "loc_w", "loc_h")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    width: int = 64
    layers: int = 4
    heads: int = 4
    ffn_mult: int = 4
    max_len: int = 512
    use_1d_positions: bool = False
    use_segment_embedding: bool = True
    arch: str = ARCH_JOINT

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.layers < 1:
            raise ValueError("need at least one encoder layer")
        if self.arch not in (ARCH_JOINT, ARCH_BASELINE):
            raise ValueError(f"unknown arch {self.arch!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def param_specs(config: ModelConfig) -> list[tuple[str, tuple, str]]:
    """(name, shape, init) for every parameter, in checkpoint order."""
    d = config.width
    specs = [("word_table", (config.vocab_size, d), "normal")]
    specs += [(name, (COORD_BUCKETS, d), "normal") for name in LOC_TABLES]
    if config.use_1d_positions:
        specs.append(("pos1d_table", (config.max_len, d), "normal"))
    if config.use_segment_embedding:
        specs.append(("segment_table", (2, d), "normal"))
    for i in range(config.layers):
        p = f"layer{i}."
        for proj in ("q", "k", "v", "o"):
            specs.append((p + f"attn_w{proj}", (d, d), "normal"))
            specs.append((p + f"attn_b{proj}", (d,), "zeros"))
        specs.append((p + "ln1_gain", (d,), "ones"))
        specs.append((p + "ln1_bias", (d,), "zeros"))
        specs.append((p + "ffn_w1", (d, config.ffn_mult * d), "normal"))
        specs.append((p + "ffn_b1", (config.ffn_mult * d,), "zeros"))
        specs.append((p + "ffn_w2", (config.ffn_mult * d, d), "normal"))
        specs.append((p + "ffn_b2", (d,), "zeros"))
        specs.append((p + "ln2_gain", (d,), "ones"))
        specs.append((p + "ln2_bias", (d,), "zeros"))
    specs.append(("head_w", (d, d), "normal"))
    specs.append(("head_b", (d,), "zeros"))
    specs.append(("mlm_w", (d, config.vocab_size), "normal"))
    if config.arch == ARCH_BASELINE:
        specs.append(("baseline_query_table", (config.vocab_size, d), "normal"))
    return specs


class ModelParams:
    """Named parameter Nodes in a stable order."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Node]):
        self.config = config
        self._tensors = dict(tensors)
        expected = {name: shape for name, shape, _ in param_specs(config)}
        if set(self._tensors) != set(expected):
            missing = set(expected) - set(self._tensors)
            extra = set(self._tensors) - set(expected)
            raise ValueError(f"parameter names mismatch: missing={sorted(missing)} "
                             f"extra={sorted(extra)}")
        for name, node in self._tensors.items():
            if node.value.shape != expected[name]:
                raise ValueError(f"{name}: shape {node.value.shape}, "
                                 f"expected {expected[name]}")

    def __getitem__(self, name: str) -> Node:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return [name for name, _, _ in param_specs(self.config)]

    def nodes(self) -> list[Node]:
        return [self._tensors[n] for n in self.names()]

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: self._tensors[n].value for n in self.names()}


def _trunc_normal(rng, shape, std=0.02, clip=3.0):
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > clip * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > clip * std
    return out


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Fresh parameters: truncated-normal weights (std 0.02, cut at 3 sigma),
    unit layer-norm gains, zero biases. Deterministic for a given rng."""
    tensors = {}
    for name, shape, kind in param_specs(config):
        if kind == "normal":
            value = _trunc_normal(rng, shape)
        elif kind == "ones":
            value = np.ones(shape)
        else:
            value = np.zeros(shape)
        tensors[name] = ad.param(value)
    return ModelParams(config, tensors)


# --- batching ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Batch:
    """PackedInputs stacked to a common length (padded with PAD)."""

    token_ids: np.ndarray   # (B, T) int64
    boxes: np.ndarray       # (B, T, 4) int64
    segments: np.ndarray    # (B, T) int8
    word_ids: np.ndarray    # (B, T) int64
    query_len: np.ndarray   # (B,) int64
    ocr_len: np.ndarray     # (B,) int64

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def length(self) -> int:
        return self.token_ids.shape[1]


def collate(packed: list[PackedInput], pad_to: int | None = None) -> Batch:
    """Stack packed inputs, padding each to the longest (or to pad_to)."""
    if not packed:
        raise ValueError("empty batch")
    t = max(p.length for p in packed)
    if pad_to is not None:
        if pad_to < t:
            raise ValueError(f"pad_to={pad_to} below longest packed length {t}")
        t = pad_to
    b = len(packed)
    token_ids = np.zeros((b, t), dtype=np.int64)
    boxes = np.zeros((b, t, 4), dtype=np.int64)
    segments = np.full((b, t), SEG_PAD, dtype=np.int8)
    word_ids = np.full((b, t), -1, dtype=np.int64)
    for i, p in enumerate(packed):
        token_ids[i, : p.length] = p.token_ids
        boxes[i, : p.length] = p.boxes
        segments[i, : p.length] = p.segments
        word_ids[i, : p.length] = p.word_ids
    return Batch(token_ids=token_ids, boxes=boxes, segments=segments, word_ids=word_ids,
                 query_len=np.array([p.M for p in packed], dtype=np.int64),
                 ocr_len=np.array([p.N for p in packed], dtype=np.int64))


def _as_batch(x) -> Batch:
    return x if isinstance(x, Batch) else collate([x])


# --- forward pieces ----------------------------------------------------------


def embed(packed, params: ModelParams, config: ModelConfig) -> Node:
    """Token embeddings: word table + six location tables (+ optional 1-D
    position and segment terms). Query tokens carry the dummy full-page box."""
    batch = _as_batch(packed)
    ids = batch.token_ids
    if ids.max(initial=0) >= config.vocab_size:
        raise ad.ShapeError("token id outside vocabulary")
    boxes = batch.boxes
    if boxes.min(initial=0) < 0 or boxes.max(initial=0) > 1000:
        raise ad.ShapeError("coordinate outside [0, 1000]")

    h = ad.take_rows(params["word_table"], ids)
    coords = (boxes[..., 0], boxes[..., 1], boxes[..., 2], boxes[..., 3],
              boxes[..., 2] - boxes[..., 0], boxes[..., 3] - boxes[..., 1])
    for name, c in zip(LOC_TABLES, coords):
        h = ad.add(h, ad.take_rows(params[name], c))
    if config.use_1d_positions:
        pos = np.broadcast_to(np.arange(batch.length), ids.shape)
        h = ad.add(h, ad.take_rows(params["pos1d_table"], pos))
    if config.use_segment_embedding:
        seg = np.minimum(batch.segments, 1).astype(np.int64)  # PAD shares OCR row
        h = ad.add(h, ad.take_rows(params["segment_table"], seg))
    return h


def pad_attention_mask(segments: np.ndarray) -> np.ndarray:
    """(B,1,1,T) additive mask: 0 at real tokens, NEG_INF at PAD keys."""
    pad = (segments == SEG_PAD).astype(np.float64)
    return (pad * NEG_INF)[:, None, None, :]


def encode(h0: Node, params: ModelParams, config: ModelConfig,
           pad_mask: np.ndarray, attention_out: list | None = None) -> Node:
    """Post-norm encoder stack: multi-head scaled dot-product self-attention
    (PAD keys masked out of the softmax), residual + layer norm, GELU
    feed-forward, residual + layer norm."""
    b, t, d = h0.value.shape
    heads = config.heads
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    mask = ad.const(pad_mask)

    def split_heads(x):
        return ad.moveaxis(ad.reshape(x, (b, t, heads, dh)), 2, 1)

    h = h0
    for i in range(config.layers):
        p = f"layer{i}."
        q = split_heads(ad.add(ad.matmul(h, params[p + "attn_wq"]), params[p + "attn_bq"]))
        k = split_heads(ad.add(ad.matmul(h, params[p + "attn_wk"]), params[p + "attn_bk"]))
        v = split_heads(ad.add(ad.matmul(h, params[p + "attn_wv"]), params[p + "attn_bv"]))
        scores = ad.add(ad.scale(ad.matmul(q, ad.transpose_last2(k)), scale), mask)
        probs = ad.softmax_rows(scores)
        if attention_out is not None:
            attention_out.append(probs.value)
        ctx = ad.reshape(ad.moveaxis(ad.matmul(probs, v), 1, 2), (b, t, d))
        attn = ad.add(ad.matmul(ctx, params[p + "attn_wo"]), params[p + "attn_bo"])
        h = ad.layer_norm(ad.add(h, attn), params[p + "ln1_gain"], params[p + "ln1_bias"])
        ffn = ad.gelu(ad.add(ad.matmul(h, params[p + "ffn_w1"]), params[p + "ffn_b1"]))
        ffn = ad.add(ad.matmul(ffn, params[p + "ffn_w2"]), params[p + "ffn_b2"])
        h = ad.layer_norm(ad.add(h, ffn), params[p + "ln2_gain"], params[p + "ln2_bias"])
    return h


def _pool_weights(lengths: np.ndarray, starts: np.ndarray, t: int) -> np.ndarray:
    b = len(lengths)
    w = np.zeros((b, 1, t))
    for i, (s, n) in enumerate(zip(starts, lengths)):
        if n < 1:
            raise ad.ShapeError("cannot pool over zero tokens")
        w[i, 0, s: s + n] = 1.0 / n
    return w


def pool_query(h: Node, query_len: np.ndarray) -> Node:
    """Arithmetic mean of the first M rows per example -> (B, 1, d)."""
    b, t, _ = h.value.shape
    query_len = np.atleast_1d(np.asarray(query_len, dtype=np.int64))
    w = _pool_weights(query_len, np.zeros(b, dtype=np.int64), t)
    return ad.matmul(ad.const(w), h)


def score_words(h: Node, pooled: Node, params: ModelParams):
    """Pairing head: project each position, dot with the pooled query vector,
    squash through a sigmoid. Returns (scores, logits), both (B, T)."""
    proj = ad.add(ad.matmul(h, params["head_w"]), params["head_b"])
    b, t, _ = h.value.shape
    logits = ad.reshape(ad.matmul(proj, ad.transpose_last2(pooled)), (b, t))
    return ad.sigmoid(logits), logits


@dataclass(frozen=True, eq=False)
class ScoreOutput:
    scores: Node            # (B, T_out)
    logits: Node            # (B, T_out)
    ocr_mask: np.ndarray    # (B, T_out) 1.0 where an OCR token lives
    word_ids: np.ndarray    # (B, T_out) source word id or -1
    ocr_start: np.ndarray   # (B,) index of the first OCR token per row
    attention: list = dc_field(default_factory=list)


def score_batch(packed, params: ModelParams, config: ModelConfig,
                collect_attention: bool = False) -> ScoreOutput:
    """Full forward pass for either architecture."""
    batch = _as_batch(packed)
    if config.arch == ARCH_BASELINE:
        return _baseline_score(batch, params, config, collect_attention)
    attention = [] if collect_attention else None
    h0 = embed(batch, params, config)
    h = encode(h0, params, config, pad_attention_mask(batch.segments), attention)
    pooled = pool_query(h, batch.query_len)
    scores, logits = score_words(h, pooled, params)
    return ScoreOutput(
        scores=scores, logits=logits,
        ocr_mask=(batch.segments == SEG_OCR).astype(np.float64),
        word_ids=batch.word_ids,
        ocr_start=batch.query_len.copy(),
        attention=attention or [],
    )


def _strip_query(batch: Batch) -> Batch:
    """OCR tokens only, left-aligned; used by the baseline encoder."""
    b = batch.size
    t = max(1, int(batch.ocr_len.max()))
    token_ids = np.zeros((b, t), dtype=np.int64)
    boxes = np.zeros((b, t, 4), dtype=np.int64)
    segments = np.full((b, t), SEG_PAD, dtype=np.int8)
    word_ids = np.full((b, t), -1, dtype=np.int64)
    for i in range(b):
        m, n = int(batch.query_len[i]), int(batch.ocr_len[i])
        token_ids[i, :n] = batch.token_ids[i, m: m + n]
        boxes[i, :n] = batch.boxes[i, m: m + n]
        segments[i, :n] = SEG_OCR
        word_ids[i, :n] = batch.word_ids[i, m: m + n]
    return Batch(token_ids=token_ids, boxes=boxes, segments=segments,
                 word_ids=word_ids, query_len=np.zeros(b, dtype=np.int64),
                 ocr_len=batch.ocr_len.copy())


def baseline_query_vector(batch: Batch, params: ModelParams) -> Node:
    """Static query representation: mean of per-token table rows, (B, 1, d).
    Depends only on the query ids, never on the document."""
    b = batch.size
    qmax = int(batch.query_len.max())
    q_ids = np.zeros((b, qmax), dtype=np.int64)
    for i in range(b):
        m = int(batch.query_len[i])
        q_ids[i, :m] = batch.token_ids[i, :m]
    q_emb = ad.take_rows(params["baseline_query_table"], q_ids)
    weights = _pool_weights(batch.query_len, np.zeros(b, dtype=np.int64), qmax)
    return ad.matmul(ad.const(weights), q_emb)


def _baseline_score(batch: Batch, params: ModelParams, config: ModelConfig,
                    collect_attention: bool) -> ScoreOutput:
    """Shallow interaction: the encoder sees OCR tokens only, the query is the
    mean of static per-token embeddings, pairing happens only at the head."""
    if config.arch != ARCH_BASELINE:
        raise ad.GraphError("baseline scoring requires arch='baseline'")
    b = batch.size
    ocr = _strip_query(batch)
    attention = [] if collect_attention else None
    h0 = embed(ocr, params, config)
    h = encode(h0, params, config, pad_attention_mask(ocr.segments), attention)
    pooled = baseline_query_vector(batch, params)
    scores, logits = score_words(h, pooled, params)
    return ScoreOutput(
        scores=scores, logits=logits,
        ocr_mask=(ocr.segments == SEG_OCR).astype(np.float64),
        word_ids=ocr.word_ids,
        ocr_start=np.zeros(b, dtype=np.int64),
        attention=attention or [],
    )


# --- losses ------------------------------------------------------------------


def place_labels(out: ScoreOutput, label_rows: list[np.ndarray]) -> np.ndarray:
    """Arrange per-example OCR-token labels into the score layout."""
    y = np.zeros(out.scores.value.shape)
    for i, row in enumerate(label_rows):
        s = int(out.ocr_start[i])
        y[i, s: s + len(row)] = row
    return y


def retrieval_loss(out: ScoreOutput, label_rows: list[np.ndarray]) -> Node:
    """Mean BCE over OCR positions, averaged per example then over the batch."""
    y = place_labels(out, label_rows)
    return ad.sigmoid_bce_masked(out.logits, y, out.ocr_mask)


def mlm_logits(h: Node, params: ModelParams, targets: list[dict[int, int]]):
    """Vocabulary logits at masked positions and their mean cross entropy.

    targets holds one {position: original id} map per batch row.
    """
    b, t, d = h.value.shape
    flat_pos = []
    flat_ids = []
    for row, tmap in enumerate(targets):
        for pos, tok in sorted(tmap.items()):
            flat_pos.append(row * t + pos)
            flat_ids.append(tok)
    if not flat_pos:
        raise ad.ShapeError("mlm_logits: no masked positions")
    gathered = ad.take_rows(ad.reshape(h, (b * t, d)), np.array(flat_pos))
    logits = ad.matmul(gathered, params["mlm_w"])
    loss = ad.softmax_xent_rows(logits, np.array(flat_ids))
    return logits, loss


def mlm_loss(packed, params: ModelParams, config: ModelConfig,
             targets: list[dict[int, int]]) -> Node:
    batch = _as_batch(packed)
    h0 = embed(batch, params, config)
    h = encode(h0, params, config, pad_attention_mask(batch.segments))
    return mlm_logits(h, params, targets)[1]
