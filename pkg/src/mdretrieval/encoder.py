"""Siamese embedding-bag dual encoder.

Both towers share one token embedding table. A sentence bag is pooled (mean
or sum, multiplicity weighted) from the rows of its in-vocabulary features,
then passed through that tower's affine+tanh layers (zero layers by default,
so a bag is just the pooled embedding). Scoring is the raw dot product.

Training minimizes the in-batch softmax cross-entropy: within a batch, every
example's target serves as a candidate for every query, so the logit matrix
is B x B and the correct candidate sits on the diagonal. Gradients are exact
and sparse on the embedding side (only rows touched by the batch), which is
what makes adagrad's per-parameter scaling effective on heavy-tailed n-gram
frequencies.
"""

from __future__ import annotations

import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .corpus import ExamplePair
from .vocabulary import Vocabulary

logger = logging.getLogger(__name__)

INIT_SCALE = 0.05
ADAGRAD_EPS = 1e-8

CHECKPOINT_MAGIC = b"MDRL"
CHECKPOINT_VERSION = 1


class TrainError(RuntimeError):
    """Training aborted (empty stream or non-finite loss)."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or does not match the given vocabulary."""


@dataclass
class ModelConfig:
    dim: int = 64
    tower_layers: int = 0
    pooling: str = "mean"

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.tower_layers < 0:
            raise ValueError(f"tower_layers must be >= 0, got {self.tower_layers}")
        if self.pooling not in ("mean", "sum"):
            raise ValueError(f"pooling must be 'mean' or 'sum', got {self.pooling!r}")


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 1
    learning_rate: float = 0.1
    optimizer: str = "adagrad"
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (in-batch candidates require it)")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adagrad", "sgd"):
            raise ValueError(f"optimizer must be 'adagrad' or 'sgd', got {self.optimizer!r}")


@dataclass
class EmbeddingModel:
    """Shared embedding table plus per-tower affine parameters."""

    table: np.ndarray
    query_tower: list[tuple[np.ndarray, np.ndarray]]
    target_tower: list[tuple[np.ndarray, np.ndarray]]
    config: ModelConfig
    vocab_hash: str
    vocab: Vocabulary | None = None
    train_log: list[float] = field(default_factory=list)

    def all_params(self):
        """Yield (name, array) for every trainable parameter."""
        yield "table", self.table
        for tower_name, layers in (("query", self.query_tower), ("target", self.target_tower)):
            for i, (w, b) in enumerate(layers):
                yield f"{tower_name}.{i}.W", w
                yield f"{tower_name}.{i}.b", b


def init_model(
    config: ModelConfig,
    vocab: Vocabulary,
    seed: int,
    dtype=np.float32,
) -> EmbeddingModel:
    """Initialize all parameters uniformly in [-INIT_SCALE, INIT_SCALE].

    The small symmetric init keeps initial logits near zero, so the first
    batch loss sits at ln(batch size).
    """
    rng = np.random.default_rng(seed)
    table = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocab), config.dim)).astype(dtype)
    towers = []
    for _ in range(2):
        layers = []
        for _ in range(config.tower_layers):
            w = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(config.dim, config.dim)).astype(dtype)
            b = rng.uniform(-INIT_SCALE, INIT_SCALE, size=config.dim).astype(dtype)
            layers.append((w, b))
        towers.append(layers)
    return EmbeddingModel(
        table=table,
        query_tower=towers[0],
        target_tower=towers[1],
        config=config,
        vocab_hash=vocab.digest(),
        vocab=vocab,
    )


# ---------------------------------------------------------------------------
# Encoding pairs into sparse count matrices


@dataclass
class EncodedSide:
    counts: sparse.csr_array  # n x |V| feature multiplicities
    totals: np.ndarray  # per-row in-vocabulary multiplicity mass

    def rows(self, idx: np.ndarray) -> "EncodedSide":
        return EncodedSide(self.counts[idx], self.totals[idx])


@dataclass
class EncodedPairs:
    query: EncodedSide
    target: EncodedSide
    n: int

    def rows(self, idx: np.ndarray) -> "EncodedPairs":
        return EncodedPairs(self.query.rows(idx), self.target.rows(idx), len(idx))


def encode_feature_sets(feature_sets: Sequence[Counter], vocab: Vocabulary) -> EncodedSide:
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i, feats in enumerate(feature_sets):
        for token, count in feats.items():
            j = vocab.get(token)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(float(count))
    counts = sparse.csr_array(
        (np.asarray(vals, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
        shape=(len(feature_sets), len(vocab)),
    )
    totals = np.asarray(counts.sum(axis=1)).ravel()
    return EncodedSide(counts, totals)


def encode_pairs(pairs: Sequence[ExamplePair], vocab: Vocabulary) -> EncodedPairs:
    return EncodedPairs(
        query=encode_feature_sets([p.query_feats for p in pairs], vocab),
        target=encode_feature_sets([p.target_feats for p in pairs], vocab),
        n=len(pairs),
    )


def _pool_scale(totals: np.ndarray, pooling: str) -> np.ndarray:
    if pooling == "sum":
        return np.ones_like(totals)
    scale = np.zeros_like(totals)
    nz = totals > 0
    scale[nz] = 1.0 / totals[nz]
    return scale


def _tower_forward(h: np.ndarray, layers) -> tuple[np.ndarray, list]:
    cache = []
    for w, b in layers:
        z = h @ w + b
        out = np.tanh(z)
        cache.append((h, out))
        h = out
    return h, cache


def _tower_backward(dh: np.ndarray, cache: list, layers):
    grads = []
    for (w, _b), (h_in, h_out) in zip(reversed(layers), reversed(cache)):
        dz = dh * (1.0 - h_out * h_out)
        grads.append((h_in.T @ dz, dz.sum(axis=0)))
        dh = dz @ w.T
    grads.reverse()
    return dh, grads


@dataclass
class Gradients:
    """Sparse embedding gradients (touched rows only) plus dense tower grads."""

    emb_ids: np.ndarray
    emb_grads: np.ndarray
    query_tower: list[tuple[np.ndarray, np.ndarray]]
    target_tower: list[tuple[np.ndarray, np.ndarray]]


def _embed_side(side: EncodedSide, model: EmbeddingModel, tower) -> tuple[np.ndarray, np.ndarray, list]:
    scale = _pool_scale(side.totals, model.config.pooling)
    bag = (side.counts @ model.table) * scale[:, None]
    out, cache = _tower_forward(bag, tower)
    return out, scale, cache


def _forward_backward(
    enc: EncodedPairs, model: EmbeddingModel, want_grads: bool = True
) -> tuple[float, Gradients | None]:
    b = enc.n
    q, q_scale, q_cache = _embed_side(enc.query, model, model.query_tower)
    c, c_scale, c_cache = _embed_side(enc.target, model, model.target_tower)

    logits = q @ c.T
    m = logits.max(axis=1, keepdims=True)
    expl = np.exp(logits - m)
    z = expl.sum(axis=1, keepdims=True)
    # per-row loss: -(logit_ii - m_i - log z_i)
    diag = np.diagonal(logits)
    loss = float(np.mean(-(diag - m.ravel() - np.log(z.ravel()))))
    if not want_grads:
        return loss, None

    probs = expl / z
    g = (probs - np.eye(b)) / b
    dq = g @ c
    dc = g.T @ q
    dbag_q, q_grads = _tower_backward(dq, q_cache, model.query_tower)
    dbag_t, c_grads = _tower_backward(dc, c_cache, model.target_tower)
    dbag_q = dbag_q * q_scale[:, None]
    dbag_t = dbag_t * c_scale[:, None]

    cols = np.union1d(enc.query.counts.indices, enc.target.counts.indices).astype(np.int64)
    if cols.size:
        emb = enc.query.counts[:, cols].T @ dbag_q
        emb += enc.target.counts[:, cols].T @ dbag_t
    else:
        emb = np.zeros((0, model.config.dim))
    return loss, Gradients(cols, np.asarray(emb), q_grads, c_grads)


def embed_bag(feats: Counter, model: EmbeddingModel, tower: str = "query") -> np.ndarray:
    """Reference single-bag embedding path (the batched path must agree).

    Out-of-vocabulary features are skipped; a bag whose features are all
    out-of-vocabulary pools to the zero vector.
    """
    if model.vocab is None:
        raise ValueError("model has no attached vocabulary")
    if tower not in ("query", "target"):
        raise ValueError(f"tower must be 'query' or 'target', got {tower!r}")
    vec = np.zeros(model.config.dim, dtype=np.float64)
    total = 0.0
    for token, count in feats.items():
        j = model.vocab.get(token)
        if j is not None:
            vec += count * model.table[j]
            total += count
    if model.config.pooling == "mean" and total > 0:
        vec /= total
    layers = model.query_tower if tower == "query" else model.target_tower
    out, _ = _tower_forward(vec[None, :], layers)
    return out[0]


def embed_all(
    feature_sets: Sequence[Counter], model: EmbeddingModel, tower: str = "query"
) -> np.ndarray:
    """Batched bag embeddings for a list of feature multisets."""
    if model.vocab is None:
        raise ValueError("model has no attached vocabulary")
    side = encode_feature_sets(feature_sets, model.vocab)
    layers = model.query_tower if tower == "query" else model.target_tower
    out, _, _ = _embed_side(side, model, layers)
    return out


def score(q: np.ndarray, c: np.ndarray) -> float:
    q = np.asarray(q)
    c = np.asarray(c)
    if q.shape != c.shape:
        raise ValueError(f"dimension mismatch: {q.shape} vs {c.shape}")
    return float(q @ c)


def batch_loss(
    batch: Sequence[ExamplePair], model: EmbeddingModel
) -> tuple[float, Gradients]:
    """In-batch softmax cross-entropy and exact gradients for one batch."""
    if len(batch) < 2:
        raise ValueError(f"batch must have at least 2 pairs, got {len(batch)}")
    if model.vocab is None:
        raise ValueError("model has no attached vocabulary")
    enc = encode_pairs(batch, model.vocab)
    loss, grads = _forward_backward(enc, model, want_grads=True)
    assert grads is not None
    return loss, grads


class _Optimizer:
    def __init__(self, model: EmbeddingModel, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        if cfg.optimizer == "adagrad":
            self.emb_acc = np.zeros_like(model.table, dtype=np.float64)
            self.tower_acc = [
                [(np.zeros_like(w, dtype=np.float64), np.zeros_like(b, dtype=np.float64)) for w, b in layers]
                for layers in (model.query_tower, model.target_tower)
            ]

    def step(self, grads: Gradients) -> None:
        lr = self.cfg.learning_rate
        model = self.model
        if self.cfg.optimizer == "sgd":
            if grads.emb_ids.size:
                rows = grads.emb_ids
                model.table[rows] = (model.table[rows] - lr * grads.emb_grads).astype(
                    model.table.dtype
                )
            for layers, layer_grads in (
                (model.query_tower, grads.query_tower),
                (model.target_tower, grads.target_tower),
            ):
                for (w, b), (dw, db) in zip(layers, layer_grads):
                    w -= (lr * dw).astype(w.dtype)
                    b -= (lr * db).astype(b.dtype)
            return

        if grads.emb_ids.size:
            rows = grads.emb_ids
            acc = self.emb_acc[rows] + grads.emb_grads**2
            self.emb_acc[rows] = acc
            step = lr * grads.emb_grads / np.sqrt(acc + ADAGRAD_EPS)
            model.table[rows] = (model.table[rows] - step).astype(model.table.dtype)
        for tower_idx, (layers, layer_grads) in enumerate(
            ((model.query_tower, grads.query_tower), (model.target_tower, grads.target_tower))
        ):
            for layer_idx, ((w, b), (dw, db)) in enumerate(zip(layers, layer_grads)):
                acc_w, acc_b = self.tower_acc[tower_idx][layer_idx]
                acc_w += dw**2
                acc_b += db**2
                w -= (lr * dw / np.sqrt(acc_w + ADAGRAD_EPS)).astype(w.dtype)
                b -= (lr * db / np.sqrt(acc_b + ADAGRAD_EPS)).astype(b.dtype)


def train(
    train_pairs: Iterable[ExamplePair],
    model_config: ModelConfig,
    train_config: TrainConfig,
    vocab: Vocabulary,
) -> EmbeddingModel:
    """Train a fresh model over the given stream.

    The stream is materialized once; each epoch walks it in a seeded shuffled
    order. Tail batches with fewer than 2 pairs are skipped. With
    deterministic=True updates are strictly sequential and two runs with the
    same seed produce byte-identical parameters; with deterministic=False the
    implementation currently runs the same sequential loop, it just stops
    promising bitwise reproducibility.
    """
    pairs = list(train_pairs)
    if not pairs:
        raise TrainError("training stream is empty")
    enc = encode_pairs(pairs, vocab)
    model = init_model(model_config, vocab, train_config.seed)
    opt = _Optimizer(model, train_config)
    n = enc.n
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        order_rng = np.random.default_rng(
            np.random.SeedSequence((train_config.seed, epoch))
        )
        order = order_rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            if len(idx) < 2:
                continue
            loss, grads = _forward_backward(enc.rows(idx), model, want_grads=True)
            if not np.isfinite(loss):
                raise TrainError(
                    f"non-finite loss at epoch {epoch}, batch {start // bs}"
                )
            assert grads is not None
            opt.step(grads)
            epoch_loss += loss
            batches += 1
        mean_loss = epoch_loss / max(batches, 1)
        model.train_log.append(mean_loss)
        logger.info("epoch %d: mean batch loss %.6f (%d batches)", epoch, mean_loss, batches)
    return model


# ---------------------------------------------------------------------------
# Checkpoint format: magic "MDRL", u16 version, u32 header length, UTF-8 JSON
# header, row-major little-endian float32 embedding table, then tower
# parameters (query tower then target tower, W then b per layer).


def _header_dict(model: EmbeddingModel) -> dict:
    return {
        "config": {
            "dim": model.config.dim,
            "tower_layers": model.config.tower_layers,
            "pooling": model.config.pooling,
        },
        "vocab_hash": model.vocab_hash,
        "rows": int(model.table.shape[0]),
        "dim": int(model.table.shape[1]),
        "train_log": [float(x) for x in model.train_log],
    }


def save_checkpoint(model: EmbeddingModel, path: str | Path) -> None:
    header = json.dumps(_header_dict(model), sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<H", CHECKPOINT_VERSION)
    buf += struct.pack("<I", len(header))
    buf += header
    buf += np.ascontiguousarray(model.table, dtype="<f4").tobytes()
    for layers in (model.query_tower, model.target_tower):
        for w, b in layers:
            buf += np.ascontiguousarray(w, dtype="<f4").tobytes()
            buf += np.ascontiguousarray(b, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: str | Path, vocab: Vocabulary | None = None) -> EmbeddingModel:
    raw = Path(path).read_bytes()
    if len(raw) < 10:
        raise CheckpointError(f"{path}: file too short")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (header_len,) = struct.unpack_from("<I", raw, 6)
    body_start = 10 + header_len
    if len(raw) < body_start:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[10:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header: {e}") from e
    try:
        config = ModelConfig(**header["config"])
        rows, dim = int(header["rows"]), int(header["dim"])
        vocab_hash = header["vocab_hash"]
        train_log = [float(x) for x in header.get("train_log", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: bad header fields: {e}") from e
    if dim != config.dim:
        raise CheckpointError(f"{path}: header dim {dim} != config dim {config.dim}")

    n_tower_params = 2 * config.tower_layers * (config.dim * config.dim + config.dim)
    expected = body_start + 4 * (rows * dim + n_tower_params)
    if len(raw) != expected:
        raise CheckpointError(
            f"{path}: expected {expected} bytes, found {len(raw)} (truncated or padded)"
        )

    offset = body_start

    def take(shape) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).copy()
        offset += 4 * count
        return arr.reshape(shape)

    table = take((rows, dim))
    towers = []
    for _ in range(2):
        layers = []
        for _ in range(config.tower_layers):
            layers.append((take((dim, dim)), take((dim,))))
        towers.append(layers)

    if vocab is not None:
        if vocab.digest() != vocab_hash:
            raise CheckpointError(
                f"{path}: vocabulary digest mismatch (checkpoint {vocab_hash[:12]}..., "
                f"supplied {vocab.digest()[:12]}...)"
            )
        if len(vocab) != rows:
            raise CheckpointError(
                f"{path}: vocabulary size {len(vocab)} != embedding rows {rows}"
            )
    return EmbeddingModel(
        table=table,
        query_tower=towers[0],
        target_tower=towers[1],
        config=config,
        vocab_hash=vocab_hash,
        vocab=vocab,
        train_log=train_log,
    )


def models_equal(a: EmbeddingModel, b: EmbeddingModel) -> bool:
    """Bitwise parameter equality (used by round-trip and determinism checks)."""
    if a.table.tobytes() != b.table.tobytes():
        return False
    for la, lb in ((a.query_tower, b.query_tower), (a.target_tower, b.target_tower)):
        if len(la) != len(lb):
            return False
        for (wa, ba), (wb, bb) in zip(la, lb):
            if wa.tobytes() != wb.tobytes() or ba.tobytes() != bb.tobytes():
                return False
    return a.config == b.config and a.vocab_hash == b.vocab_hash
