"""Bidirectional-GRU attention regressor.

Each sentence (source and MT) has its own embedding table and its own
bidirectional GRU.  Per position the forward and backward states are
concatenated, additive attention pools them into one sentence vector, and a
sigmoid unit on ``[source_vec; mt_vec]`` produces the quality score.

Recurrent weights for the four encoders are stored stacked along a leading
axis in the order ``ENCODERS`` so the training graph runs all four in one
batched matmul per time step.  Attention weights are stacked per side
(source, mt).

GRU update used throughout::

    z  = sigmoid(x Wz + bz + h Uz)
    r  = sigmoid(x Wr + br + h Ur)
    n  = tanh(x Wn + bn + r * (h Un))
    h' = (1 - z) * n + z * h
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import numerics as nx
from .corpus import PAD, UNK, Vocabulary, encode_batch
from .exceptions import ConfigError, ContractError, FormatError, IndexRangeError
from .numerics.tape import sigmoid_array

ENCODERS = ("source_forward", "source_backward", "mt_forward", "mt_backward")
SIDES = ("source", "mt")
GATES = ("z", "r", "n")
PAPER_PARAM_COUNT = 18_000_000  # reported size of the full-vocabulary student

MAGIC = b"BQE1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizes.

    Defaults are 300-d embeddings, 50 hidden units per direction, and a 70
    token cap per sentence; ``attention_dim`` defaults to ``2 * hidden_dim``.
    """

    vocab_size: int
    mt_vocab_size: int | None = None
    embedding_dim: int = 300
    hidden_dim: int = 50
    max_len: int = 70
    attention_dim: int | None = None

    def __post_init__(self):
        if self.mt_vocab_size is None:
            object.__setattr__(self, "mt_vocab_size", self.vocab_size)
        if self.attention_dim is None:
            object.__setattr__(self, "attention_dim", 2 * self.hidden_dim)
        for name, value in asdict(self).items():
            if int(value) != value or value < 1:
                raise ConfigError(f"ModelConfig.{name} must be a positive integer, got {value!r}")

    def shapes(self):
        """Name -> shape of every trainable array."""
        E, H, A = self.embedding_dim, self.hidden_dim, self.attention_dim
        shapes = {
            "source_embeddings": (self.vocab_size, E),
            "mt_embeddings": (self.mt_vocab_size, E),
        }
        for g in GATES:
            shapes[f"gru_W{g}"] = (4, E, H)
            shapes[f"gru_U{g}"] = (4, H, H)
            shapes[f"gru_b{g}"] = (4, 1, H)
        shapes["attention_W"] = (2, 2 * H, A)
        shapes["attention_v"] = (2, A, 1)
        shapes["output_w"] = (4 * H, 1)
        shapes["output_b"] = (1,)
        return shapes

    def param_count(self):
        """Closed-form number of trainable scalars.

        ``(Vs + Vm) E + 12 (E H + H^2 + H) + 2 (2 H A + A) + 4 H + 1``
        """
        E, H, A = self.embedding_dim, self.hidden_dim, self.attention_dim
        return (
            (self.vocab_size + self.mt_vocab_size) * E
            + 12 * (E * H + H * H + H)
            + 2 * (2 * H * A + A)
            + 4 * H
            + 1
        )


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def count(self):
        return int(sum(a.size for a in self.arrays.values()))

    def __getitem__(self, name):
        return self.arrays[name]

    def equals(self, other):
        """Bitwise equality of every array."""
        if self.config != other.config or self.arrays.keys() != other.arrays.keys():
            return False
        return all(
            self.arrays[k].shape == other.arrays[k].shape
            and self.arrays[k].tobytes() == other.arrays[k].tobytes()
            for k in self.arrays
        )

    def encoder(self, which):
        """Per-encoder view ``{"Wz": ..., "Uz": ..., "bz": ...}``."""
        k = ENCODERS.index(which)
        out = {}
        for g in GATES:
            out[f"W{g}"] = self.arrays[f"gru_W{g}"][k]
            out[f"U{g}"] = self.arrays[f"gru_U{g}"][k]
            out[f"b{g}"] = self.arrays[f"gru_b{g}"][k, 0]
        return out


def _glorot(rng, shape):
    fan_in, fan_out = shape[-2], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform matrices, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in config.shapes().items():
        if name.startswith("gru_b") or name == "output_b":
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = _glorot(rng, shape)
    return ModelParams(config, arrays)


# -- single-sentence reference path (plain numpy) ----------------------------


def _check_ids(ids, vocab_size):
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        bad = ids[(ids < 0) | (ids >= vocab_size)][0]
        raise IndexRangeError(f"token id {int(bad)} out of range for vocabulary of size {vocab_size}")
    return ids


def _gru_pass(x, mask, cell, reverse):
    T, H = x.shape[0], cell["Uz"].shape[0]
    out = np.zeros((T, H))
    h = np.zeros(H)
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        z = sigmoid_array(x[t] @ cell["Wz"] + cell["bz"] + h @ cell["Uz"])
        r = sigmoid_array(x[t] @ cell["Wr"] + cell["br"] + h @ cell["Ur"])
        n = np.tanh(x[t] @ cell["Wn"] + cell["bn"] + r * (h @ cell["Un"]))
        h_new = (1.0 - z) * n + z * h
        if reverse:
            # padding sits after the sentence, so the backward pass must start
            # from a zero state at the last real token
            h_new = h_new * mask[t]
        h = h_new
        out[t] = h
    return out


def encode_sentence(ids, mask, side, params: ModelParams):
    """Hidden states ``(len(ids), 2 * hidden_dim)`` for one encoded sentence.

    Row ``t`` is ``[h_forward(t); h_backward(t)]``.  Rows at padding positions
    are computed but carry no meaning; attention masks them out.
    """
    if side not in SIDES:
        raise ContractError(f"side must be one of {SIDES}, got {side!r}")
    emb = params[f"{side}_embeddings"]
    ids = _check_ids(ids, emb.shape[0])
    mask = np.asarray(mask, dtype=np.float64)
    x = emb[ids]
    fwd = _gru_pass(x, mask, params.encoder(f"{side}_forward"), reverse=False)
    bwd = _gru_pass(x, mask, params.encoder(f"{side}_backward"), reverse=True)
    return np.concatenate([fwd, bwd], axis=1)


def attention_pool(H, mask, params: ModelParams, side):
    """Additive attention over unmasked rows of ``H``.

    Returns ``(sentence_vector, weights)`` where weights are zero exactly at
    masked positions and sum to one elsewhere.
    """
    k = SIDES.index(side)
    mask = np.asarray(mask, dtype=np.float64)
    if not (mask > 0).any():
        raise ContractError("attention over a sentence with no tokens (all positions masked)")
    scores = (np.tanh(H @ params["attention_W"][k]) @ params["attention_v"][k])[:, 0]
    weights = nx.apply_primitive("softmax_masked", scores, mask=mask)
    return weights @ H, weights


def predict(source_ids, source_mask, mt_ids, mt_mask, params: ModelParams):
    """Quality in (0, 1) for one pair, via the plain-numpy path."""
    vecs = []
    for side, ids, mask in (("source", source_ids, source_mask), ("mt", mt_ids, mt_mask)):
        H = encode_sentence(ids, mask, side, params)
        vecs.append(attention_pool(H, mask, params, side)[0])
    feat = np.concatenate(vecs)
    logit = feat @ params["output_w"][:, 0] + params["output_b"][0]
    return float(sigmoid_array(logit))


# -- batched taped path --------------------------------------------------------


@dataclass
class Batch:
    """Encoded pairs trimmed to the longest real sentence in the batch."""

    source_ids: np.ndarray
    source_mask: np.ndarray
    mt_ids: np.ndarray
    mt_mask: np.ndarray
    labels: np.ndarray | None = None

    @property
    def size(self):
        return self.source_ids.shape[0]

    @property
    def length(self):
        return self.source_ids.shape[1]


def make_batch(source_ids, source_mask, mt_ids, mt_mask, labels=None):
    source_mask = np.asarray(source_mask, dtype=np.float64)
    mt_mask = np.asarray(mt_mask, dtype=np.float64)
    if source_ids.shape != mt_ids.shape:
        raise ContractError(f"source ids {source_ids.shape} and mt ids {mt_ids.shape} must be padded alike")
    if not (source_mask > 0).any(axis=1).all() or not (mt_mask > 0).any(axis=1).all():
        raise ContractError("every sentence needs at least one token")
    used = np.flatnonzero((source_mask > 0).any(axis=0) | (mt_mask > 0).any(axis=0))
    T = int(used[-1]) + 1
    return Batch(
        source_ids[:, :T],
        source_mask[:, :T],
        mt_ids[:, :T],
        mt_mask[:, :T],
        None if labels is None else np.asarray(labels, dtype=np.float64),
    )


def batch_from_tokens(pairs, source_vocab, mt_vocab, max_len, labels=None):
    src_ids, src_mask = encode_batch([p[0] for p in pairs], source_vocab, max_len)
    mt_ids, mt_mask = encode_batch([p[1] for p in pairs], mt_vocab, max_len)
    return make_batch(src_ids, src_mask, mt_ids, mt_mask, labels)


def forward(tape, nodes, batch: Batch):
    """Record the batched forward pass; returns ``(predictions, attention)``.

    ``predictions`` has shape ``(B,)``; ``attention`` has shape ``(2, B, T)``
    with the source side first.
    """
    B, T = batch.size, batch.length
    H = nodes["gru_Uz"].shape[-1]
    for side, ids in (("source", batch.source_ids), ("mt", batch.mt_ids)):
        _check_ids(ids, nodes[f"{side}_embeddings"].shape[0])

    # time-major rows: row t * B + b holds position t of sentence b; the
    # backward encoders read the same rows in reversed position order
    def rows(ids):
        return np.concatenate([ids.T.reshape(-1), ids[:, ::-1].T.reshape(-1)])

    x = nx.concat(
        [
            nx.gather_rows(nodes["source_embeddings"], rows(batch.source_ids)),
            nx.gather_rows(nodes["mt_embeddings"], rows(batch.mt_ids)),
        ],
        axis=0,
    )
    x = nx.reshape(x, (4, T * B, x.shape[-1]))
    # one fused input projection for the three gates, then split per gate
    w = nx.concat([nodes[f"gru_W{g}"] for g in GATES], axis=2)
    b = nx.concat([nodes[f"gru_b{g}"] for g in GATES], axis=2)
    proj_all = nx.add(nx.matmul(x, w), b)  # (4, T*B, 3H)
    proj_all = nx.transpose(nx.reshape(proj_all, (4, T * B, 3, H)), (2, 0, 1, 3))
    proj = {
        g: nx.reshape(nx.gather_rows(proj_all, slice(k, k + 1), axis=0), (4, T * B, H))
        for k, g in enumerate(GATES)
    }

    # step masks: forward encoders never need one; backward encoders zero the
    # state while they are still walking through trailing padding
    rev_src = batch.source_mask[:, ::-1]
    rev_mt = batch.mt_mask[:, ::-1]
    states = []
    h = None
    for s in range(T):
        step = slice(s * B, (s + 1) * B)
        pz = nx.gather_rows(proj["z"], step, axis=1)
        pn = nx.gather_rows(proj["n"], step, axis=1)
        if h is None:
            z = nx.sigmoid(pz)
            n = nx.tanh(pn)
            h_new = nx.sub(n, nx.mul(z, n))
        else:
            pr = nx.gather_rows(proj["r"], step, axis=1)
            z = nx.sigmoid(nx.add(pz, nx.matmul(h, nodes["gru_Uz"])))
            r = nx.sigmoid(nx.add(pr, nx.matmul(h, nodes["gru_Ur"])))
            n = nx.tanh(nx.add(pn, nx.mul(r, nx.matmul(h, nodes["gru_Un"]))))
            h_new = nx.add(n, nx.mul(z, nx.sub(h, n)))
        if rev_src[:, s].min() == 0 or rev_mt[:, s].min() == 0:
            m = np.ones((4, B, H))
            m[1] = rev_src[:, s, None]
            m[3] = rev_mt[:, s, None]
            h_new = nx.mul(h_new, m)
        h = h_new
        states.append(h)

    all_states = nx.concat(states, axis=1)  # (4, T*B, H), step-major
    forward_states = nx.gather_rows(all_states, np.array([0, 2]), axis=0)
    backward_states = nx.gather_rows(all_states, np.array([1, 3]), axis=0)
    # backward step s visited position T-1-s; realign rows to positions
    realign = np.arange(T * B).reshape(T, B)[::-1].reshape(-1)
    backward_states = nx.gather_rows(backward_states, realign, axis=1)
    hs = nx.concat([forward_states, backward_states], axis=2)  # (2, T*B, 2H)

    scores = nx.matmul(nx.tanh(nx.matmul(hs, nodes["attention_W"])), nodes["attention_v"])
    scores = nx.transpose(nx.reshape(scores, (2, T, B)), (0, 2, 1))
    mask = np.stack([batch.source_mask, batch.mt_mask])
    alpha = nx.softmax_masked(scores, mask)  # (2, B, T)

    h4 = nx.transpose(nx.reshape(hs, (2, T, B, 2 * H)), (0, 2, 1, 3))
    pooled = nx.matmul(nx.reshape(alpha, (2 * B, 1, T)), nx.reshape(h4, (2 * B, T, 2 * H)))
    feat = nx.reshape(nx.transpose(nx.reshape(pooled, (2, B, 2 * H)), (1, 0, 2)), (B, 4 * H))
    logits = nx.add(nx.matmul(feat, nodes["output_w"]), nodes["output_b"])
    return nx.reshape(nx.sigmoid(logits), (B,)), alpha


def predict_fast(params: ModelParams, batch: Batch):
    """Tape-free batched inference; same arithmetic as :func:`forward`."""
    a = params.arrays
    B, T = batch.size, batch.length
    H = a["gru_Uz"].shape[-1]
    for side, ids in (("source", batch.source_ids), ("mt", batch.mt_ids)):
        _check_ids(ids, a[f"{side}_embeddings"].shape[0])
    x = np.stack(
        [
            a["source_embeddings"][batch.source_ids.T],
            a["source_embeddings"][batch.source_ids[:, ::-1].T],
            a["mt_embeddings"][batch.mt_ids.T],
            a["mt_embeddings"][batch.mt_ids[:, ::-1].T],
        ]
    )  # (4, T, B, E)
    proj = {g: np.matmul(x.reshape(4, T * B, -1), a[f"gru_W{g}"]).reshape(4, T, B, H) for g in GATES}
    for g in GATES:
        proj[g] += a[f"gru_b{g}"][:, None]
    rev_src = batch.source_mask[:, ::-1]
    rev_mt = batch.mt_mask[:, ::-1]
    states = np.empty((4, T, B, H))
    h = np.zeros((4, B, H))
    for s in range(T):
        z = sigmoid_array(proj["z"][:, s] + h @ a["gru_Uz"])
        r = sigmoid_array(proj["r"][:, s] + h @ a["gru_Ur"])
        n = np.tanh(proj["n"][:, s] + r * (h @ a["gru_Un"]))
        h = n + z * (h - n)
        h[1] *= rev_src[:, s, None]
        h[3] *= rev_mt[:, s, None]
        states[:, s] = h
    hs = np.concatenate([states[[0, 2]], states[[1, 3], ::-1]], axis=3)  # (2, T, B, 2H)
    hs = hs.transpose(0, 2, 1, 3)  # (2, B, T, 2H)
    scores = (np.tanh(hs @ a["attention_W"][:, None]) @ a["attention_v"][:, None])[..., 0]
    mask = np.stack([batch.source_mask, batch.mt_mask])
    alpha = nx.apply_primitive("softmax_masked", scores, mask=mask)
    pooled = np.matmul(alpha[:, :, None, :], hs)[:, :, 0]  # (2, B, 2H)
    feat = np.concatenate([pooled[0], pooled[1]], axis=1)
    return sigmoid_array(feat @ a["output_w"][:, 0] + a["output_b"][0])


def batch_loss(tape, nodes, batch: Batch):
    if batch.labels is None:
        raise ContractError("batch has no labels")
    pred, _ = forward(tape, nodes, batch)
    return nx.mse(pred, tape.constant(batch.labels)), pred


def predict_batch(params: ModelParams, batch: Batch):
    tape = nx.Tape()
    nodes = {name: tape.constant(a) for name, a in params.arrays.items()}
    pred, _ = forward(tape, nodes, batch)
    return pred.value.copy()


# -- container format -----------------------------------------------------------


def _pack_blob(buf, data: bytes):
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def save_model(params: ModelParams, source_vocab: Vocabulary, mt_vocab: Vocabulary, path):
    """Write the single-file ``BQE1`` container.

    Layout (little-endian): magic, version byte, length-prefixed JSON config,
    length-prefixed source and MT vocabularies (newline-joined), array count,
    then per array its name, rank, dims and float64 data.
    """
    cfg = params.config
    if len(source_vocab) != cfg.vocab_size or len(mt_vocab) != cfg.mt_vocab_size:
        raise ContractError("vocabulary sizes do not match the model config")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<B", FORMAT_VERSION))
    _pack_blob(buf, json.dumps(asdict(cfg), sort_keys=True).encode("utf-8"))
    for vocab in (source_vocab, mt_vocab):
        header = json.dumps({"max_size": vocab.max_size}).encode("utf-8")
        _pack_blob(buf, header)
        _pack_blob(buf, "\n".join(vocab.tokens[2:]).encode("utf-8"))
    names = sorted(params.arrays)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(params.arrays[name], dtype="<f8")
        _pack_blob(buf, name.encode("utf-8"))
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", offset=self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def blob(self, what):
        (n,) = self.unpack("<I", what + " length")
        return self.take(n, what)


def load_model(path):
    """Read a ``BQE1`` container; returns ``(params, source_vocab, mt_vocab)``."""
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, not a BQE1 model file", offset=0)
    (version,) = r.unpack("<B", "version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    try:
        config = ModelConfig(**json.loads(r.blob("config").decode("utf-8")))
        vocabs = []
        for side in SIDES:
            header = json.loads(r.blob(f"{side} vocabulary header").decode("utf-8"))
            text = r.blob(f"{side} vocabulary").decode("utf-8")
            words = text.split("\n") if text else []
            vocabs.append(Vocabulary([PAD, UNK] + words, max_size=header["max_size"]))
    except (ValueError, TypeError, KeyError, ContractError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"corrupt header: {exc}", offset=r.pos) from None
    (count,) = r.unpack("<I", "array count")
    arrays = {}
    for _ in range(count):
        name = r.blob("array name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"rank of {name}")
        shape = r.unpack(f"<{ndim}I", f"shape of {name}")
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(r.take(8 * n, f"data of {name}"), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after last array", offset=r.pos)
    expected = config.shapes()
    if expected.keys() != arrays.keys() or any(expected[k] != arrays[k].shape for k in expected):
        raise FormatError("array names or shapes do not match the config")
    return ModelParams(config, arrays), vocabs[0], vocabs[1]


class Student:
    """Trained parameters bundled with the vocabularies they were fit on."""

    def __init__(self, params: ModelParams, source_vocab: Vocabulary, mt_vocab: Vocabulary):
        if len(source_vocab) != params.config.vocab_size or len(mt_vocab) != params.config.mt_vocab_size:
            raise ContractError("vocabulary sizes do not match the model config")
        self.params = params
        self.source_vocab = source_vocab
        self.mt_vocab = mt_vocab

    @property
    def config(self):
        return self.params.config

    def batches(self, dataset, batch_size=256, with_labels=False):
        max_len = self.config.max_len
        examples = list(dataset)
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            labels = [ex.label for ex in chunk] if with_labels else None
            yield batch_from_tokens(
                [(ex.source_tokens, ex.mt_tokens) for ex in chunk], self.source_vocab, self.mt_vocab, max_len, labels
            )

    def predict(self, dataset, batch_size=256):
        """Predicted quality (normalized scale) for every example, in order."""
        out = [predict_fast(self.params, b) for b in self.batches(dataset, batch_size)]
        return np.concatenate(out) if out else np.zeros(0)

    def same_inputs_as(self, other):
        return (
            self.config == other.config
            and self.source_vocab == other.source_vocab
            and self.mt_vocab == other.mt_vocab
        )

    def save(self, path):
        save_model(self.params, self.source_vocab, self.mt_vocab, path)

    @classmethod
    def load(cls, path):
        return cls(*load_model(path))


# -- diagnostics -------------------------------------------------------------------


def gradcheck_student(seed, tolerance=1e-4, step=1e-3, config=None):
    """Finite-difference check of the full student on a 2-example batch.

    The model is small (every scalar is checked) but complete: both
    embeddings, all four GRU encoders, both attention heads and the output
    unit.  Biases are drawn non-zero so their gradients are exercised.
    """
    config = config or ModelConfig(vocab_size=12, mt_vocab_size=10, embedding_dim=6, hidden_dim=4, max_len=7)
    params = init_params(config, seed)
    rng = np.random.default_rng([seed, 7])
    for name, value in params.arrays.items():
        if name.startswith("gru_b") or name in ("output_b",):
            value += rng.normal(0.0, 0.3, value.shape)
    lengths = [(config.max_len, 3), (2, config.max_len - 1)]
    src = np.zeros((2, config.max_len), dtype=np.int64)
    mt = np.zeros((2, config.max_len), dtype=np.int64)
    for i, (ls, lm) in enumerate(lengths):
        src[i, :ls] = rng.integers(1, config.vocab_size, ls)
        mt[i, :lm] = rng.integers(1, config.mt_vocab_size, lm)
    batch = make_batch(src, (src > 0) * 1.0, mt, (mt > 0) * 1.0, labels=rng.uniform(0.0, 1.0, 2))

    def loss_fn(tape, nodes):
        return batch_loss(tape, nodes, batch)[0]

    return nx.gradient_check(loss_fn, params.arrays, tolerance=tolerance, step=step)


def measure_latency(params: ModelParams, tokens=20, repeats=200, seed=0):
    """Median seconds to score one ``tokens``-long pair (both sides)."""
    import time

    rng = np.random.default_rng(seed)
    cfg = params.config
    n = min(tokens, cfg.max_len)
    src = np.zeros((1, n), dtype=np.int64)
    mt = np.zeros((1, n), dtype=np.int64)
    src[0] = rng.integers(2, cfg.vocab_size, n)
    mt[0] = rng.integers(2, cfg.mt_vocab_size, n)
    batch = make_batch(src, np.ones((1, n)), mt, np.ones((1, n)))
    predict_fast(params, batch)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        predict_fast(params, batch)
        times.append(time.perf_counter() - start)
    return float(np.median(times))
