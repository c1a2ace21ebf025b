"""Causal transformer encoder for item sequences, plus its Adam optimizer.

The architecture is the standard self-attentive sequential recommender:
item embeddings scaled by sqrt(d) plus learned position embeddings, then a
stack of pre-norm attention blocks (causal mask, padding keys masked out)
with pointwise feed-forward layers, and a final layer norm.  Padding
positions are zeroed between blocks and excluded from pooling.

Differentiation runs through the `autograd` engine; everything is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import NumericError, Tensor
from .seeding import STREAM_INIT, as_rng, derive_rng


@dataclass(frozen=True)
class EncoderConfig:
    """Shape and regularisation settings for the encoder.

    vocab_size counts table rows: real items 1..n_items plus the padding
    row 0 and the mask token row n_items + 1.
    """

    vocab_size: int
    max_seq_len: int = 50
    dim: int = 64
    blocks: int = 2
    heads: int = 2
    dropout: float = 0.2
    ffn_mult: int = 4
    init_std: float = 0.02
    ln_eps: float = 1e-8
    pad_id: int = 0

    def __post_init__(self):
        if self.vocab_size < 3:
            raise ValueError("vocab_size must cover pad, mask and at least one item")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")
        if self.dim < 1 or self.dim % self.heads != 0:
            raise ValueError(f"dim ({self.dim}) must be a positive multiple of heads ({self.heads})")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.ffn_mult < 1:
            raise ValueError("ffn_mult must be >= 1")

    @property
    def n_items(self) -> int:
        return self.vocab_size - 2

    @property
    def mask_id(self) -> int:
        return self.vocab_size - 1


class EncoderParams:
    """Named parameter tensors for one encoder instance."""

    def __init__(self, config: EncoderConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_snapshot(self, arrays: dict[str, np.ndarray]):
        for name, t in self.tensors.items():
            if name not in arrays:
                raise KeyError(f"snapshot missing parameter {name!r}")
            if arrays[name].shape != t.data.shape:
                raise ValueError(
                    f"snapshot shape mismatch for {name!r}: "
                    f"{arrays[name].shape} vs {t.data.shape}"
                )
            t.data = arrays[name].astype(np.float64).copy()


def init_params(config: EncoderConfig, rng_seed: int = 0) -> EncoderParams:
    """Draw fresh parameters: N(0, init_std^2) weights, zero biases, unit LN."""
    rng = derive_rng(rng_seed, STREAM_INIT)
    d, f = config.dim, config.dim * config.ffn_mult
    tensors: dict[str, Tensor] = {}

    def normal(name, shape):
        tensors[name] = ag.parameter(rng.normal(0.0, config.init_std, size=shape))

    def zeros(name, shape):
        tensors[name] = ag.parameter(np.zeros(shape))

    def ones(name, shape):
        tensors[name] = ag.parameter(np.ones(shape))

    normal("item_emb", (config.vocab_size, d))
    tensors["item_emb"].data[config.pad_id] = 0.0
    normal("pos_emb", (config.max_seq_len, d))
    for i in range(config.blocks):
        p = f"block{i}."
        ones(p + "attn_ln.gain", (d,))
        zeros(p + "attn_ln.bias", (d,))
        for w in ("wq", "wk", "wv", "wo"):
            normal(p + w, (d, d))
        for b in ("bq", "bk", "bv", "bo"):
            zeros(p + b, (d,))
        ones(p + "ffn_ln.gain", (d,))
        zeros(p + "ffn_ln.bias", (d,))
        normal(p + "w1", (d, f))
        zeros(p + "b1", (f,))
        normal(p + "w2", (f, d))
        zeros(p + "b2", (d,))
    ones("out_ln.gain", (d,))
    zeros("out_ln.bias", (d,))
    return EncoderParams(config, tensors)


def _attention_mask(ids: np.ndarray, pad_id: int) -> np.ndarray:
    """(B, 1, T, T) boolean mask: query t may attend key j iff j <= t and key j is real."""
    B, T = ids.shape
    causal = np.tril(np.ones((T, T), dtype=bool))
    key_real = (ids != pad_id)[:, None, None, :]
    return causal[None, None, :, :] & key_real


def encode_batch(
    params: EncoderParams,
    ids: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Encode padded id rows (B, T) into per-position representations (B, T, d)."""
    cfg = params.config
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] != cfg.max_seq_len:
        raise ValueError(f"ids must have shape (B, {cfg.max_seq_len}), got {ids.shape}")
    if train and cfg.dropout > 0.0 and rng is None:
        raise ValueError("training-mode encode with dropout needs an rng")
    use_dropout = train and cfg.dropout > 0.0

    def drop(x):
        return ag.dropout(x, cfg.dropout, rng) if use_dropout else x

    real = (ids != cfg.pad_id).astype(np.float64)[:, :, None]
    mask = _attention_mask(ids, cfg.pad_id)
    B, T = ids.shape
    d, h = cfg.dim, cfg.heads
    hd = d // h

    x = ag.embedding(params["item_emb"], ids) * math.sqrt(d)
    x = x + params["pos_emb"]
    x = drop(x)
    x = x * real

    for i in range(cfg.blocks):
        p = f"block{i}."
        q = ag.layer_norm(x, params[p + "attn_ln.gain"], params[p + "attn_ln.bias"], cfg.ln_eps)
        Q = ag.matmul(q, params[p + "wq"]) + params[p + "bq"]
        K = ag.matmul(x, params[p + "wk"]) + params[p + "bk"]
        V = ag.matmul(x, params[p + "wv"]) + params[p + "bv"]
        Qh = ag.swapaxes(Q.reshape(B, T, h, hd), 1, 2)
        Kh = ag.swapaxes(K.reshape(B, T, h, hd), 1, 2)
        Vh = ag.swapaxes(V.reshape(B, T, h, hd), 1, 2)
        scores = ag.matmul(Qh, ag.swapaxes(Kh, -1, -2)) * (1.0 / math.sqrt(hd))
        probs = drop(ag.masked_softmax(scores, mask))
        ctx = ag.swapaxes(ag.matmul(probs, Vh), 1, 2).reshape(B, T, d)
        attn = ag.matmul(ctx, params[p + "wo"]) + params[p + "bo"]
        x = (q + attn) * real

        y = ag.layer_norm(x, params[p + "ffn_ln.gain"], params[p + "ffn_ln.bias"], cfg.ln_eps)
        hmid = drop(ag.relu(ag.matmul(y, params[p + "w1"]) + params[p + "b1"]))
        hout = drop(ag.matmul(hmid, params[p + "w2"]) + params[p + "b2"])
        x = (y + hout) * real

    return ag.layer_norm(x, params["out_ln.gain"], params["out_ln.bias"], cfg.ln_eps)


def mean_pool(H: Tensor, ids: np.ndarray, pad_id: int = 0) -> Tensor:
    """Mean of per-position vectors over non-pad positions, per row."""
    real = (np.asarray(ids) != pad_id).astype(np.float64)
    counts = real.sum(axis=1)
    if (counts == 0).any():
        raise ValueError("degenerate input: a sequence consists entirely of padding")
    pooled = ag.tsum(H * real[:, :, None], axis=1)
    return pooled * (1.0 / counts)[:, None]


def concat_positions(H: Tensor) -> Tensor:
    """Position-major concatenation of per-position vectors: (B, T, d) -> (B, T*d)."""
    B, T, d = H.shape
    return H.reshape(B, T * d)


@dataclass
class SequenceRepresentation:
    """Encoder output for one sequence: (T, d) rows plus its real length."""

    per_position: np.ndarray
    real_len: int

    @property
    def pooled(self) -> np.ndarray:
        if self.real_len == 0:
            raise ValueError("degenerate input: all positions are padding")
        return self.per_position[self.per_position.shape[0] - self.real_len :].mean(axis=0)

    @property
    def concat(self) -> np.ndarray:
        return self.per_position.reshape(-1)

    @property
    def last(self) -> np.ndarray:
        return self.per_position[-1]


def forward(
    params: EncoderParams,
    items: np.ndarray,
    mode: str = "eval",
    rng_seed: int = 0,
) -> SequenceRepresentation:
    """Encode a single padded sequence (length max_seq_len)."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    ids = np.asarray(items, dtype=np.int64).reshape(1, -1)
    if mode == "train":
        H = encode_batch(params, ids, train=True, rng=as_rng(rng_seed))
    else:
        with ag.no_grad():
            H = encode_batch(params, ids, train=False)
    real_len = int((ids[0] != params.config.pad_id).sum())
    return SequenceRepresentation(per_position=H.data[0].copy(), real_len=real_len)


def aggregate(rep: SequenceRepresentation, scheme: str) -> np.ndarray:
    """Reduce a representation to one vector: 'pooled' (mean) or 'concat'."""
    if scheme == "pooled":
        return rep.pooled
    if scheme == "concat":
        return rep.concat
    raise ValueError(f"unknown aggregation scheme {scheme!r}")


def encode_summaries(
    params: EncoderParams, ids: np.ndarray, chunk: int = 512
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode (last, pooled) vectors for many rows at once, chunked for memory."""
    ids = np.asarray(ids, dtype=np.int64)
    lasts, pooled = [], []
    with ag.no_grad():
        for lo in range(0, ids.shape[0], chunk):
            part = ids[lo : lo + chunk]
            H = encode_batch(params, part, train=False)
            lasts.append(H.data[:, -1, :].copy())
            pooled.append(mean_pool(H, part, params.config.pad_id).data.copy())
    return np.concatenate(lasts, axis=0), np.concatenate(pooled, axis=0)


# -- gradients and Adam -------------------------------------------------------


def gradients(params: EncoderParams, loss_fn) -> dict[str, np.ndarray]:
    """Analytic gradient of a scalar loss_fn(params) for every parameter.

    Parameters that the loss does not touch get zero gradients.  A non-finite
    loss raises NumericError rather than propagating NaNs into the optimizer.
    """
    params.zero_grad()
    loss = loss_fn(params)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("loss_fn must return a scalar Tensor")
    if not np.isfinite(loss.data):
        raise NumericError(f"loss is non-finite: {float(loss.data)}")
    loss.backward()
    return {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.tensors.items()
    }


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter dict."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, params: EncoderParams) -> "AdamState":
        return cls(
            m={n: np.zeros_like(t.data) for n, t in params.tensors.items()},
            v={n: np.zeros_like(t.data) for n, t in params.tensors.items()},
        )


def adam_step(
    params: EncoderParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int = 1,
) -> tuple[EncoderParams, AdamState]:
    """One bias-corrected Adam update, in place; t is the 1-based step count."""
    if t < 1:
        raise ValueError("adam step count t must be >= 1")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.tensors.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if not np.isfinite(p.data).all():
            raise NumericError(f"non-finite values in parameter {name!r} after Adam update")
    return params, state
