"""Training objectives: sampled-softmax next-item loss, sequence-level
contrastive loss over augmented view pairs, and the intent-prototype
contrastive loss with false-negative mitigation.

Conventions shared by the batch-level functions: each returns the loss
summed over its per-user (and per-position / per-view) terms; the trainer
divides by the batch size so components are means over users.  Similarity
is a raw dot product for the sequence-level loss and a cosine (both sides
L2-normalised) for the intent loss, optionally divided by a temperature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor, as_tensor
from .seeding import as_rng


class SamplingExhaustedError(RuntimeError):
    """Negative sampling is impossible: the user has seen the whole vocabulary."""


@dataclass(frozen=True)
class LossWeights:
    """Multi-task mixing weights: total = next_item + intent * L_intent
    + seq_contrast * L_seq."""

    intent: float = 0.5
    seq_contrast: float = 0.1

    def __post_init__(self):
        if self.intent < 0 or self.seq_contrast < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class BatchViews:
    """Padded id matrices for one mini-batch: the original sequences and the
    two augmented views of each."""

    originals: np.ndarray
    view1: np.ndarray
    view2: np.ndarray


# -- next-item ----------------------------------------------------------------


def next_item_loss(h, pos_emb, neg_emb) -> Tensor:
    """Binary-style step loss: -log(sigmoid(h.pos)) - log(1 - sigmoid(h.neg)).

    Stable log-sigmoid keeps the terms finite for any finite logits.
    """
    h, pos_emb, neg_emb = as_tensor(h), as_tensor(pos_emb), as_tensor(neg_emb)
    pos_logit = ag.tsum(h * pos_emb)
    neg_logit = ag.tsum(h * neg_emb)
    return -(ag.log_sigmoid(pos_logit) + ag.log_sigmoid(-neg_logit))


def next_item_batch_loss(
    H: Tensor,
    ids: np.ndarray,
    negatives: np.ndarray,
    item_table: Tensor,
    pad_id: int = 0,
) -> Tensor:
    """Next-item loss over a padded batch, summed over positions, averaged
    over the batch.

    The representation at position t-1 scores the item at position t against
    one sampled negative; positions whose target is padding contribute zero.
    `negatives` aligns with ids[:, 1:] and must be 0 wherever the target is 0.
    """
    ids = np.asarray(ids, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64)
    B, T = ids.shape
    if negatives.shape != (B, T - 1):
        raise ValueError(f"negatives must have shape {(B, T - 1)}, got {negatives.shape}")
    targets = ids[:, 1:]
    tmask = (targets != pad_id).astype(np.float64)
    h_prev = H[:, :-1, :]
    pos_e = ag.embedding(item_table, targets)
    neg_e = ag.embedding(item_table, negatives)
    pos_logit = ag.tsum(h_prev * pos_e, axis=-1)
    neg_logit = ag.tsum(h_prev * neg_e, axis=-1)
    elem = -(ag.log_sigmoid(pos_logit) + ag.log_sigmoid(-neg_logit))
    return ag.tsum(elem * tmask) * (1.0 / B)


def sample_negative(history, vocab_size: int, rng_seed: int | np.random.Generator) -> int:
    """One item id drawn uniformly from [1, vocab_size] outside the history."""
    history = set(history)
    if len([i for i in history if 1 <= i <= vocab_size]) >= vocab_size:
        raise SamplingExhaustedError("user history covers the entire vocabulary")
    rng = as_rng(rng_seed)
    while True:
        item = int(rng.integers(1, vocab_size + 1))
        if item not in history:
            return item


def sample_negatives(
    history, vocab_size: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n independent negatives for one user (same rejection rule as above)."""
    history = set(history)
    if len([i for i in history if 1 <= i <= vocab_size]) >= vocab_size:
        raise SamplingExhaustedError("user history covers the entire vocabulary")
    out = np.empty(n, dtype=np.int64)
    for j in range(n):
        while True:
            item = int(rng.integers(1, vocab_size + 1))
            if item not in history:
                out[j] = item
                break
    return out


# -- sequence-level contrastive -----------------------------------------------


def sequence_contrast_loss(z1: Tensor, z2: Tensor, temperature: float = 1.0) -> Tensor:
    """Symmetric InfoNCE over concatenated-position representations.

    For each of the 2N views, the positive is the other view of the same
    sequence and the denominator runs over that positive plus the 2(N-1)
    views of the other sequences (raw dot-product similarity).  Returns the
    sum of all 2N terms.
    """
    z1, z2 = as_tensor(z1), as_tensor(z2)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ValueError("views must be two (N, D) matrices of equal shape")
    N = z1.shape[0]
    if N < 2:
        raise ValueError("sequence contrast needs a batch of at least 2 sequences")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    Z = ag.concat([z1, z2], axis=0)
    S = ag.matmul(Z, ag.swapaxes(Z, 0, 1)) * (1.0 / temperature)
    off_diag = ~np.eye(2 * N, dtype=bool)
    pos = np.zeros((2 * N, 2 * N))
    idx = np.arange(2 * N)
    pos[idx, (idx + N) % (2 * N)] = 1.0
    lse = ag.logsumexp(S, mask=off_diag, axis=-1)
    pos_sim = ag.tsum(S * pos, axis=-1)
    return ag.tsum(lse - pos_sim)


# -- intent contrastive -------------------------------------------------------


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    return x / np.maximum(norms, 1e-12)


def intent_contrast_terms(
    reps: Tensor,
    assignments: np.ndarray,
    centroids: np.ndarray,
    fnm: bool = True,
    temperature: float = 1.0,
) -> Tensor:
    """Per-user InfoNCE terms against their assigned intent prototype.

    Representations and prototypes are L2-normalised inside the loss.  The
    denominator for user u sums over the prototypes of batch users whose
    assignment differs from u's, plus u's own numerator term; with fnm off,
    every batch user's prototype is kept.
    """
    reps = as_tensor(reps)
    if reps.ndim != 2:
        raise ValueError("reps must be (N, d)")
    assignments = np.asarray(assignments, dtype=np.int64)
    N = reps.shape[0]
    if assignments.shape != (N,):
        raise ValueError(f"assignments must have shape ({N},)")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    centroids = np.asarray(centroids, dtype=np.float64)
    if assignments.size and (assignments.min() < 0 or assignments.max() >= centroids.shape[0]):
        raise ValueError(
            f"assignments must index the {centroids.shape[0]} available prototypes"
        )
    protos = _normalize_rows(centroids)[assignments]
    R = ag.l2_normalize(reps)
    S = ag.matmul(R, as_tensor(protos.T)) * (1.0 / temperature)
    if fnm:
        include = assignments[None, :] != assignments[:, None]
        np.fill_diagonal(include, True)
    else:
        include = np.ones((N, N), dtype=bool)
    lse = ag.logsumexp(S, mask=include, axis=-1)
    diag = ag.tsum(S * np.eye(N), axis=-1)
    return lse - diag


def intent_contrast_loss(
    view1_reps: Tensor,
    view2_reps: Tensor,
    assignments: np.ndarray,
    centroids: np.ndarray,
    fnm: bool = True,
    temperature: float = 1.0,
) -> Tensor:
    """Sum of the per-user intent terms over both augmented views."""
    t1 = intent_contrast_terms(view1_reps, assignments, centroids, fnm, temperature)
    t2 = intent_contrast_terms(view2_reps, assignments, centroids, fnm, temperature)
    return ag.tsum(t1) + ag.tsum(t2)


# -- multi-task ---------------------------------------------------------------


def multi_task_loss(next_loss, intent_loss, seq_loss, weights: LossWeights):
    """Weighted sum of the three components (works on floats or Tensors)."""
    return next_loss + weights.intent * intent_loss + weights.seq_contrast * seq_loss
