"""Shared oracles for the test suite.

Everything here is an independent re-derivation: finite differences for
gradients, an explicit sort for ranking, and a stripped-down next-item
training loop that mirrors the trainer's stream discipline without any of
the contrastive machinery.
"""

from __future__ import annotations

import numpy as np

from intentrec.autograd import Tensor
from intentrec.data import SplitDataset, padded_matrix
from intentrec.encoder import (
    AdamState,
    EncoderConfig,
    EncoderParams,
    adam_step,
    encode_batch,
    init_params,
)
from intentrec.losses import next_item_batch_loss, sample_negatives
from intentrec.seeding import (
    STREAM_DROPOUT,
    STREAM_NEGATIVES,
    STREAM_SHUFFLE,
    derive_rng,
)
from intentrec.trainer import TrainConfig, _collect_grads


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """Worst relative error with a denominator floor so near-zero entries
    do not blow up the ratio."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def finite_diff_grads(
    params: EncoderParams,
    loss_fn,
    h: float = 1e-4,
    names: list[str] | None = None,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of ``loss_fn()`` w.r.t. every entry of the
    named parameter tensors.  ``loss_fn`` must read ``params`` by closure and
    return a Tensor."""
    out: dict[str, np.ndarray] = {}
    for name in names if names is not None else params.names():
        data = params.tensors[name].data
        grad = np.zeros_like(data)
        flat = data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            down = float(loss_fn().data)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        out[name] = grad
    return out


def fd_tensor_grad(make_loss, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Finite-difference gradient of ``make_loss(x_array) -> float`` at x."""
    x = np.asarray(x, dtype=np.float64).copy()
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = make_loss(x)
        flat[i] = orig - h
        down = make_loss(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def brute_rank(scores: np.ndarray, target: int, exclude=frozenset()) -> int:
    """Sort-based ranking oracle with the conservative tie rule: every kept
    item whose score ties the target counts ahead of it."""
    scores = np.asarray(scores, dtype=np.float64)
    kept = [
        (scores[item - 1], item)
        for item in range(1, scores.size + 1)
        if item == target or item not in exclude
    ]
    kept.sort(key=lambda pair: -pair[0])
    s_t = scores[target - 1]
    rank = 0
    for s, _item in kept:
        if s >= s_t:
            rank += 1
    return rank


class ReferenceNextItemTrainer:
    """Plain next-item trainer: shuffle, sample one negative per step, one
    Adam update per batch.  Stream derivations match the real trainer so the
    two must agree bitwise when the contrastive weights are zero."""

    def __init__(self, split: SplitDataset, encoder_cfg: EncoderConfig, train_cfg: TrainConfig):
        self.split = split
        self.encoder_cfg = encoder_cfg
        self.cfg = train_cfg
        self.params = init_params(encoder_cfg, rng_seed=train_cfg.seed)
        self.adam = AdamState.init(self.params)
        self.matrix = padded_matrix(split.train_seqs, encoder_cfg.max_seq_len, split.pad_id)
        self.histories = [split.history(u) for u in range(split.n_users)]
        self.step = 0
        self.epoch_snapshots: list[dict[str, np.ndarray]] = []
        self.batch_snapshots: list[dict[str, np.ndarray]] = []
        self.epoch_losses: list[float] = []

    def _negatives(self, originals: np.ndarray, batch_users: np.ndarray, epoch: int) -> np.ndarray:
        B, T = originals.shape
        negs = np.zeros((B, T - 1), dtype=np.int64)
        for row, u in enumerate(batch_users):
            n_real = int((originals[row] != 0).sum())
            n_targets = n_real - 1
            if n_targets <= 0:
                continue
            rng = derive_rng(self.cfg.seed, STREAM_NEGATIVES, epoch, int(u))
            negs[row, T - 1 - n_targets:] = sample_negatives(
                self.histories[u], self.split.vocab_size, n_targets, rng
            )
        return negs

    def run(self, n_epochs: int) -> None:
        n = self.split.n_users
        for epoch in range(1, n_epochs + 1):
            perm = derive_rng(self.cfg.seed, STREAM_SHUFFLE, epoch).permutation(n)
            loss_sum = 0.0
            for batch_idx in range(0, n, self.cfg.batch_size):
                batch_users = perm[batch_idx: batch_idx + self.cfg.batch_size]
                originals = self.matrix[batch_users]
                negs = self._negatives(originals, batch_users, epoch)
                rng_drop = derive_rng(self.cfg.seed, STREAM_DROPOUT, epoch, batch_idx)
                H = encode_batch(self.params, originals, train=True, rng=rng_drop)
                loss = next_item_batch_loss(
                    H, originals, negs, self.params["item_emb"], self.split.pad_id
                )
                self.params.zero_grad()
                loss.backward()
                self.step += 1
                adam_step(
                    self.params,
                    _collect_grads(self.params),
                    self.adam,
                    lr=self.cfg.lr,
                    beta1=self.cfg.adam_beta1,
                    beta2=self.cfg.adam_beta2,
                    eps=self.cfg.adam_eps,
                    t=self.step,
                )
                self.batch_snapshots.append(self.params.snapshot())
                loss_sum += float(loss.data) * len(batch_users)
            self.epoch_snapshots.append(self.params.snapshot())
            self.epoch_losses.append(loss_sum / n)


def scalar_loss(t: Tensor) -> float:
    return float(t.data)


def params_equal(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> bool:
    if set(a) != set(b):
        return False
    return all(np.array_equal(a[k], b[k]) for k in a)
