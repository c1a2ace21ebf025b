"""EM-style multi-task training loop.

Each epoch alternates an expectation step, which re-clusters every training
sequence's pooled representation into k intent prototypes, with a
maximisation step, which runs mini-batch Adam on the weighted sum of the
next-item loss, the intent contrastive loss (against the prototypes fixed
for this epoch) and the sequence-level contrastive loss over augmented view
pairs.  Early stopping tracks validation NDCG; the best parameters and
their intent model are restored at the end.

Every random draw derives from the master seed through tagged streams, so
identical configs replay bit-for-bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import AugmentConfig, sample_view_pair
from .autograd import NumericError, Tensor
from .clustering import IntentModel, estep
from .data import SplitDataset, pad_truncate, padded_matrix
from .encoder import (
    AdamState,
    EncoderConfig,
    EncoderParams,
    adam_step,
    concat_positions,
    encode_batch,
    init_params,
    mean_pool,
)
from .evaluation import EvalResult, evaluate
from .losses import (
    LossWeights,
    intent_contrast_loss,
    multi_task_loss,
    next_item_batch_loss,
    sample_negatives,
    sequence_contrast_loss,
)
from .seeding import (
    STREAM_AUGMENT,
    STREAM_CLUSTER,
    STREAM_DROPOUT,
    STREAM_NEGATIVES,
    STREAM_SHUFFLE,
    derive_rng,
)


@dataclass(frozen=True)
class TrainConfig:
    k: int = 8
    weights: LossWeights = field(default_factory=LossWeights)
    batch_size: int = 256
    lr: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 100
    patience: int = 10
    temperature: float = 1.0
    fnm: bool = True
    kmeans_iters: int = 20
    eval_ks: tuple[int, ...] = (5, 20)
    seed: int = 42

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not self.eval_ks:
            raise ValueError("eval_ks must not be empty")

    @property
    def stop_metric_k(self) -> int:
        return 20 if 20 in self.eval_ks else self.eval_ks[-1]


@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_next: float
    loss_intent: float
    loss_seq: float
    distortion: float
    val_hr: dict[int, float]
    val_ndcg: dict[int, float]
    estep_seconds: float
    mstep_seconds: float
    eval_seconds: float

    _TIMING_KEYS = ("estep_seconds", "mstep_seconds", "eval_seconds")

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d["val_hr"] = {str(k): v for k, v in self.val_hr.items()}
        d["val_ndcg"] = {str(k): v for k, v in self.val_ndcg.items()}
        if not timing:
            for key in self._TIMING_KEYS:
                d.pop(key)
        return d


@dataclass
class OptimizerSnapshot:
    """Adam accumulators at the best epoch, kept for checkpointing/resume."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int


@dataclass
class TrainReport:
    epochs: list[EpochRecord]
    best_epoch: int
    best_valid_ndcg: float
    final_test: EvalResult
    config: dict
    optimizer: OptimizerSnapshot | None = None

    def summary_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_valid_ndcg": self.best_valid_ndcg,
            "final_test": self.final_test.as_dict(),
        }

    def jsonl(self) -> str:
        """Full line-delimited report: config, one line per epoch, summary."""
        lines = [json.dumps({"config": self.config}, sort_keys=True)]
        lines += [json.dumps(r.to_dict(), sort_keys=True) for r in self.epochs]
        lines.append(json.dumps(self.summary_dict(), sort_keys=True))
        return "\n".join(lines) + "\n"

    def canonical_lines(self) -> list[str]:
        """Deterministic view used for reproducibility checks: identical runs
        must agree on every line.  Wall-clock fields are excluded; everything
        else (losses, distortions, metrics, summary) is covered."""
        lines = [json.dumps({"config": self.config}, sort_keys=True)]
        lines += [json.dumps(r.to_dict(timing=False), sort_keys=True) for r in self.epochs]
        lines.append(json.dumps(self.summary_dict(), sort_keys=True))
        return lines


def _copy_intent(model: IntentModel) -> IntentModel:
    return IntentModel(
        centroids=model.centroids.copy(),
        assignments=model.assignments.copy(),
        k=model.k,
        distortion=model.distortion,
        rng_seed=model.rng_seed,
        history=list(model.history),
    )


def _collect_grads(params: EncoderParams) -> dict[str, np.ndarray]:
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.tensors.items()
    }


def _batch_negatives(
    originals: np.ndarray,
    batch_users: np.ndarray,
    histories: list[set[int]],
    vocab_size: int,
    seed: int,
    epoch: int,
) -> np.ndarray:
    B, T = originals.shape
    negs = np.zeros((B, T - 1), dtype=np.int64)
    for row, u in enumerate(batch_users):
        n_real = int((originals[row] != 0).sum())
        n_targets = n_real - 1
        if n_targets <= 0:
            continue
        rng = derive_rng(seed, STREAM_NEGATIVES, epoch, int(u))
        negs[row, T - 1 - n_targets :] = sample_negatives(
            histories[u], vocab_size, n_targets, rng
        )
    return negs


def _batch_views(
    split: SplitDataset,
    batch_users: np.ndarray,
    aug_cfg: AugmentConfig,
    max_seq_len: int,
    seed: int,
    epoch: int,
) -> tuple[np.ndarray, np.ndarray]:
    v1 = np.zeros((len(batch_users), max_seq_len), dtype=np.int64)
    v2 = np.zeros_like(v1)
    for row, u in enumerate(batch_users):
        rng = derive_rng(seed, STREAM_AUGMENT, epoch, int(u))
        a, b = sample_view_pair(split.train_seqs[u], rng, aug_cfg, split.mask_id)
        v1[row] = pad_truncate(a, max_seq_len, split.pad_id).items
        v2[row] = pad_truncate(b, max_seq_len, split.pad_id).items
    return v1, v2


def train(
    split: SplitDataset,
    encoder_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    aug_cfg: AugmentConfig | None = None,
) -> tuple[EncoderParams, IntentModel, TrainReport]:
    """Run the full EM loop and return the best parameters, their intent
    model and the per-epoch report."""
    aug_cfg = aug_cfg or AugmentConfig()
    n = split.n_users
    if train_cfg.k > n:
        raise ValueError(f"k={train_cfg.k} exceeds the {n} training sequences available")
    if encoder_cfg.vocab_size != split.vocab_size + 2:
        raise ValueError(
            f"encoder vocab_size must be n_items + 2 = {split.vocab_size + 2}, "
            f"got {encoder_cfg.vocab_size}"
        )
    seed = train_cfg.seed
    w = train_cfg.weights
    use_views = w.intent > 0 or w.seq_contrast > 0

    params = init_params(encoder_cfg, rng_seed=seed)
    adam = AdamState.init(params)
    train_matrix = padded_matrix(split.train_seqs, encoder_cfg.max_seq_len, split.pad_id)
    histories = [split.history(u) for u in range(n)]

    records: list[EpochRecord] = []
    best_metric = -np.inf
    best_epoch = -1
    best_snapshot: dict[str, np.ndarray] | None = None
    best_intent: IntentModel | None = None
    best_adam: OptimizerSnapshot | None = None
    bad_epochs = 0
    step = 0
    intent_model: IntentModel | None = None

    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        estep_seed = int(derive_rng(seed, STREAM_CLUSTER, epoch).integers(2**31))
        intent_model = estep(
            params,
            train_matrix,
            train_cfg.k,
            rng_seed=estep_seed,
            max_iter=train_cfg.kmeans_iters,
        )
        t1 = time.perf_counter()

        perm = derive_rng(seed, STREAM_SHUFFLE, epoch).permutation(n)
        sums = {"next": 0.0, "intent": 0.0, "seq": 0.0, "total": 0.0}
        for batch_idx in range(0, n, train_cfg.batch_size):
            batch_users = perm[batch_idx : batch_idx + train_cfg.batch_size]
            B = len(batch_users)
            originals = train_matrix[batch_users]
            negs = _batch_negatives(originals, batch_users, histories, split.vocab_size, seed, epoch)

            rng_drop = derive_rng(seed, STREAM_DROPOUT, epoch, batch_idx)
            H = encode_batch(params, originals, train=True, rng=rng_drop)
            l_next = next_item_batch_loss(H, originals, negs, params["item_emb"], split.pad_id)

            l_intent: Tensor | float = 0.0
            l_seq: Tensor | float = 0.0
            if use_views:
                v1, v2 = _batch_views(split, batch_users, aug_cfg, encoder_cfg.max_seq_len, seed, epoch)
                H1 = encode_batch(params, v1, train=True, rng=rng_drop)
                H2 = encode_batch(params, v2, train=True, rng=rng_drop)
                if w.intent > 0:
                    l_intent = intent_contrast_loss(
                        mean_pool(H1, v1, split.pad_id),
                        mean_pool(H2, v2, split.pad_id),
                        intent_model.assignments[batch_users],
                        intent_model.centroids,
                        fnm=train_cfg.fnm,
                        temperature=train_cfg.temperature,
                    ) * (1.0 / B)
                if w.seq_contrast > 0 and B >= 2:
                    l_seq = sequence_contrast_loss(
                        concat_positions(H1), concat_positions(H2), train_cfg.temperature
                    ) * (1.0 / B)

            components = {"next_item": l_next, "intent_contrast": l_intent, "seq_contrast": l_seq}
            for cname, cval in components.items():
                val = float(cval.data) if isinstance(cval, Tensor) else float(cval)
                if not np.isfinite(val):
                    raise NumericError(
                        f"{cname} loss is non-finite ({val}) at epoch {epoch}, "
                        f"batch starting {batch_idx}"
                    )
            total = multi_task_loss(l_next, l_intent, l_seq, w)

            params.zero_grad()
            total.backward()
            step += 1
            adam_step(
                params,
                _collect_grads(params),
                adam,
                lr=train_cfg.lr,
                beta1=train_cfg.adam_beta1,
                beta2=train_cfg.adam_beta2,
                eps=train_cfg.adam_eps,
                t=step,
            )

            sums["next"] += float(l_next.data) * B
            sums["intent"] += (float(l_intent.data) if isinstance(l_intent, Tensor) else 0.0) * B
            sums["seq"] += (float(l_seq.data) if isinstance(l_seq, Tensor) else 0.0) * B
            sums["total"] += float(total.data) * B
        t2 = time.perf_counter()

        val = evaluate(params, split, "valid", ks=train_cfg.eval_ks)
        t3 = time.perf_counter()

        records.append(
            EpochRecord(
                epoch=epoch,
                loss_total=sums["total"] / n,
                loss_next=sums["next"] / n,
                loss_intent=sums["intent"] / n,
                loss_seq=sums["seq"] / n,
                distortion=intent_model.distortion,
                val_hr=dict(val.hr),
                val_ndcg=dict(val.ndcg),
                estep_seconds=t1 - t0,
                mstep_seconds=t2 - t1,
                eval_seconds=t3 - t2,
            )
        )

        metric = val.ndcg[train_cfg.stop_metric_k]
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_snapshot = params.snapshot()
            best_intent = _copy_intent(intent_model)
            best_adam = OptimizerSnapshot(
                m={k_: a.copy() for k_, a in adam.m.items()},
                v={k_: a.copy() for k_, a in adam.v.items()},
                step=step,
            )
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_cfg.patience:
                break

    assert best_snapshot is not None and best_intent is not None
    params.load_snapshot(best_snapshot)
    final_test = evaluate(params, split, "test", ks=train_cfg.eval_ks)
    report = TrainReport(
        epochs=records,
        best_epoch=best_epoch,
        best_valid_ndcg=best_metric,
        final_test=final_test,
        config=_config_echo(encoder_cfg, train_cfg, aug_cfg),
        optimizer=best_adam,
    )
    return params, best_intent, report


def _config_echo(
    encoder_cfg: EncoderConfig, train_cfg: TrainConfig, aug_cfg: AugmentConfig
) -> dict:
    mode = task_mode(train_cfg.weights)
    return {
        "encoder": asdict(encoder_cfg),
        "train": asdict(train_cfg),
        "augment": asdict(aug_cfg),
        "task_mode": mode,
    }


def task_mode(weights: LossWeights) -> str:
    """Human-readable label for which tasks are active."""
    if weights.intent == 0 and weights.seq_contrast == 0:
        return "next-item only"
    if weights.intent == 0:
        return "next-item + sequence contrast"
    if weights.seq_contrast == 0:
        return "next-item + intent contrast"
    return "full multi-task"
