"""Full-ranking evaluation over the whole item vocabulary.

Each user's phase target is ranked by the dot product between the last
position's representation and every item embedding.  Seen items can be
excluded from the candidate set; ties count against the target.  On top of
the plain metrics there is a robustness report: a noise-ratio sweep over
perturbed test inputs and per-group metrics for users bucketed by sequence
length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import SplitDataset, group_split_by_length, inject_test_noise, padded_matrix
from .encoder import EncoderParams, encode_summaries


@dataclass
class EvalResult:
    hr: dict[int, float]
    ndcg: dict[int, float]
    n_users: int

    def as_dict(self) -> dict[str, float]:
        out: dict[str, float] = {"n_users": self.n_users}
        for k in sorted(self.hr):
            out[f"hr@{k}"] = self.hr[k]
        for k in sorted(self.ndcg):
            out[f"ndcg@{k}"] = self.ndcg[k]
        return out


def rank_target(scores: np.ndarray, target: int, exclude=frozenset()) -> int:
    """1-based rank of `target` among non-excluded items.

    scores[i] is the score of item i+1 (real items only).  Ties are counted
    against the target: rank = 1 + |{i != target, not excluded, s_i >= s_t}|.
    """
    scores = np.asarray(scores, dtype=np.float64)
    vocab = scores.shape[0]
    if not 1 <= target <= vocab:
        raise ValueError(f"target {target} outside vocabulary [1, {vocab}]")
    exclude = set(exclude)
    if target in exclude:
        raise ValueError(f"target {target} is in the exclusion set")
    keep = np.ones(vocab, dtype=bool)
    if exclude:
        idx = np.fromiter((i - 1 for i in exclude), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= vocab):
            raise ValueError("exclusion set contains ids outside the vocabulary")
        keep[idx] = False
    s_t = scores[target - 1]
    return int((scores[keep] >= s_t).sum())


def hr_at_k(rank: int, k: int) -> float:
    return 1.0 if rank <= k else 0.0


def ndcg_at_k(rank: int, k: int) -> float:
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


def evaluate(
    params: EncoderParams,
    split: SplitDataset,
    phase: str = "test",
    ks: tuple[int, ...] = (5, 20),
    exclude_seen: bool = True,
    chunk: int = 512,
) -> EvalResult:
    """HR@k and NDCG@k for the phase target of every user in the split."""
    if phase not in ("valid", "test"):
        raise ValueError(f"phase must be 'valid' or 'test', got {phase!r}")
    cfg = params.config
    n = split.n_users
    prefixes = [split.eval_prefix(u, phase) for u in range(n)]
    ids = padded_matrix(prefixes, cfg.max_seq_len, cfg.pad_id)
    last, _ = encode_summaries(params, ids, chunk=chunk)
    item_table = params["item_emb"].data
    vocab = split.vocab_size

    hr_sum = {k: 0.0 for k in ks}
    ndcg_sum = {k: 0.0 for k in ks}
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        scores = last[lo:hi] @ item_table[1 : vocab + 1].T
        for u in range(lo, hi):
            target = split.eval_target(u, phase)
            row = scores[u - lo]
            if exclude_seen:
                excl = split.seen_items(u, phase) - {target}
            else:
                excl = set()
            rank = rank_target(row, target, excl)
            for k in ks:
                hr_sum[k] += hr_at_k(rank, k)
                ndcg_sum[k] += ndcg_at_k(rank, k)
    return EvalResult(
        hr={k: hr_sum[k] / n for k in ks},
        ndcg={k: ndcg_sum[k] / n for k in ks},
        n_users=n,
    )


# -- robustness ----------------------------------------------------------------


@dataclass
class NoiseRow:
    ratio: float
    ndcg5: float
    drop_rate: float


@dataclass
class GroupRow:
    index: int
    n_users: int
    min_len: int
    max_len: int
    result: EvalResult


@dataclass
class RobustnessReport:
    baseline: EvalResult
    noise_rows: list[NoiseRow] = field(default_factory=list)
    group_rows: list[GroupRow] = field(default_factory=list)
    rng_seed: int = 0

    def render_text(self) -> str:
        lines = ["noise sweep (test-phase NDCG@5)"]
        lines.append(f"{'ratio':>8}  {'NDCG@5':>10}  {'drop':>10}")
        for row in self.noise_rows:
            lines.append(f"{row.ratio:>8.2f}  {row.ndcg5:>10.6f}  {row.drop_rate:>10.6f}")
        if self.group_rows:
            lines.append("")
            lines.append("length groups (test phase, shortest first)")
            lines.append(
                f"{'group':>5}  {'users':>6}  {'len_min':>7}  {'len_max':>7}  "
                f"{'HR@5':>9}  {'NDCG@5':>9}  {'HR@20':>9}  {'NDCG@20':>9}"
            )
            for g in self.group_rows:
                r = g.result
                lines.append(
                    f"{g.index:>5}  {g.n_users:>6}  {g.min_len:>7}  {g.max_len:>7}  "
                    f"{r.hr.get(5, float('nan')):>9.6f}  {r.ndcg.get(5, float('nan')):>9.6f}  "
                    f"{r.hr.get(20, float('nan')):>9.6f}  {r.ndcg.get(20, float('nan')):>9.6f}"
                )
        return "\n".join(lines) + "\n"


def robustness_report(
    params: EncoderParams,
    split: SplitDataset,
    noise_ratios=(0.0, 0.05, 0.1, 0.15, 0.2),
    n_groups: int = 3,
    rng_seed: int = 0,
    ks: tuple[int, ...] = (5, 20),
    exclude_seen: bool = True,
) -> RobustnessReport:
    """Noise sweep plus length-group breakdown on the test phase.

    Drop rates are relative to the clean (ratio 0) NDCG@5; the ratio-0 row
    therefore always reports a drop of exactly 0.
    """
    baseline = evaluate(params, split, "test", ks=ks, exclude_seen=exclude_seen)
    base5 = baseline.ndcg[5]
    noise_rows = []
    for ratio in noise_ratios:
        if ratio == 0.0:
            res = baseline
        else:
            noised = inject_test_noise(split, ratio, rng_seed)
            res = evaluate(params, noised, "test", ks=ks, exclude_seen=exclude_seen)
        drop = 0.0 if ratio == 0.0 else ((base5 - res.ndcg[5]) / base5 if base5 > 0 else 0.0)
        noise_rows.append(NoiseRow(ratio=float(ratio), ndcg5=res.ndcg[5], drop_rate=drop))

    group_rows = []
    if n_groups >= 1 and n_groups <= split.n_users:
        for gi, group in enumerate(group_split_by_length(split, n_groups), start=1):
            lens = [len(group.full_sequence(u)) for u in range(group.n_users)]
            group_rows.append(
                GroupRow(
                    index=gi,
                    n_users=group.n_users,
                    min_len=min(lens),
                    max_len=max(lens),
                    result=evaluate(params, group, "test", ks=ks, exclude_seen=exclude_seen),
                )
            )
    return RobustnessReport(
        baseline=baseline, noise_rows=noise_rows, group_rows=group_rows, rng_seed=rng_seed
    )
