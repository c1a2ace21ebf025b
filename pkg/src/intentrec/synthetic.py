"""Synthetic corpora with planted intent structure.

Items are partitioned into disjoint pools, one per latent intent; each user
is assigned a pool and samples every interaction uniformly from it.  The
pool index per user is the ground-truth intent label used to score cluster
recovery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import as_rng


@dataclass
class SyntheticCorpus:
    user_labels: list[str]
    sequences: list[list[int]]
    intent_labels: list[int]  # pool index per user
    n_intents: int
    pool_size: int


def generate_corpus(
    n_users: int = 400,
    n_intents: int = 4,
    pool_size: int = 25,
    min_len: int = 10,
    max_len: int = 20,
    rng_seed: int | np.random.Generator = 0,
) -> SyntheticCorpus:
    if n_users < n_intents:
        raise ValueError("need at least one user per intent")
    if min_len < 1 or max_len < min_len:
        raise ValueError("need 1 <= min_len <= max_len")
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    rng = as_rng(rng_seed)
    labels, seqs, intents = [], [], []
    for u in range(n_users):
        pool = u % n_intents
        lo = pool * pool_size + 1
        length = int(rng.integers(min_len, max_len + 1))
        seq = (lo + rng.integers(0, pool_size, size=length)).tolist()
        labels.append(f"u{u}")
        seqs.append(seq)
        intents.append(pool)
    return SyntheticCorpus(
        user_labels=labels,
        sequences=seqs,
        intent_labels=intents,
        n_intents=n_intents,
        pool_size=pool_size,
    )


def write_corpus(corpus: SyntheticCorpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label, seq in zip(corpus.user_labels, corpus.sequences):
            fh.write(label + " " + " ".join(str(i) for i in seq) + "\n")


def write_labels(corpus: SyntheticCorpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label, intent in zip(corpus.user_labels, corpus.intent_labels):
            fh.write(f"{label} {intent}\n")
