"""Interaction corpora: loading, 5-core filtering, splits, padding, noise.

The on-disk format is one user per line: a user token followed by the
whitespace-separated item ids of their interactions in chronological order.
Item ids are re-indexed densely to 1..n_items at load time; 0 is reserved
for padding and n_items + 1 for the augmentation mask token.
"""

from __future__ import annotations

import copy
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .seeding import STREAM_NOISE, derive_rng


class DatasetError(Exception):
    """The input data cannot be used (missing, empty, or exhausted)."""


class ParseError(DatasetError):
    """A corpus line is malformed; the message names the line number."""


@dataclass
class InteractionDataset:
    """Chronological item sequences for a set of users, densely indexed."""

    user_labels: list[str]
    sequences: list[list[int]]
    vocab_size: int  # number of distinct real items

    pad_id: int = 0

    @property
    def mask_id(self) -> int:
        return self.vocab_size + 1

    @property
    def n_users(self) -> int:
        return len(self.sequences)

    @property
    def n_actions(self) -> int:
        return sum(len(s) for s in self.sequences)

    def summary(self) -> dict[str, float]:
        n = self.n_actions
        return {
            "users": self.n_users,
            "items": self.vocab_size,
            "actions": n,
            "avg_length": n / self.n_users if self.n_users else 0.0,
        }


@dataclass
class SplitDataset:
    """Leave-one-out split: last item is the test target, second-last the
    validation target, everything before is training material.

    test_prefixes, when present, override the model input used for
    test-phase evaluation (noise injection writes them); training sequences
    themselves are never modified.
    """

    user_labels: list[str]
    train_seqs: list[list[int]]
    valid_targets: list[int]
    test_targets: list[int]
    vocab_size: int
    pad_id: int = 0
    test_prefixes: list[list[int]] | None = None

    @property
    def mask_id(self) -> int:
        return self.vocab_size + 1

    @property
    def n_users(self) -> int:
        return len(self.train_seqs)

    def full_sequence(self, u: int) -> list[int]:
        return self.train_seqs[u] + [self.valid_targets[u], self.test_targets[u]]

    def history(self, u: int) -> set[int]:
        return set(self.full_sequence(u))

    def eval_prefix(self, u: int, phase: str) -> list[int]:
        """Model input for ranking the phase target of user u."""
        if phase == "valid":
            return self.train_seqs[u]
        if phase == "test":
            if self.test_prefixes is not None:
                return self.test_prefixes[u]
            return self.train_seqs[u] + [self.valid_targets[u]]
        raise ValueError(f"phase must be 'valid' or 'test', got {phase!r}")

    def eval_target(self, u: int, phase: str) -> int:
        return self.valid_targets[u] if phase == "valid" else self.test_targets[u]

    def seen_items(self, u: int, phase: str) -> set[int]:
        """Items interacted with before the phase target (ranking exclusions)."""
        if phase == "valid":
            return set(self.train_seqs[u])
        return set(self.train_seqs[u]) | {self.valid_targets[u]}

    def subset(self, indices) -> "SplitDataset":
        idx = list(indices)
        return SplitDataset(
            user_labels=[self.user_labels[i] for i in idx],
            train_seqs=[list(self.train_seqs[i]) for i in idx],
            valid_targets=[self.valid_targets[i] for i in idx],
            test_targets=[self.test_targets[i] for i in idx],
            vocab_size=self.vocab_size,
            pad_id=self.pad_id,
            test_prefixes=None
            if self.test_prefixes is None
            else [list(self.test_prefixes[i]) for i in idx],
        )


@dataclass
class PaddedSequence:
    """Fixed-length view of a sequence: left-padded, suffix-truncated."""

    items: np.ndarray
    real_len: int


def load_interactions(path: str) -> InteractionDataset:
    """Parse a user-per-line corpus and re-index items densely from 1."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DatasetError(f"cannot read corpus {path!r}: {exc}") from exc

    labels: list[str] = []
    raw_seqs: list[list[int]] = []
    seen_labels: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) < 2:
            raise ParseError(f"{path}:{lineno}: user {tokens[0]!r} has no items")
        label = tokens[0]
        if label in seen_labels:
            raise ParseError(f"{path}:{lineno}: duplicate user id {label!r}")
        seen_labels.add(label)
        items = []
        for tok in tokens[1:]:
            try:
                item = int(tok)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: item id {tok!r} is not an integer") from None
            if item < 1:
                raise ParseError(f"{path}:{lineno}: item id {item} is not positive")
            items.append(item)
        labels.append(label)
        raw_seqs.append(items)

    if not raw_seqs:
        raise DatasetError(f"corpus {path!r} contains no interactions")

    remap: dict[int, int] = {}
    sequences = []
    for seq in raw_seqs:
        row = []
        for item in seq:
            if item not in remap:
                remap[item] = len(remap) + 1
            row.append(remap[item])
        sequences.append(row)
    return InteractionDataset(user_labels=labels, sequences=sequences, vocab_size=len(remap))


def five_core_filter(ds: InteractionDataset, min_count: int = 5) -> InteractionDataset:
    """Drop users and items with fewer than min_count interactions, repeatedly,
    until both constraints hold; then re-index items densely (order-preserving).
    """
    labels = list(ds.user_labels)
    seqs = [list(s) for s in ds.sequences]
    while True:
        item_counts = Counter(item for seq in seqs for item in seq)
        bad_items = {i for i, c in item_counts.items() if c < min_count}
        keep = [u for u, seq in enumerate(seqs) if len(seq) >= min_count]
        if len(keep) == len(seqs) and not bad_items:
            break
        labels = [labels[u] for u in keep]
        seqs = [[i for i in seqs[u] if i not in bad_items] for u in keep]
        if not seqs:
            raise DatasetError("five-core filter removed every user")

    surviving = sorted({item for seq in seqs for item in seq})
    if not surviving:
        raise DatasetError("five-core filter removed every item")
    remap = {old: new for new, old in enumerate(surviving, start=1)}
    seqs = [[remap[i] for i in seq] for seq in seqs]
    return InteractionDataset(user_labels=labels, sequences=seqs, vocab_size=len(surviving))


def split_leave_one_out(ds: InteractionDataset) -> SplitDataset:
    """Last item held out for test, second-last for validation.

    Users with fewer than 3 interactions are excluded from the split.
    """
    labels, trains, valids, tests = [], [], [], []
    for label, seq in zip(ds.user_labels, ds.sequences):
        if len(seq) < 3:
            continue
        labels.append(label)
        trains.append(list(seq[:-2]))
        valids.append(seq[-2])
        tests.append(seq[-1])
    if not trains:
        raise DatasetError("no user has the >= 3 interactions a leave-one-out split needs")
    return SplitDataset(
        user_labels=labels,
        train_seqs=trains,
        valid_targets=valids,
        test_targets=tests,
        vocab_size=ds.vocab_size,
        pad_id=ds.pad_id,
    )


def pad_truncate(seq, max_len: int, pad_id: int = 0) -> PaddedSequence:
    """Keep the most recent max_len items; left-pad shorter sequences."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    kept = list(seq)[-max_len:]
    items = np.full(max_len, pad_id, dtype=np.int64)
    if kept:
        items[max_len - len(kept) :] = kept
    real_len = int((items != pad_id).sum())
    return PaddedSequence(items=items, real_len=real_len)


def padded_matrix(seqs, max_len: int, pad_id: int = 0) -> np.ndarray:
    """Stack pad_truncate over a list of sequences into an (N, max_len) array."""
    out = np.full((len(seqs), max_len), pad_id, dtype=np.int64)
    for i, seq in enumerate(seqs):
        out[i] = pad_truncate(seq, max_len, pad_id).items
    return out


def inject_test_noise(split: SplitDataset, ratio: float, rng_seed: int) -> SplitDataset:
    """Insert ceil(ratio * len) items the user never interacted with, at uniform
    positions, into each user's test-phase input sequence.

    Training sequences and targets are untouched; the perturbed inputs go to
    test_prefixes on the returned copy.  ratio 0 returns an identical copy.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"noise ratio must be in [0, 1], got {ratio}")
    if ratio == 0.0:
        return copy.deepcopy(split)
    prefixes = []
    for u in range(split.n_users):
        base = split.train_seqs[u] + [split.valid_targets[u]]
        n_insert = math.ceil(ratio * len(base))
        history = split.history(u)
        candidates = [i for i in range(1, split.vocab_size + 1) if i not in history]
        if n_insert > 0 and not candidates:
            raise DatasetError(f"user {u}: no unseen items available for noise injection")
        rng = derive_rng(rng_seed, STREAM_NOISE, u)
        noised = list(base)
        for _ in range(n_insert):
            item = candidates[int(rng.integers(len(candidates)))]
            pos = int(rng.integers(len(noised) + 1))
            noised.insert(pos, item)
        prefixes.append(noised)
    out = copy.deepcopy(split)
    out.test_prefixes = prefixes
    return out


def bucket_sizes(n: int, n_groups: int) -> list[int]:
    """Near-equal partition sizes; earlier buckets absorb the remainder."""
    base, rem = divmod(n, n_groups)
    return [base + (1 if i < rem else 0) for i in range(n_groups)]


def group_by_length(ds: InteractionDataset, n_groups: int) -> list[InteractionDataset]:
    """Partition users into n_groups by ascending sequence length.

    Group sizes differ by at most one; ties keep original user order.  The
    returned datasets share the parent's item vocabulary.
    """
    if not 1 <= n_groups <= ds.n_users:
        raise ValueError(f"n_groups must be in [1, {ds.n_users}], got {n_groups}")
    lengths = np.array([len(s) for s in ds.sequences])
    order = np.argsort(lengths, kind="stable")
    groups = []
    lo = 0
    for size in bucket_sizes(ds.n_users, n_groups):
        idx = order[lo : lo + size]
        groups.append(
            InteractionDataset(
                user_labels=[ds.user_labels[i] for i in idx],
                sequences=[list(ds.sequences[i]) for i in idx],
                vocab_size=ds.vocab_size,
                pad_id=ds.pad_id,
            )
        )
        lo += size
    return groups


def group_split_by_length(split: SplitDataset, n_groups: int) -> list[SplitDataset]:
    """Same bucketing as group_by_length, applied to an existing split
    (ordered by full sequence length, shortest group first)."""
    if not 1 <= n_groups <= split.n_users:
        raise ValueError(f"n_groups must be in [1, {split.n_users}], got {n_groups}")
    lengths = np.array([len(split.full_sequence(u)) for u in range(split.n_users)])
    order = np.argsort(lengths, kind="stable")
    out = []
    lo = 0
    for size in bucket_sizes(split.n_users, n_groups):
        out.append(split.subset(order[lo : lo + size]))
        lo += size
    return out
