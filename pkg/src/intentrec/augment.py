"""Stochastic sequence augmentations: crop, mask, reorder.

Each operator works on raw (unpadded) item sequences.  A view pair for
contrastive training is built by drawing two operators uniformly from the
configured set and applying each with freshly drawn parameters.  All
randomness comes from the caller's seed, so view pairs replay exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeding import as_rng


@dataclass(frozen=True)
class AugmentConfig:
    crop_ratio: float = 0.6
    mask_ratio: float = 0.3
    reorder_ratio: float = 0.2
    ops: tuple[str, ...] = ("crop", "mask", "reorder")

    def __post_init__(self):
        for name in ("crop_ratio", "mask_ratio", "reorder_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not self.ops:
            raise ValueError("the augmentation op set is empty")
        unknown = set(self.ops) - {"crop", "mask", "reorder"}
        if unknown:
            raise ValueError(f"unknown augmentation ops: {sorted(unknown)}")

    def ratio_for(self, op: str) -> float:
        ratios = {"crop": self.crop_ratio, "mask": self.mask_ratio, "reorder": self.reorder_ratio}
        if op not in ratios:
            raise ValueError(f"unknown augmentation op {op!r}")
        return ratios[op]


def crop(seq, ratio: float, start: int) -> list[int]:
    """Contiguous window of length max(1, floor(ratio * len)) starting at start."""
    seq = list(seq)
    if not seq:
        raise ValueError("cannot crop an empty sequence")
    window = max(1, math.floor(ratio * len(seq)))
    if start < 0 or start + window > len(seq):
        raise ValueError(f"crop window [{start}, {start + window}) out of bounds for length {len(seq)}")
    return seq[start : start + window]


def mask(seq, ratio: float, positions, mask_id: int) -> list[int]:
    """Replace floor(ratio * len) positions with the mask token."""
    seq = list(seq)
    positions = list(positions)
    want = math.floor(ratio * len(seq))
    if len(positions) != want:
        raise ValueError(f"mask expects {want} positions for ratio {ratio}, got {len(positions)}")
    if len(set(positions)) != len(positions):
        raise ValueError("mask positions must be distinct")
    out = seq
    for p in positions:
        if not 0 <= p < len(seq):
            raise ValueError(f"mask position {p} out of range for length {len(seq)}")
        out[p] = mask_id
    return out


def reorder(seq, ratio: float, start: int, permutation) -> list[int]:
    """Shuffle the window [start, start + floor(ratio * len)) by `permutation`."""
    seq = list(seq)
    window = math.floor(ratio * len(seq))
    perm = list(permutation)
    if start < 0 or start + window > len(seq):
        raise ValueError(f"reorder window [{start}, {start + window}) out of bounds for length {len(seq)}")
    if sorted(perm) != list(range(window)):
        raise ValueError(f"permutation {perm} is not a permutation of range({window})")
    segment = seq[start : start + window]
    seq[start : start + window] = [segment[p] for p in perm]
    return seq


def apply_op(seq, op: str, config: AugmentConfig, mask_id: int, rng: np.random.Generator) -> list[int]:
    """Apply one named operator with parameters drawn from rng."""
    seq = list(seq)
    n = len(seq)
    ratio = config.ratio_for(op)
    if op == "crop":
        window = max(1, math.floor(ratio * n))
        start = int(rng.integers(0, n - window + 1))
        return crop(seq, ratio, start)
    if op == "mask":
        want = math.floor(ratio * n)
        positions = rng.choice(n, size=want, replace=False).tolist()
        return mask(seq, ratio, positions, mask_id)
    if op == "reorder":
        window = math.floor(ratio * n)
        start = int(rng.integers(0, n - window + 1))
        perm = rng.permutation(window).tolist()
        return reorder(seq, ratio, start, perm)
    raise ValueError(f"unknown augmentation op {op!r}")


def sample_view_pair(
    seq,
    rng_seed: int | np.random.Generator,
    config: AugmentConfig,
    mask_id: int,
) -> tuple[list[int], list[int]]:
    """Two independently augmented views of one sequence.

    Operators are drawn uniformly (with replacement) from config.ops; both
    views are non-empty for any non-empty input.
    """
    seq = list(seq)
    if not seq:
        raise ValueError("cannot augment an empty sequence")
    rng = as_rng(rng_seed)
    views = []
    for _ in range(2):
        op = config.ops[int(rng.integers(len(config.ops)))]
        views.append(apply_op(seq, op, config, mask_id, rng))
    return views[0], views[1]
