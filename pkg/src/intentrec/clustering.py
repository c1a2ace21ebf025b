"""Latent intent prototypes: seeded k-means over pooled sequence representations.

Lloyd iterations with kmeans++ seeding, deterministic for a fixed seed.
The fit runs over a lexicographically sorted copy of the points so the
result does not depend on input row order: permuting the rows permutes the
returned assignments and leaves the centroids bit-identical.  Assignment
ties go to the lowest-index centroid; a cluster that empties is repaired by
moving in the point (from a multi-member cluster) farthest from its current
centroid.  Distortion is recorded after every mean update and never
increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import NumericError
from .encoder import EncoderParams, encode_summaries
from .seeding import as_rng


@dataclass
class IntentModel:
    """K prototype vectors plus the training-sequence assignments they induce."""

    centroids: np.ndarray  # (k, d), un-normalised
    assignments: np.ndarray  # (n_points,) int
    k: int
    distortion: float
    rng_seed: int = 0
    history: list[float] = field(default_factory=list)


def _pairwise_sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(axis=-1)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            idx = int(rng.choice(n, p=probs))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def kmeans_fit(
    points: np.ndarray,
    k: int,
    max_iter: int = 20,
    rng_seed: int | np.random.Generator = 0,
) -> IntentModel:
    """Cluster points (n, d) into k prototypes."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a (n, d) matrix")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not np.isfinite(points).all():
        raise NumericError("k-means input contains non-finite values")

    rng = as_rng(rng_seed)
    seed_val = int(rng_seed) if not isinstance(rng_seed, np.random.Generator) else 0

    # Canonical row order: the seeded init and every summation run over the
    # sorted copy, so shuffling the input rows cannot change the outcome.
    order = np.lexsort(points.T[::-1])
    pts = points[order]

    centroids = _kmeanspp_init(pts, k, rng)
    assignments = np.full(n, -1, dtype=np.int64)
    history: list[float] = []

    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(pts, centroids)
        new_assign = d2.argmin(axis=1)

        counts = np.bincount(new_assign, minlength=k)
        while (counts == 0).any():
            empty = int(np.flatnonzero(counts == 0)[0])
            movable = counts[new_assign] > 1
            own_d2 = d2[np.arange(n), new_assign]
            own_d2 = np.where(movable, own_d2, -np.inf)
            far = int(own_d2.argmax())
            counts[new_assign[far]] -= 1
            new_assign[far] = empty
            counts[empty] += 1

        if (new_assign == assignments).all():
            break
        assignments = new_assign
        for c in range(k):
            centroids[c] = pts[assignments == c].mean(axis=0)
        diff = pts - centroids[assignments]
        history.append(float((diff * diff).sum()))

    distortion = history[-1] if history else float(
        _pairwise_sq_dists(pts, centroids).min(axis=1).sum()
    )
    unsorted = np.empty(n, dtype=np.int64)
    unsorted[order] = assignments
    return IntentModel(
        centroids=centroids,
        assignments=unsorted,
        k=k,
        distortion=distortion,
        rng_seed=seed_val,
        history=history,
    )


def assign(model: IntentModel, h: np.ndarray) -> tuple[int, np.ndarray]:
    """Nearest prototype for one vector (ties to the lowest index)."""
    h = np.asarray(h, dtype=np.float64)
    d2 = ((model.centroids - h[None, :]) ** 2).sum(axis=1)
    idx = int(d2.argmin())
    return idx, model.centroids[idx].copy()


def assign_batch(model: IntentModel, H: np.ndarray) -> np.ndarray:
    """Nearest-prototype index for each row of H."""
    return _pairwise_sq_dists(np.asarray(H, dtype=np.float64), model.centroids).argmin(axis=1)


def estep(
    params: EncoderParams,
    train_matrix: np.ndarray,
    k: int,
    rng_seed: int | np.random.Generator = 0,
    max_iter: int = 20,
    chunk: int = 512,
) -> IntentModel:
    """Cluster every training sequence's pooled eval-mode representation.

    train_matrix is the (n_users, max_seq_len) padded id matrix; the model
    built here stays fixed for the following optimisation epoch.
    """
    _, pooled = encode_summaries(params, train_matrix, chunk=chunk)
    return kmeans_fit(pooled, k, max_iter=max_iter, rng_seed=rng_seed)
