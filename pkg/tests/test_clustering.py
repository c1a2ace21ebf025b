"""K-means fitting, assignment, and the per-epoch expectation step."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentrec.autograd import NumericError
from intentrec.clustering import assign, assign_batch, estep, kmeans_fit
from intentrec.encoder import EncoderConfig, init_params


def gaussian_blobs(rng, k=4, per=30, d=6, spread=0.05, sep=10.0):
    centers = rng.normal(size=(k, d)) * sep
    pts = np.concatenate(
        [centers[i] + rng.normal(size=(per, d)) * spread for i in range(k)]
    )
    labels = np.repeat(np.arange(k), per)
    return pts, labels


# -- kmeans_fit ---------------------------------------------------------------


def test_four_point_exact_recovery():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    model = kmeans_fit(pts, 2, rng_seed=0)
    got = model.centroids[np.argsort(model.centroids[:, 0])]
    assert np.array_equal(got, np.array([[0.0, 0.5], [10.0, 0.5]]))
    assert model.distortion == pytest.approx(4 * 0.25)


def test_k_equals_n_zero_distortion():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(5, 3))
    model = kmeans_fit(pts, 5, rng_seed=1)
    assert model.distortion == pytest.approx(0.0, abs=1e-24)
    assert sorted(model.assignments.tolist()) == [0, 1, 2, 3, 4]


def test_k_one_centroid_is_mean():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(20, 4))
    model = kmeans_fit(pts, 1, rng_seed=0)
    assert np.allclose(model.centroids[0], pts.mean(axis=0))
    assert np.all(model.assignments == 0)


def test_kmeans_validation():
    pts = np.ones((4, 2))
    with pytest.raises(ValueError):
        kmeans_fit(pts, 0)
    with pytest.raises(ValueError):
        kmeans_fit(pts, 5)
    with pytest.raises(ValueError):
        kmeans_fit(pts, 2, max_iter=0)
    with pytest.raises(NumericError):
        kmeans_fit(np.array([[1.0, np.nan], [0.0, 0.0]]), 1)


def test_kmeans_deterministic():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(40, 5))
    a = kmeans_fit(pts, 4, rng_seed=11)
    b = kmeans_fit(pts, 4, rng_seed=11)
    c = kmeans_fit(pts, 4, rng_seed=12)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignments, b.assignments)
    assert a.distortion == b.distortion
    assert not np.array_equal(a.centroids, c.centroids) or a.distortion == c.distortion


@given(st.integers(0, 10_000))
@settings(max_examples=50)
def test_distortion_monotone(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 40))
    d = int(rng.integers(2, 6))
    k = int(rng.integers(1, min(n, 6) + 1))
    pts = rng.normal(size=(n, d)) * rng.uniform(0.5, 3.0)
    model = kmeans_fit(pts, k, rng_seed=seed)
    hist = np.asarray(model.history)
    assert hist.size >= 1
    assert np.all(np.diff(hist) <= 1e-9)
    assert model.distortion == pytest.approx(hist[-1])


def test_empty_cluster_repair_keeps_k_live():
    """Duplicated points force empty clusters during Lloyd; repair must keep
    k populated clusters."""
    pts = np.array([[0.0, 0.0]] * 6 + [[5.0, 5.0]] * 6 + [[9.0, 0.0]])
    model = kmeans_fit(pts, 3, rng_seed=0)
    assert len(set(model.assignments.tolist())) == 3
    counts = np.bincount(model.assignments, minlength=3)
    assert np.all(counts >= 1)


def test_gaussian_recovery_nmi():
    sklearn = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(3)
    pts, labels = gaussian_blobs(rng)
    model = kmeans_fit(pts, 4, rng_seed=7)
    nmi = sklearn.normalized_mutual_info_score(labels, model.assignments)
    assert nmi == pytest.approx(1.0)


# -- assign ---------------------------------------------------------------------


def test_assign_exact_centroid():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(30, 4)) * 3
    model = kmeans_fit(pts, 5, rng_seed=2)
    for i in range(5):
        idx, c = assign(model, model.centroids[i])
        assert idx == i
        assert np.array_equal(c, model.centroids[i])


def test_assign_tie_prefers_lowest_index():
    model = kmeans_fit(np.array([[0.0, 0.0], [2.0, 0.0]]), 2, rng_seed=0)
    mid = model.centroids.mean(axis=0)
    idx, _ = assign(model, mid)
    assert idx == 0


@given(st.integers(0, 10_000))
@settings(max_examples=50)
def test_assign_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(25, 3))
    k = int(rng.integers(1, 7))
    model = kmeans_fit(pts, k, rng_seed=seed)
    h = rng.normal(size=3)
    idx, c = assign(model, h)
    dists = ((model.centroids - h) ** 2).sum(axis=1)
    best = int(np.flatnonzero(dists == dists.min())[0])
    assert idx == best
    assert np.array_equal(c, model.centroids[best])


def test_assign_consistent_with_fit_assignments():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(40, 4))
    model = kmeans_fit(pts, 4, rng_seed=3)
    re = assign_batch(model, pts)
    assert np.array_equal(re, model.assignments)
    # idempotent: assigning again changes nothing
    assert np.array_equal(assign_batch(model, pts), re)


# -- estep ------------------------------------------------------------------------


@pytest.fixture
def estep_setup():
    cfg = EncoderConfig(vocab_size=22, max_seq_len=6, dim=8, blocks=1, heads=2, dropout=0.1)
    params = init_params(cfg, rng_seed=0)
    rng = np.random.default_rng(6)
    matrix = rng.integers(1, 21, size=(12, 6)).astype(np.int64)
    matrix[0, :3] = 0  # left padding on one row
    return params, matrix


def test_estep_deterministic(estep_setup):
    params, matrix = estep_setup
    a = estep(params, matrix, 3, rng_seed=5)
    b = estep(params, matrix, 3, rng_seed=5)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignments, b.assignments)
    assert a.k == 3
    assert a.assignments.shape == (12,)


def test_estep_identical_params_identical_model(estep_setup):
    params, matrix = estep_setup
    cfg = params.config
    clone = init_params(cfg, rng_seed=99)
    clone.load_snapshot(params.snapshot())
    a = estep(params, matrix, 4, rng_seed=1)
    b = estep(clone, matrix, 4, rng_seed=1)
    assert np.array_equal(a.centroids, b.centroids)


def test_estep_k1_everyone_assigned_zero(estep_setup):
    params, matrix = estep_setup
    model = estep(params, matrix, 1, rng_seed=0)
    assert np.all(model.assignments == 0)


def test_estep_order_invariance_up_to_relabeling(estep_setup):
    """Permuting the input rows permutes assignments and relabels clusters,
    nothing else."""
    params, matrix = estep_setup
    a = estep(params, matrix, 3, rng_seed=4)
    perm = np.random.default_rng(7).permutation(matrix.shape[0])
    b = estep(params, matrix[perm], 3, rng_seed=4)

    # match centroids of b to centroids of a by nearest distance
    def match(ca, cb):
        mapping = {}
        for j in range(cb.shape[0]):
            d = ((ca - cb[j]) ** 2).sum(axis=1)
            mapping[j] = int(np.argmin(d))
        return mapping

    mapping = match(a.centroids, b.centroids)
    assert sorted(mapping.values()) == list(range(3))  # bijective
    relabeled = np.array([mapping[x] for x in b.assignments])
    assert np.array_equal(relabeled, a.assignments[perm])
    assert a.distortion == pytest.approx(b.distortion, rel=1e-9)


def test_estep_uses_eval_mode(estep_setup):
    """Dropout must not leak into the expectation step: two calls agree even
    though the encoder config has dropout enabled."""
    params, matrix = estep_setup
    a = estep(params, matrix, 2, rng_seed=8)
    b = estep(params, matrix, 2, rng_seed=8)
    assert np.array_equal(a.centroids, b.centroids)
    # chunking does not affect the result either
    c = estep(params, matrix, 2, rng_seed=8, chunk=5)
    assert np.array_equal(a.centroids, c.centroids)
