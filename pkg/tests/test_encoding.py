import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from densefeat.encoding import (
    Codebook,
    assign,
    encode_image,
    kmeans_train,
    l2_normalize,
    power_law,
    vlad_encode,
)


def test_kmeans_exact_k_points():
    x = np.arange(12, dtype=float).reshape(6, 2) ** 2
    cb = kmeans_train(x, 6, seed=1)
    assert sorted(map(tuple, cb.centroids)) == sorted(map(tuple, x))
    assert cb.objective_history[-1] == 0.0


def test_kmeans_two_blobs():
    rng = np.random.default_rng(0)
    a = rng.normal([0, 0], 0.2, (200, 2))
    b = rng.normal([5, 3], 0.2, (200, 2))
    cb = kmeans_train(np.vstack([a, b]), 2, seed=3)
    c = cb.centroids[np.argsort(cb.centroids[:, 0])]
    assert np.abs(c[0] - a.mean(axis=0)).max() < 0.1
    assert np.abs(c[1] - b.mean(axis=0)).max() < 0.1


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_kmeans_objective_monotone_and_deterministic(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(500, 8))
    cb = kmeans_train(x, 16, seed=seed)
    h = np.array(cb.objective_history)
    assert np.all(np.diff(h) <= 1e-9 * h[0])
    again = kmeans_train(x, 16, seed=seed)
    assert np.array_equal(cb.centroids, again.centroids)


def test_kmeans_too_few_samples():
    with pytest.raises(ValueError):
        kmeans_train(np.zeros((3, 2)), 4)


def test_kmeans_duplicates_survive():
    x = np.zeros((50, 3))
    x[:5] = 1.0
    cb = kmeans_train(x, 4, seed=0)
    assert np.all(np.isfinite(cb.centroids))


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(5)
    c = rng.normal(size=(32, 16))
    d = rng.normal(size=(1000, 16))
    brute = np.array([min(range(32), key=lambda k: (float(np.sum((row - c[k]) ** 2)), k)) for row in d])
    assert np.array_equal(assign(d, c), brute)


def test_assignment_ties_to_lowest_index():
    c = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert assign(np.array([[0.0, 5.0]]), c).tolist() == [0]


def test_vlad_examples():
    rng = np.random.default_rng(1)
    c = rng.normal(size=(4, 3))
    cb = Codebook(c)
    assert not vlad_encode(c[[2, 0, 2, 1]], cb).any()
    assert not vlad_encode(np.zeros((0, 3)), cb).any()
    d = c[3] + np.array([0.01, -0.02, 0.03])
    v = vlad_encode(d[None], cb).reshape(4, 3)
    assert np.allclose(v[3], d - c[3])
    assert not v[:3].any()
    with pytest.raises(ValueError):
        vlad_encode(np.zeros((2, 5)), cb)


def test_vlad_permutation_invariance():
    rng = np.random.default_rng(2)
    cb = Codebook(rng.normal(size=(8, 6)))
    d = rng.normal(size=(300, 6))
    a = vlad_encode(d, cb)
    b = vlad_encode(d[rng.permutation(300)], cb)
    assert np.abs(a - b).max() < 1e-6


def test_power_law_examples():
    assert power_law(np.array([0.0, 4.0, -4.0]), 0.5).tolist() == [0.0, 2.0, -2.0]
    with pytest.raises(ValueError):
        power_law(np.ones(2), 0.0)


def test_l2_normalize_examples():
    v, zero = l2_normalize(np.array([3.0, 4.0, 0.0]))
    assert v.tolist() == [0.6, 0.8, 0.0] and not zero
    u = np.array([0.6, 0.8])
    assert np.abs(l2_normalize(u)[0] - u).max() <= 1e-12
    z, flagged = l2_normalize(np.zeros(4))
    assert flagged and not z.any()


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (5, 4), elements=st.floats(-10, 10)), st.floats(0.1, 1.0))
def test_encoded_vector_unit_norm(d, beta):
    cb = Codebook(np.eye(4) * 3.0)
    v = encode_image(d, cb, beta)
    n = np.linalg.norm(v)
    assert n == 0.0 or abs(n - 1.0) < 1e-6
    if n > 0:
        assert abs(float(v @ v) - 1.0) < 1e-6
