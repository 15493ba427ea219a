import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from whisperconv.codebook import (InitDataTooSmall, KMeansCodebook, codebook_usage, kmeans_init,
                                  nearest_codeword)


def test_nearest_matches_brute_force(rng):
    z, cb = rng.standard_normal((40, 6)), rng.standard_normal((13, 6))
    assert np.array_equal(nearest_codeword(z, cb), oracles.nearest_brute(z, cb))


def test_nearest_dim_mismatch(rng):
    with pytest.raises(ValueError):
        nearest_codeword(rng.standard_normal((3, 4)), rng.standard_normal((3, 5)))


def test_too_few_samples():
    with pytest.raises(InitDataTooSmall):
        kmeans_init(np.zeros((10, 2)), 16)


def test_exactly_k_distinct_points_each_own_codeword(rng):
    x = rng.standard_normal((32, 3))
    cb = kmeans_init(x, 32, seed=0)
    assert np.unique(nearest_codeword(x, cb)).size == 32


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40))
def test_every_codeword_used(seed, k):
    r = np.random.default_rng(seed)
    x = r.standard_normal((k * 3, 4)) * r.uniform(0.1, 3.0, 4)
    cb = kmeans_init(x, k, seed=seed)
    counts, _ = codebook_usage(nearest_codeword(x, cb), k)
    assert np.all(counts >= 1)


def test_degenerate_duplicates_do_not_crash():
    x = np.zeros((20, 2))
    cb = kmeans_init(x, 8)
    assert cb.shape == (8, 2) and np.all(np.isfinite(cb))


def test_usage_perplexity_bounds():
    _, uniform = codebook_usage(np.arange(64), 64)
    _, collapsed = codebook_usage(np.zeros(64, dtype=int), 64)
    assert uniform == pytest.approx(64) and collapsed == pytest.approx(1.0)
    assert np.isnan(codebook_usage([], 4)[1])


def test_deterministic_given_seed(rng):
    x = rng.standard_normal((300, 5))
    assert np.array_equal(kmeans_init(x, 20, seed=3), kmeans_init(x, 20, seed=3))


def test_estimator_api(rng):
    x = rng.standard_normal((200, 3))
    est = KMeansCodebook(n_codewords=10, seed=0).fit(x)
    assert est.codebook_.shape == (10, 3) and est.labels_.shape == (200,)
    assert np.array_equal(est.predict(x), est.labels_)
    assert est.transform(x[:4]).shape == (4, 3)
    assert est.get_params()["n_codewords"] == 10
