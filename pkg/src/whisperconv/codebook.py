"""Codebook utilities: exact nearest-neighbour lookup, K-means initialization, usage statistics."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class InitDataTooSmall(ValueError):
    """Fewer samples than codewords were supplied for K-means initialization."""


def nearest_codeword(z, codebook, chunk=1024):
    """Index of the closest codeword (squared l2) for each row of ``z``.

    Distances are formed from explicit differences so that exact ties are
    preserved; the lowest index wins a tie.
    """
    z = np.asarray(z, dtype=np.float64)
    codebook = np.asarray(codebook, dtype=np.float64)
    if z.shape[-1] != codebook.shape[-1]:
        raise ValueError(f"latent dim {z.shape[-1]} != codeword dim {codebook.shape[-1]}")
    out = np.empty(z.shape[0], dtype=np.int64)
    step = max(1, chunk * 64 // max(1, codebook.shape[0]))
    for s in range(0, z.shape[0], step):
        diff = z[s:s + step, None, :] - codebook[None, :, :]
        out[s:s + step] = np.argmin(np.einsum("nkd,nkd->nk", diff, diff), axis=1)
    return out


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[c] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))
    return centers


def _assign(x, centers):
    # ||x||^2 term is constant per row; fine for Lloyd iterations
    scores = np.sum(centers ** 2, axis=1)[None, :] - 2.0 * x @ centers.T
    return np.argmin(scores, axis=1)


def kmeans_init(samples, n_codewords=256, seed=0, max_iter=100, tol=1e-6):
    """K-means codebook from encoder outputs (k-means++ seeding, Lloyd iterations).

    Empty clusters are re-seeded from data points, and a final repair pass
    guarantees that every codeword is the exact nearest neighbour of at least
    one sample whenever the samples contain ``n_codewords`` distinct points.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("kmeans_init expects a [n_samples, dim] matrix")
    k = int(n_codewords)
    if x.shape[0] < k:
        raise InitDataTooSmall(f"need at least {k} samples to initialize {k} codewords, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    for _ in range(max_iter):
        labels = _assign(x, centers)
        new = centers.copy()
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        for c in np.flatnonzero(~filled):
            new[c] = x[rng.integers(x.shape[0])]
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift <= tol:
            break
    return _repair_dead_codewords(x, centers, rng)


def _repair_dead_codewords(x, centers, rng, max_rounds=None):
    k = centers.shape[0]
    scale = float(np.std(x)) or 1.0
    max_rounds = 4 * k if max_rounds is None else max_rounds
    for _ in range(max_rounds):
        labels = nearest_codeword(x, centers)
        counts = np.bincount(labels, minlength=k)
        dead = np.flatnonzero(counts == 0)
        if dead.size == 0:
            break
        own = centers[labels]
        spread = np.sum((x - own) ** 2, axis=1)
        # only steal from clusters that keep at least one other member
        donor_ok = counts[labels] > 1
        spread[~donor_ok] = -1.0
        if spread.max() <= 0.0:
            # no distinct point left to hand out: jitter to keep codewords apart
            centers[dead] = x[rng.integers(x.shape[0], size=dead.size)] + rng.normal(
                scale=1e-3 * scale, size=(dead.size, x.shape[1]))
            break
        centers[dead[0]] = x[int(np.argmax(spread))]
    return centers


def codebook_usage(indices, n_codewords):
    """Per-codeword counts and usage perplexity ``exp(entropy)``."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    counts = np.bincount(idx, minlength=n_codewords)
    if idx.size == 0:
        return counts, float("nan")
    p = counts[counts > 0] / idx.size
    return counts, float(np.exp(-np.sum(p * np.log(p))))


class KMeansCodebook(ClusterMixin, TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` learns the codebook, ``predict`` returns codeword ids."""

    def __init__(self, n_codewords=256, seed=0, max_iter=100):
        self.n_codewords = n_codewords
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.codebook_ = kmeans_init(X, self.n_codewords, self.seed, self.max_iter)
        self.labels_ = nearest_codeword(X, self.codebook_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "codebook_")
        return nearest_codeword(check_array(X, dtype=np.float64), self.codebook_)

    def transform(self, X):
        """Quantized vectors for each row of ``X``."""
        return self.codebook_[self.predict(X)]
