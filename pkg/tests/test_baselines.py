import itertools

import numpy as np
import pytest

from dynbeta.baselines import (
    center_kernel,
    hca_cut,
    hca_fit,
    kernel_pca_fit_transform,
    pca_fit,
    pca_transform,
    sigmoid_kernel,
)
from dynbeta.errors import ConfigError, DegenerateInputError


def power_iteration_components(X, n):
    """Top-n covariance eigenvectors by power iteration with deflation."""
    Xc = X - X.mean(0)
    C = Xc.T @ Xc / (len(X) - 1)
    out = []
    rng = np.random.default_rng(0)
    for _ in range(n):
        v = rng.normal(size=C.shape[0])
        for _ in range(5000):
            v = C @ v
            v /= np.linalg.norm(v)
        lam = v @ C @ v
        out.append(v)
        C = C - lam * np.outer(v, v)
    return np.array(out)


def test_pca_rank_one():
    rng = np.random.default_rng(0)
    direction = np.array([1.0, 2.0, -1.0])
    X = np.outer(rng.normal(size=50), direction) + np.array([3.0, 3.0, 3.0])
    m = pca_fit(X)
    assert m.explained_variance[0] / m.explained_variance.sum() > 0.99999
    np.testing.assert_allclose(pca_transform(m, m.mean[None]), [[0.0, 0.0]], atol=1e-12)


def test_pca_matches_power_iteration():
    X = np.random.default_rng(1).normal(size=(5, 4))
    m = pca_fit(X)
    ref = power_iteration_components(X, 2)
    for got, want in zip(m.components, ref):
        sign = np.sign(got @ want)
        np.testing.assert_allclose(got, sign * want, atol=1e-8)


def test_pca_row_order_invariance():
    X = np.random.default_rng(2).normal(size=(40, 6))
    a = pca_transform(pca_fit(X), X)
    perm = np.random.default_rng(3).permutation(40)
    b = pca_transform(pca_fit(X[perm]), X[perm])
    np.testing.assert_allclose(np.abs(a[perm]), np.abs(b), atol=1e-10)


def test_pca_reconstruction_error_non_increasing():
    X = np.random.default_rng(4).normal(size=(30, 6))
    errs = []
    for k in range(1, 7):
        m = pca_fit(X, k)
        Z = pca_transform(m, X)
        errs.append(((X - (m.mean + Z @ m.components)) ** 2).sum())
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_pca_constant_data():
    with pytest.raises(DegenerateInputError):
        pca_fit(np.ones((5, 3)))


def test_centered_kernel_row_sums():
    X = np.random.default_rng(0).random((20, 193))
    K = center_kernel(sigmoid_kernel(X))
    assert np.abs(K.sum(1)).max() <= 1e-9


def test_kernel_pca_small_gain_matches_pca():
    X = np.random.default_rng(5).normal(size=(60, 5)) * np.array([5, 3, 1, 0.5, 0.1])
    Z = kernel_pca_fit_transform(X, gain=1e-5, offset=0.0)
    P = pca_transform(pca_fit(X), X)
    for j in range(2):
        assert abs(np.corrcoef(Z[:, j], P[:, j])[0, 1]) > 0.99


def test_kernel_pca_duplicates_identical():
    X = np.random.default_rng(6).random((15, 193))
    X[7] = X[3]
    Z = kernel_pca_fit_transform(X)
    np.testing.assert_array_equal(Z[7], Z[3])


def brute_complete_linkage(X):
    """Textbook O(n^3) agglomeration: scan every cluster pair each step."""
    clusters = {i: [i] for i in range(len(X))}
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    heights = []
    nxt = len(X)
    history = []
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(sorted(clusters), 2):
            d = D[np.ix_(clusters[a], clusters[b])].max()
            if best is None or d < best[0]:
                best = (d, a, b)
        d, a, b = best
        clusters[nxt] = clusters.pop(a) + clusters.pop(b)
        heights.append(d)
        history.append({frozenset(c) for c in map(frozenset, clusters.values())})
        nxt += 1
    return np.array(heights), history


def _partition(labels):
    groups = {}
    for i, l in enumerate(labels):
        groups.setdefault(l, set()).add(i)
    return {frozenset(g) for g in groups.values()}


def test_hca_two_pairs():
    X = np.array([[0, 0], [0, 0.1], [5, 5], [5, 5.1]])
    assert _partition(hca_cut(hca_fit(X), 2)) == {frozenset({0, 1}), frozenset({2, 3})}


@pytest.mark.parametrize("seed", range(10))
def test_hca_matches_brute_force(seed):
    X = np.random.default_rng(seed).normal(size=(8, 3))
    dend = hca_fit(X)
    heights, history = brute_complete_linkage(X)
    np.testing.assert_allclose(dend.merges[:, 2], heights, rtol=1e-12)
    for step, parts in enumerate(history):
        assert _partition(hca_cut(dend, 8 - step - 1)) == parts


def test_hca_cut_extremes_and_monotone():
    X = np.random.default_rng(1).normal(size=(12, 2))
    dend = hca_fit(X)
    assert (np.diff(dend.merges[:, 2]) >= 0).all()
    np.testing.assert_array_equal(np.sort(hca_cut(dend, 12)), np.arange(12))
    assert set(hca_cut(dend, 1)) == {0}
    with pytest.raises(ConfigError):
        hca_cut(dend, 13)


def test_hca_agrees_with_scipy():
    from scipy.cluster.hierarchy import fcluster, linkage

    X = np.random.default_rng(9).normal(size=(60, 5))
    ours = hca_fit(X)
    ref = linkage(X, "complete")
    np.testing.assert_allclose(ours.merges[:, 2], ref[:, 2], rtol=1e-12)
    for k in (2, 5, 9):
        assert _partition(hca_cut(ours, k)) == _partition(fcluster(ref, k, "maxclust"))
