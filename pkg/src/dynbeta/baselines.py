"""Comparison methods: PCA, sigmoid-kernel PCA and complete-linkage HCA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import eigsh

from . import kernels
from .errors import ConfigError, DegenerateInputError, ShapeError


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (n_components, F), orthonormal rows
    explained_variance: np.ndarray


def _data(x) -> np.ndarray:
    X = np.asarray(x, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {X.shape}")
    if X.shape[0] < 2:
        raise ConfigError("need at least two rows")
    return X


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each row made positive
    idx = np.abs(vectors).argmax(axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def pca_fit(spectra, n_components: int = 2) -> PcaModel:
    """Top principal axes of the sample covariance (dense symmetric eigensolver)."""
    X = _data(spectra)
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n_components]
    if evals[order[0]] <= 0:
        raise DegenerateInputError("data has zero variance")
    comps = _fix_signs(evecs[:, order].T)
    return PcaModel(mean, comps, np.maximum(evals[order], 0.0))


def pca_transform(model: PcaModel, spectra) -> np.ndarray:
    X = np.asarray(spectra, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.mean.shape[0]:
        raise ShapeError(f"expected {model.mean.shape[0]} features")
    return (X - model.mean) @ model.components.T


def sigmoid_kernel(X, Y=None, gain: float | None = None, offset: float = 1.0) -> np.ndarray:
    Y = X if Y is None else Y
    gain = 1.0 / X.shape[1] if gain is None else gain
    return np.tanh(gain * (X @ Y.T) + offset)


def center_kernel(K: np.ndarray) -> np.ndarray:
    row = K.mean(axis=0)
    return K - row[None, :] - K.mean(axis=1)[:, None] + row.mean()


def kernel_pca_fit_transform(
    spectra, gain: float | None = None, offset: float = 1.0, n_components: int = 2
) -> np.ndarray:
    """Embed rows with the top eigenvectors of the double-centred sigmoid kernel.

    Coordinates are ``sqrt(lambda) * v``, i.e. projections onto the
    unit-norm feature-space axes.  ``gain`` defaults to ``1/F``.
    """
    X = _data(spectra)
    Kc = center_kernel(sigmoid_kernel(X, gain=gain, offset=offset))
    Kc = 0.5 * (Kc + Kc.T)
    n = Kc.shape[0]
    if n <= n_components + 1:
        evals, evecs = np.linalg.eigh(Kc)
    else:
        v0 = np.ones(n) / np.sqrt(n)
        evals, evecs = eigsh(Kc, k=n_components, which="LA", v0=v0)
    order = np.argsort(evals)[::-1][:n_components]
    evals, evecs = evals[order], evecs[:, order]
    if evals[0] <= 0:
        raise DegenerateInputError("sigmoid kernel has no positive eigenvalue")
    evecs = _fix_signs(evecs.T).T
    return evecs * np.sqrt(np.maximum(evals, 0.0))


@dataclass(frozen=True)
class Dendrogram:
    """Merge list in scipy's linkage convention.

    Row ``i`` joins nodes ``merges[i, 0]`` and ``merges[i, 1]`` at distance
    ``merges[i, 2]``; leaves are ``0..n-1`` and row ``i`` creates node ``n + i``.
    """

    merges: np.ndarray
    n_leaves: int


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        self.parent[rb] = ra
        return ra


def hca_fit(points, linkage: str = "complete") -> Dendrogram:
    """Agglomerative clustering with complete linkage on Euclidean distances."""
    if linkage != "complete":
        raise ConfigError("only complete linkage is supported")
    X = _data(points)
    n = X.shape[0]
    raw = kernels.complete_linkage(X)
    # complete linkage is monotone, so a stable sort keeps every merge after
    # the merges that built its operands
    raw = raw[np.argsort(raw[:, 2], kind="stable")]
    uf = _UnionFind(n)
    node_of = list(range(n))
    merges = np.empty((n - 1, 3))
    for i, (a, b, d) in enumerate(raw):
        ra, rb = uf.find(int(a)), uf.find(int(b))
        na, nb = sorted((node_of[ra], node_of[rb]))
        merges[i] = (na, nb, d)
        node_of[uf.union(ra, rb)] = n + i
    return Dendrogram(merges, n)


def hca_cut(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Flat clustering with exactly ``k`` clusters, numbered by first appearance."""
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ConfigError(f"k must lie in [1, {n}], got {k}")
    uf = _UnionFind(2 * n - 1)
    for i in range(n - k):
        a, b, _ = dendrogram.merges[i]
        uf.parent[uf.find(int(a))] = n + i
        uf.parent[uf.find(int(b))] = n + i
    roots = [uf.find(i) for i in range(n)]
    ids = {}
    return np.array([ids.setdefault(r, len(ids)) for r in roots], dtype=np.int64)
