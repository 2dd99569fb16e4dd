"""K-means, silhouette-based choice of K, and the semi-supervised clustering loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateInputError, ShapeError

SILHOUETTE_FULL_LIMIT = 5000
SILHOUETTE_SUBSAMPLE = 2000


@dataclass
class ClusterModel:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    silhouette: float | None = None
    inertia_history: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _points(points) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"points must be a 2-D array, got shape {X.shape}")
    return X


def _kmeans_pp(X, k, rng):
    """Greedy k-means++: draw ``2 + ln k`` D^2 candidates per centre, keep the best."""
    n = X.shape[0]
    trials = 2 + int(np.log(k))
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            cand = rng.choice(n, trials, p=d2 / total)
        else:
            cand = rng.integers(n, size=trials)
        cand_d2 = np.minimum(d2, ((X[None, :, :] - X[cand][:, None, :]) ** 2).sum(axis=2))
        best = int(cand_d2.sum(axis=1).argmin())
        centroids[c] = X[cand[best]]
        d2 = cand_d2[best]
    return centroids


def _lloyd(X, centroids, max_iters):
    history = []
    prev = None
    n_iter = 0
    labels, d2 = kernels.assign_labels(X, centroids)
    history.append(float(d2.sum()))
    while n_iter < max_iters:
        if prev is not None and np.array_equal(labels, prev):
            break
        n_iter += 1
        prev = labels
        k = centroids.shape[0]
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, X)
        centroids = centroids.copy()
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            # empty cluster: move it onto the point farthest from its centroid
            d_now = ((X - centroids[labels]) ** 2).sum(axis=1)
            for c in np.flatnonzero(~nonempty):
                far = int(d_now.argmax())
                centroids[c] = X[far]
                d_now[far] = -1.0
        labels, d2 = kernels.assign_labels(X, centroids)
        history.append(float(d2.sum()))
    return centroids, labels, float(d2.sum()), history, n_iter


def kmeans(points, k: int, seed=0, max_iters: int = 300, n_init: int = 1) -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeding; best of ``n_init`` restarts.

    Each run stops when assignments stop changing.  ``inertia_history`` of
    the returned model lists the inertia after every assignment step.
    """
    X = _points(points)
    n = X.shape[0]
    if k < 1:
        raise ConfigError("k must be at least 1")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of points {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        c0 = _kmeans_pp(X, k, rng)
        centroids, labels, inertia, history, n_iter = _lloyd(X, c0, max_iters)
        if best is None or inertia < best.inertia:
            best = ClusterModel(centroids, labels, inertia, None, history, n_iter)
    return best


def silhouette(points, assignments, subsample: int | None = None, seed=0) -> float:
    """Mean silhouette coefficient.

    Points alone in their cluster contribute 0.  With ``subsample`` set and
    fewer points than that, a fixed random subset (per ``seed``) is scored
    against itself.
    """
    X = _points(points)
    labels = np.asarray(assignments)
    if labels.shape[0] != X.shape[0]:
        raise ShapeError("assignments and points differ in length")
    if subsample is not None and X.shape[0] > subsample:
        idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], subsample, replace=False))
        X, labels = X[idx], labels[idx]
    uniq, compact = np.unique(labels, return_inverse=True)
    if uniq.size < 2:
        raise DegenerateInputError("silhouette needs at least two clusters")
    s = kernels.silhouette_samples(X, compact, uniq.size)
    return float(s.mean())


def silhouette_precomputed(distances, assignments) -> float:
    """Mean silhouette from a full pairwise distance matrix."""
    D = np.asarray(distances, dtype=np.float64)
    uniq, compact = np.unique(np.asarray(assignments), return_inverse=True)
    if uniq.size < 2:
        raise DegenerateInputError("silhouette needs at least two clusters")
    onehot = np.zeros((D.shape[0], uniq.size))
    onehot[np.arange(D.shape[0]), compact] = 1.0
    sums = D @ onehot
    return float(kernels.python_backend.silhouette_from_sums(sums, compact, uniq.size).mean())


def pairwise_distances(X) -> np.ndarray:
    X = _points(X)
    sq = (X * X).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


def default_subsample(n: int) -> int | None:
    return None if n <= SILHOUETTE_FULL_LIMIT else SILHOUETTE_SUBSAMPLE


@dataclass
class KSelection:
    k: int
    scores: dict  # k -> mean silhouette
    models: dict  # k -> ClusterModel
    warning: str | None = None

    @property
    def model(self) -> ClusterModel:
        return self.models[self.k]


def select_k(
    points,
    k_min: int = 5,
    k_max: int = 50,
    seed: int = 0,
    n_init: int = 5,
    subsample: int | None | str = "auto",
) -> KSelection:
    """Run k-means for every K in ``[k_min, k_max]`` and keep the best silhouette.

    Ties go to the smaller K.  Each K is seeded from ``(seed, K)`` so the
    result does not depend on evaluation order.
    """
    X = _points(points)
    n = X.shape[0]
    if k_min < 1 or k_max < k_min:
        raise ConfigError(f"invalid K range [{k_min}, {k_max}]")
    warning = None
    if n <= k_max:
        new_max = n - 1
        warning = f"K range clipped to [{k_min}, {new_max}]: only {n} points"
        k_max = new_max
        if k_max < k_min:
            raise ConfigError(f"{n} points are too few for K >= {k_min}")
    if subsample == "auto":
        subsample = default_subsample(n)
    scores, models = {}, {}
    best_k, best_s = None, -np.inf
    for k in range(k_min, k_max + 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        model = kmeans(X, k, rng, n_init=n_init)
        if k == 1 or np.unique(model.assignments).size < 2:
            score = 0.0 if k > 1 else float("nan")
        else:
            score = silhouette(X, model.assignments, subsample, seed)
        model.silhouette = score
        scores[k] = score
        models[k] = model
        if score > best_s:
            best_k, best_s = k, score
    if best_k is None:
        best_k = k_min
    return KSelection(best_k, scores, models, warning)


# --- semi-supervised clustering loss ---------------------------------------

@dataclass(frozen=True)
class ClusterLossParts:
    d_c: float
    d_r: float
    epsilon: float
    loss: float


def _class_index(labels):
    labels = np.asarray(labels)
    classes, idx = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise DegenerateInputError("clustering loss needs at least two distinct labels")
    return classes.size, idx


def clustering_loss_grad(latent, labels, epsilon: float = 1e-8):
    """Cohesion/repulsion ratio and its gradient w.r.t. every latent point.

    Centroids are the per-class means inside the batch, so the gradient
    flows through both the members and their centroid.
    """
    Z = _points(latent)
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if len(labels) != Z.shape[0]:
        raise ShapeError("labels and latent points differ in length")
    k, idx = _class_index(labels)
    counts = np.bincount(idx, minlength=k).astype(np.float64)
    centroids = np.zeros((k, Z.shape[1]))
    np.add.at(centroids, idx, Z)
    centroids /= counts[:, None]

    diff = Z - centroids[idx]
    dist = np.sqrt((diff * diff).sum(axis=1))
    d_c = float(dist.sum())
    unit = np.divide(diff, dist[:, None], out=np.zeros_like(diff), where=dist[:, None] > 0)

    cdiff = centroids[:, None, :] - centroids[None, :, :]
    cdist = np.sqrt((cdiff * cdiff).sum(axis=2))
    iu = np.triu_indices(k, 1)
    d_r = float(cdist[iu].sum())
    cunit = np.divide(cdiff, cdist[..., None], out=np.zeros_like(cdiff), where=cdist[..., None] > 0)

    loss = (d_c + epsilon) / (d_r + epsilon)

    # d(d_C)/dz_i = u_i - mean of u over i's class
    unit_mean = np.zeros((k, Z.shape[1]))
    np.add.at(unit_mean, idx, unit)
    unit_mean /= counts[:, None]
    g_dc = unit - unit_mean[idx]
    # d(d_R)/dz_i = (1/N_k) * sum_j unit(c_k - c_j)
    g_dr = (cunit.sum(axis=1) / counts[:, None])[idx]
    grad = (g_dc - loss * g_dr) / (d_r + epsilon)
    return ClusterLossParts(d_c, d_r, epsilon, loss), grad


def clustering_loss(latent, labels, epsilon: float = 1e-8) -> ClusterLossParts:
    parts, _ = clustering_loss_grad(latent, labels, epsilon)
    return parts


@dataclass
class ClusterSpectrum:
    cluster: int
    count: int
    mean: np.ndarray | None
    q25: np.ndarray | None
    q75: np.ndarray | None

    @property
    def empty(self) -> bool:
        return self.count == 0


def cluster_spectra_summary(spectra, assignments, k: int | None = None) -> list[ClusterSpectrum]:
    """Per-cluster mean spectrum with 25 %/75 % quantile envelopes.

    Empty clusters are kept as entries with ``count == 0`` and no arrays.
    """
    S = _points(spectra)
    a = np.asarray(assignments)
    if a.shape[0] != S.shape[0]:
        raise ShapeError("assignments do not cover the batch")
    k = int(a.max()) + 1 if k is None else k
    out = []
    for c in range(k):
        rows = S[a == c]
        if rows.shape[0] == 0:
            out.append(ClusterSpectrum(c, 0, None, None, None))
            continue
        q25, q75 = np.quantile(rows, [0.25, 0.75], axis=0)
        out.append(ClusterSpectrum(c, rows.shape[0], rows.mean(axis=0), q25, q75))
    return out
