"""Pure numpy versions of the compiled kernels (same API as ``_kernels``)."""

import numpy as np

_CHUNK = 1024


def assign_labels(X, C):
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels.astype(np.int64), d2[np.arange(X.shape[0]), labels]


def _pairwise(A, B):
    out = np.empty((A.shape[0], B.shape[0]))
    # bound the broadcast temporary to ~2M elements
    step = max(1, 2**21 // max(1, B.shape[0] * A.shape[1]))
    for s in range(0, A.shape[0], step):
        out[s : s + step] = np.sqrt(((A[s : s + step, None, :] - B[None, :, :]) ** 2).sum(axis=2))
    return out


def silhouette_samples(X, labels, n_clusters):
    n = X.shape[0]
    onehot = np.zeros((n, n_clusters))
    onehot[np.arange(n), labels] = 1.0
    sums = np.empty((n, n_clusters))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        D = _pairwise(X[start:stop], X)
        D[np.arange(stop - start), np.arange(start, stop)] = 0.0
        sums[start:stop] = D @ onehot
    return silhouette_from_sums(sums, labels, n_clusters)


def silhouette_from_sums(sums, labels, n_clusters):
    """Silhouettes from per-point distance totals to every cluster."""
    n = sums.shape[0]
    counts = np.bincount(labels, minlength=n_clusters)
    own = counts[labels]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = sums[np.arange(n), labels] / (own - 1)
        means = sums / counts
    means[:, counts == 0] = np.inf
    means[np.arange(n), labels] = np.inf
    b = means.min(axis=1)
    s = np.zeros(n)
    ok = (own > 1) & np.isfinite(b)
    denom = np.maximum(a, b)
    nz = ok & (denom > 0)
    s[nz] = (b[nz] - a[nz]) / denom[nz]
    return s


def complete_linkage(X):
    n = X.shape[0]
    D = _pairwise(X, X)
    np.fill_diagonal(D, np.inf)
    active = np.ones(n, dtype=bool)
    merges = np.empty((max(n - 1, 0), 3))
    chain = []
    for m in range(n - 1):
        if not chain:
            chain.append(int(np.flatnonzero(active)[0]))
        while True:
            a = chain[-1]
            row = np.where(active, D[a], np.inf)
            row[a] = np.inf
            b = int(row.argmin())
            if len(chain) >= 2 and D[a, chain[-2]] <= row[b]:
                b = chain[-2]
            if len(chain) >= 2 and b == chain[-2]:
                break
            chain.append(b)
        chain.pop()
        chain.pop()
        keep, drop = min(a, b), max(a, b)
        merges[m] = (keep, drop, D[a, b])
        active[drop] = False
        new = np.maximum(D[keep], D[drop])
        new[keep] = np.inf
        D[keep] = new
        D[:, keep] = new
    return merges
