"""Backend selection for the clustering kernels.

The compiled extension is used when it imports; set
``DYNBETA_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py as python_backend

try:
    from . import _kernels as cython_backend
except ImportError:  # extension not built
    cython_backend = None

if cython_backend is not None and os.environ.get("DYNBETA_PURE_PYTHON", "") != "1":
    _impl = cython_backend
    BACKEND = "cython"
else:
    _impl = python_backend
    BACKEND = "python"


def assign_labels(X, C):
    X = np.ascontiguousarray(X, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    return _impl.assign_labels(X, C)


def silhouette_samples(X, labels, n_clusters):
    X = np.ascontiguousarray(X, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    return _impl.silhouette_samples(X, labels, int(n_clusters))


def complete_linkage(X):
    return _impl.complete_linkage(np.ascontiguousarray(X, dtype=np.float64))
