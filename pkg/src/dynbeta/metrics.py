"""Chance-adjusted agreement between two labelings: ARI and AMI."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.special import gammaln

from .errors import InputError

AMI_NORMALIZATION = "arithmetic"


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # (R true classes, C predicted clusters)

    @classmethod
    def from_labels(cls, labels_true, labels_pred) -> "ContingencyTable":
        t = np.asarray(labels_true)
        p = np.asarray(labels_pred)
        if t.shape != p.shape or t.ndim != 1:
            raise InputError(f"label arrays differ in shape: {t.shape} vs {p.shape}")
        if t.size < 2:
            raise InputError("need at least two labelled points")
        _, ti = np.unique(t, return_inverse=True)
        _, pi = np.unique(p, return_inverse=True)
        counts = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
        np.add.at(counts, (ti, pi), 1)
        return cls(counts)

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def same_partition(self) -> bool:
        # each row and each column has exactly one non-zero cell
        nz = self.counts > 0
        return bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1))


def ari(labels_true, labels_pred) -> float:
    """Adjusted Rand index (permutation model), exact integer pair counts."""
    table = ContingencyTable.from_labels(labels_true, labels_pred)
    sum_cells = sum(comb(int(v), 2) for v in table.counts.ravel())
    sum_rows = sum(comb(int(v), 2) for v in table.row_sums)
    sum_cols = sum(comb(int(v), 2) for v in table.col_sums)
    pairs = comb(table.total, 2)
    # scale everything by pairs to stay in integers
    expected = sum_rows * sum_cols
    num = sum_cells * pairs - expected
    den = (sum_rows + sum_cols) * pairs - 2 * expected
    if den == 0:
        return 1.0 if table.same_partition() else 0.0
    return (2 * num) / den


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def mutual_information(table: ContingencyTable) -> float:
    c = table.counts.astype(np.float64)
    n = table.total
    a = table.row_sums.astype(np.float64)
    b = table.col_sums.astype(np.float64)
    nz = c > 0
    outer = np.outer(a, b)[nz]
    v = c[nz]
    return float((v / n * (np.log(n * v) - np.log(outer))).sum())


def expected_mutual_information(table: ContingencyTable) -> float:
    """E[MI] under the hypergeometric model, hypergeometric terms in log space."""
    n = table.total
    a = table.row_sums
    b = table.col_sums
    lg_n = gammaln(n + 1)
    total = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, int(ai + bj - n))
            hi = int(min(ai, bj))
            if hi < lo:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            log_p = (
                gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                - gammaln(n - ai - bj + nij + 1)
            )
            term = nij / n * (np.log(n * nij) - np.log(float(ai) * float(bj)))
            total += float((term * np.exp(log_p)).sum())
    return total


def ami(labels_true, labels_pred) -> float:
    """Adjusted mutual information, arithmetic-mean normalization."""
    table = ContingencyTable.from_labels(labels_true, labels_pred)
    if table.same_partition():
        return 1.0  # MI equals both entropies; skip the rounding in the ratio
    n = table.total
    mi = mutual_information(table)
    emi = expected_mutual_information(table)
    h_true = _entropy(table.row_sums, n)
    h_pred = _entropy(table.col_sums, n)
    den = 0.5 * (h_true + h_pred) - emi
    if abs(den) < 1e-15:
        return 1.0 if table.same_partition() else 0.0
    return float((mi - emi) / den)
