import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from dynbeta.metrics import ContingencyTable, ami, ari, expected_mutual_information, mutual_information


def set_partitions(n, max_blocks):
    """Restricted growth strings of length n with at most ``max_blocks`` blocks."""
    def rec(prefix, m):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(min(m + 1, max_blocks)):
            yield from rec(prefix + [v], max(m, v + 1))
    yield from rec([0], 1)


def ari_oracle(a, b):
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    same_a = np.array([a[i] == a[j] for i, j in pairs])
    same_b = np.array([b[i] == b[j] for i, j in pairs])
    index = int((same_a & same_b).sum())
    sa, sb, tot = int(same_a.sum()), int(same_b.sum()), len(pairs)
    expected = Fraction(sa * sb, tot)
    maximum = Fraction(sa + sb, 2)
    if maximum == expected:
        return 1.0 if (same_a == same_b).all() else 0.0
    return float((index - expected) / (maximum - expected))


def emi_oracle(a_counts, b_counts, n):
    """Hypergeometric expectation of MI, summed term by term in exact-ish arithmetic."""
    total = 0.0
    for ai in a_counts:
        for bj in b_counts:
            for nij in range(max(1, ai + bj - n), min(ai, bj) + 1):
                p = Fraction(math.comb(ai, nij) * math.comb(n - ai, bj - nij), math.comb(n, bj))
                total += float(p) * nij / n * math.log(n * nij / (ai * bj))
    return total


def emi_permutation_oracle(a, b):
    """E[MI] by averaging MI over every permutation of ``b`` (small n only)."""
    vals = [mi_oracle(a, perm) for perm in itertools.permutations(b)]
    return sum(vals) / len(vals)


def entropy(labels):
    n = len(labels)
    return -sum(c / n * math.log(c / n) for c in Counter(labels).values())


def mi_oracle(a, b):
    n = len(a)
    ca, cb, cab = Counter(a), Counter(b), Counter(zip(a, b))
    return sum(c / n * math.log(n * c / (ca[x] * cb[y])) for (x, y), c in cab.items())


def ami_oracle(a, b):
    """AMI from first principles: Counter-based MI and entropies, hypergeometric E[MI]."""
    a, b = list(a), list(b)
    if len(set(zip(a, b))) == len(set(a)) == len(set(b)):
        return 1.0  # identical partitions
    emi = emi_oracle(list(Counter(a).values()), list(Counter(b).values()), len(a))
    norm = 0.5 * (entropy(a) + entropy(b))
    return (mi_oracle(a, b) - emi) / (norm - emi)


PARTITIONS = list(set_partitions(8, 3))
REFERENCES = [
    (0, 0, 0, 0, 1, 1, 1, 1),
    (0, 1, 2, 0, 1, 2, 0, 1),
    (0, 0, 0, 0, 0, 0, 0, 1),
    (0, 0, 1, 1, 1, 2, 2, 2),
    (0, 0, 0, 0, 0, 0, 0, 0),
]


def test_partition_count():
    # Stirling numbers S(8,1) + S(8,2) + S(8,3)
    assert len(PARTITIONS) == 1 + 127 + 966


@pytest.mark.parametrize("ref", REFERENCES)
def test_ari_against_pair_counting(ref):
    worst = max(abs(ari(ref, p) - ari_oracle(list(ref), list(p))) for p in PARTITIONS)
    assert worst <= 1e-12
    assert all(ari(p, p) == 1.0 for p in PARTITIONS[1:])


@pytest.mark.parametrize("ref", REFERENCES[:4])
def test_emi_against_hypergeometric_sum(ref):
    for p in PARTITIONS:
        t = ContingencyTable.from_labels(ref, p)
        got = expected_mutual_information(t)
        assert abs(got - emi_oracle(list(Counter(ref).values()), list(Counter(p).values()), 8)) <= 1e-12


def test_emi_against_permutation_average():
    a = (0, 0, 1, 1, 2, 2)
    for b in [(0, 0, 0, 1, 1, 1), (0, 1, 1, 2, 2, 2), (0, 0, 0, 0, 1, 2)]:
        t = ContingencyTable.from_labels(a, b)
        assert abs(expected_mutual_information(t) - emi_permutation_oracle(a, b)) < 1e-12


def test_mutual_information_against_oracle():
    for a, b in [((0, 0, 1, 1, 2), (0, 1, 1, 2, 2)), ((0, 1, 0, 1), (0, 0, 1, 1))]:
        assert abs(mutual_information(ContingencyTable.from_labels(a, b)) - mi_oracle(a, b)) < 1e-15


@pytest.mark.parametrize("ref", REFERENCES)
def test_ami_against_oracle(ref):
    worst = max(abs(ami(ref, p) - ami_oracle(ref, p)) for p in PARTITIONS)
    assert worst <= 1e-12


def test_relabelling_invariance():
    a = [0, 0, 1, 1, 2, 2, 2]
    b = ["x", "x", "y", "z", "z", "z", "y"]
    b2 = ["q" if v == "x" else "r" if v == "y" else "s" for v in b]
    assert ari(a, b) == ari(a, b2) and ami(a, b) == ami(a, b2)
    assert ari([0, 0, 1, 1], [5, 5, 3, 3]) == 1.0
    assert ami([0, 0, 1, 1], [5, 5, 3, 3]) == 1.0


def test_ami_near_zero_for_independent_labels():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 4, 10_000)
    b = rng.integers(0, 4, 10_000)
    assert abs(ami(a, b)) < 0.02
    assert abs(ari(a, b)) < 0.02


def test_length_mismatch():
    from dynbeta.errors import InputError

    with pytest.raises(InputError):
        ari([0, 1], [0])
