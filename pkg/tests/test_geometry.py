import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from mldl.geometry import (
    NeighborhoodSystem,
    clique_union,
    knn_neighborhood,
    neighborhood_for,
    pairwise_distances,
    rball_neighborhood,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def test_three_four_five():
    X = np.array([[0.0, 0, 0], [3, 4, 0]])
    assert pairwise_distances(X).d[0, 1] == 5.0
    assert pairwise_distances(X, normalize=True).d[0, 1] == pytest.approx(5 / math.sqrt(3), abs=1e-15)


def test_distances_match_naive_loop():
    X = np.random.default_rng(0).normal(size=(25, 4))
    assert np.allclose(pairwise_distances(X, True).d, oracles.dist(X), atol=1e-12, rtol=0)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        pairwise_distances(np.array([[0.0, np.nan]]))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (8, 3), elements=finite))
def test_distance_matrix_invariants(X):
    D = pairwise_distances(X, True).d
    assert np.all(np.diag(D) == 0)
    assert np.array_equal(D, D.T) and np.all(D >= 0)
    for i, j, k in [(0, 1, 2), (3, 4, 5), (1, 6, 7)]:
        assert D[i, k] <= D[i, j] + D[j, k] + 1e-9


def test_knn_tie_break_by_index():
    X = np.array([[0.0], [1.0], [2.0]])
    nb = knn_neighborhood(pairwise_distances(X), 1)
    assert nb.neighbors[1].tolist() == [0]


def test_knn_full_and_range():
    X = np.random.default_rng(1).normal(size=(6, 2))
    D = pairwise_distances(X)
    nb = knn_neighborhood(D, 5)
    assert all(sorted(n.tolist()) == [j for j in range(6) if j != i] for i, n in enumerate(nb.neighbors))
    for bad in (0, 6):
        with pytest.raises(ValueError):
            knn_neighborhood(D, bad)


def test_knn_matches_sort_oracle():
    X = np.random.default_rng(2).normal(size=(50, 3))
    D = pairwise_distances(X, True)
    nb = knn_neighborhood(D, 7)
    for i in range(50):
        assert nb.neighbors[i].tolist() == oracles.knn(D.d, i, 7)
        assert i not in nb.neighbors[i]
    assert np.all(nb.counts() == 7)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_knn_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 2))
    perm = rng.permutation(20)
    a = knn_neighborhood(pairwise_distances(X), 4)
    b = knn_neighborhood(pairwise_distances(X[perm]), 4)
    for new_i, old_i in enumerate(perm):
        assert sorted(perm[b.neighbors[new_i]].tolist()) == sorted(a.neighbors[old_i].tolist())


def test_rball_square_corners():
    X = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]])
    nb = rball_neighborhood(pairwise_distances(X), 1.1)
    assert [sorted(n.tolist()) for n in nb.neighbors] == [[1, 3], [0, 2], [1, 3], [0, 2]]
    assert all(len(n) == 0 for n in rball_neighborhood(pairwise_distances(X), 1e-9).neighbors)
    full = rball_neighborhood(pairwise_distances(X), math.inf)
    assert all(len(n) == 3 for n in full.neighbors)
    with pytest.raises(ValueError):
        rball_neighborhood(pairwise_distances(X), 0.0)


def test_rball_strict_inequality():
    X = np.array([[0.0], [1.0]])
    assert len(rball_neighborhood(pairwise_distances(X), 1.0).neighbors[0]) == 0


def _random_system(rng, m=15, p=0.2):
    return NeighborhoodSystem(
        tuple(np.flatnonzero((rng.random(m) < p) & (np.arange(m) != i)) for i in range(m)), "rball", 1.0
    )


def _pair_oracle(*systems):
    out = set()
    for s in systems:
        for i, nb in enumerate(s.neighbors):
            for j in nb:
                out.add((min(i, int(j)), max(i, int(j))))
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_clique_union_properties(seed):
    rng = np.random.default_rng(seed)
    A, B = _random_system(rng), _random_system(rng)
    ab = clique_union(A, B)
    assert ab.pairs() == _pair_oracle(A, B)
    assert ab.pairs() == clique_union(B, A).pairs()
    assert clique_union(A, A).pairs() == _pair_oracle(A)
    assert len(ab) == len(ab.pairs()) and all(i < j for i, j in ab.pairs())


def test_clique_union_empty_and_mismatch():
    rng = np.random.default_rng(0)
    A = NeighborhoodSystem(tuple(np.empty(0, np.int64) for _ in range(15)), "rball", 1.0)
    B = _random_system(rng)
    assert clique_union(A, B).pairs() == _pair_oracle(B)
    with pytest.raises(ValueError):
        clique_union(A, _random_system(rng, m=10))
    mask = clique_union(A, B).mask()
    assert np.array_equal(mask, mask.T)


def test_neighborhood_for_dispatch():
    D = pairwise_distances(np.random.default_rng(0).normal(size=(10, 2)))
    assert neighborhood_for(D, "knn", 3).mode == "knn"
    assert neighborhood_for(D, "rball", 0.5).mode == "rball"
    with pytest.raises(ValueError):
        neighborhood_for(D, "grid", 1)
