"""Slow, loop-based reference implementations used as test oracles.

Written directly from the metric definitions, sharing no code with the package.
"""

import math

import numpy as np


def dist(X):
    X = np.asarray(X, dtype=float)
    m, n = X.shape
    D = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            D[i, j] = math.sqrt(sum((X[i, c] - X[j, c]) ** 2 for c in range(n))) / math.sqrt(n)
    return D


def order(D, i):
    """Other points sorted by (distance, index)."""
    return sorted((j for j in range(len(D)) if j != i), key=lambda j: (D[i, j], j))


def rank(D, i, j):
    return order(D, i).index(j) + 1


def knn(D, i, k):
    return order(D, i)[:k]


def trust(DA, DB, k1, k2):
    """Neighbors in B that are not neighbors in A, penalized by their rank in A."""
    m = len(DA)
    vals = []
    for k in range(k1, k2 + 1):
        s = 0.0
        for i in range(m):
            na = set(knn(DA, i, k))
            for j in knn(DB, i, k):
                if j not in na:
                    s += rank(DA, i, j) - k
        vals.append(1 - 2.0 / (m * k * (2 * m - 3 * k - 1)) * s)
    return sum(vals) / len(vals)


def arrc(DA, DB, k1, k2):
    m = len(DA)
    total = 0.0
    for k in range(k1, k2 + 1):
        H = m * sum(abs(m - 2 * kk) / kk for kk in range(1, k + 1))
        s = 0.0
        for i in range(m):
            for j in knn(DA, i, k):
                s += abs(rank(DA, i, j) - rank(DB, i, j)) / rank(DA, i, j)
            for j in knn(DB, i, k):
                s += abs(rank(DB, i, j) - rank(DA, i, j)) / rank(DB, i, j)
        total += s / H
    return total / (k2 - k1 + 1)


def lgd(DA, DB, nbh_sizes, k1, k2):
    m = len(DA)
    total = 0.0
    for k in range(k1, k2 + 1):
        inner = 0.0
        for i in range(m):
            sq = sum((DA[i, j] - DB[i, j]) ** 2 for j in knn(DA, i, k))
            inner += sq / ((k2 - k1 + 1) ** 2 * m * nbh_sizes[i])
        total += math.sqrt(inner)
    return total


def local_kl(DA, DB, neighbors, sigma):
    total = 0.0
    for i, nb in enumerate(neighbors):
        pa = [math.exp(-DA[i, j] ** 2 / sigma) for j in nb]
        pb = [math.exp(-DB[i, j] ** 2 / sigma) for j in nb]
        za, zb = sum(pa), sum(pb)
        for a, b in zip(pa, pb):
            total += (a / za) * math.log((a / za) / (b / zb))
    return total


def bilipschitz(DA, DB, neighbors):
    per_point = []
    for i, nb in enumerate(neighbors):
        if len(nb) == 0:
            continue
        ks = []
        for j in nb:
            a, b = DA[i, j], DB[i, j]
            ks.append(math.inf if a == 0 or b == 0 else max(a / b, b / a))
        per_point.append(max(ks))
    return min(per_point), max(per_point)


def mre(X, Y):
    return sum(math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y))) for x, y in zip(X, Y)) / len(X)


def finite_difference(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g
