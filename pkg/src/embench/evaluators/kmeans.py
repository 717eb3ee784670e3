"""Seeded k-means with k-means++ seeding and best-of-restarts selection."""

from __future__ import annotations

import numpy as np

from ..errors import FewerPointsThanClusters


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], centers.shape[0]))
    for j, c in enumerate(centers):
        diff = X - c
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(X, X[[idx]])[:, 0])
    return X[chosen].copy()


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 300, tol: float = 1e-6):
    k = centers.shape[0]
    for _ in range(max_iter):
        dist = _sq_dists(X, centers)
        labels = np.argmin(dist, axis=1)
        counts = np.bincount(labels, minlength=k)
        own = dist[np.arange(X.shape[0]), labels]
        for j in np.flatnonzero(counts == 0):
            # move the point farthest from its centroid into the empty cluster
            movable = counts[labels] > 1
            far = int(np.argmax(np.where(movable, own, -1.0)))
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
            own[far] = 0.0
        new = np.stack([X[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift <= tol:
            break
    dist = _sq_dists(X, centers)
    labels = np.argmin(dist, axis=1)
    sse = float(dist[np.arange(X.shape[0]), labels].sum())
    return labels, sse


def kmeans(X, k: int, seed: int, restarts: int = 10, max_iter: int = 300, tol: float = 1e-6):
    """Best-SSE labelling over ``restarts`` k-means++ runs drawn from one seeded stream."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < k:
        raise FewerPointsThanClusters(f"{X.shape[0]} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    best_labels, best_sse = None, np.inf
    for _ in range(restarts):
        labels, sse = lloyd(X, kmeans_pp(X, k, rng), max_iter, tol)
        if sse < best_sse:
            best_labels, best_sse = labels, sse
    return best_labels, best_sse
