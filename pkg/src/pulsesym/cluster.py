"""Agglomerative clustering over precomputed dissimilarities.

Ward-style agglomeration via the Lance-Williams recursion applied directly
to the provided dissimilarity matrix (in the square domain, with heights
reported on the original scale).  Merge selection is the global minimum
with a deterministic tie-break: the lexicographically lowest (i, j) pair of
current matrix slots.  A merged cluster keeps the lower slot, so ties
always resolve toward the lowest original index.

The dissimilarities here are generally not Euclidean, so only the
recursion's arithmetic is meaningful, not its variance interpretation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Dendrogram:
    """Merge history in scipy linkage layout.

    ``merges`` has one row per merge: (left node, right node, height, size),
    where leaves are nodes 0..n-1 and merge t creates node n+t.
    """

    merges: np.ndarray
    leaf_count: int

    @property
    def heights(self) -> np.ndarray:
        return self.merges[:, 2] if len(self.merges) else np.zeros(0)

    @property
    def max_height(self) -> float:
        return float(self.heights.max()) if len(self.merges) else 0.0


def ward_cluster(distances: np.ndarray) -> Dendrogram:
    """Agglomerate a symmetric zero-diagonal dissimilarity matrix.

    Each step merges the current closest pair (lowest pair index on ties)
    and updates the merged cluster's dissimilarities with the Ward
    Lance-Williams formula on squared values.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    n = d.shape[0]
    if n == 0:
        raise ValueError("distance matrix is empty")
    scale = float(np.abs(d).max()) or 1.0
    if np.abs(d - d.T).max() > 1e-9 * scale:
        raise ValueError("distance matrix must be symmetric")
    if d.min() < 0:
        raise ValueError("distance matrix must be nonnegative")
    if n == 1:
        return Dendrogram(merges=np.zeros((0, 4)), leaf_count=1)

    D = d.copy()
    np.fill_diagonal(D, np.inf)
    active = np.ones(n, dtype=bool)
    size = np.ones(n, dtype=np.int64)
    node_id = np.arange(n, dtype=np.int64)
    rowmin = np.full(n, np.inf)
    rowarg = np.full(n, -1, dtype=np.int64)

    def recompute_row(k: int) -> None:
        tail = D[k, k + 1 :]
        mask = active[k + 1 :]
        if not mask.any():
            rowmin[k] = np.inf
            rowarg[k] = -1
            return
        vals = np.where(mask, tail, np.inf)
        a = int(np.argmin(vals))
        rowmin[k] = vals[a]
        rowarg[k] = k + 1 + a

    for k in range(n):
        recompute_row(k)

    merges = np.empty((n - 1, 4), dtype=np.float64)
    for step in range(n - 1):
        i = int(np.argmin(rowmin))
        j = int(rowarg[i])
        h = rowmin[i]
        merges[step] = (node_id[i], node_id[j], h, size[i] + size[j])

        si, sj = size[i], size[j]
        others = active.copy()
        others[i] = others[j] = False
        if others.any():
            idx = np.nonzero(others)[0]
            sk = size[idx].astype(np.float64)
            d_ik = D[i, idx]
            d_jk = D[j, idx]
            new_sq = (
                (si + sk) * d_ik * d_ik + (sj + sk) * d_jk * d_jk - sk * h * h
            ) / (si + sj + sk)
            new_d = np.sqrt(np.maximum(new_sq, 0.0))
            D[i, idx] = new_d
            D[idx, i] = new_d

        active[j] = False
        D[j, :] = np.inf
        D[:, j] = np.inf
        rowmin[j] = np.inf
        rowarg[j] = -1
        size[i] = si + sj
        node_id[i] = n + step

        recompute_row(i)
        pre = np.nonzero(active[:i])[0]
        if pre.size:
            stale = (rowarg[pre] == i) | (rowarg[pre] == j)
            for k in pre[stale]:
                recompute_row(int(k))
            rest = pre[~stale]
            if rest.size:
                dk = D[rest, i]
                upd = rest[(dk < rowmin[rest]) | ((dk == rowmin[rest]) & (i < rowarg[rest]))]
                rowmin[upd] = D[upd, i]
                rowarg[upd] = i
        mid = np.nonzero(active[i + 1 : j])[0] + i + 1
        for k in mid[rowarg[mid] == j]:
            recompute_row(int(k))

    return Dendrogram(merges=merges, leaf_count=n)


def _labels_from_applied(dend: Dendrogram, n_applied: int) -> np.ndarray:
    """Leaf labels after applying the first ``n_applied`` merges, relabeled
    by order of each component's smallest leaf."""
    n = dend.leaf_count
    parent = np.arange(n + n_applied, dtype=np.int64)
    for t in range(n_applied):
        left, right = int(dend.merges[t, 0]), int(dend.merges[t, 1])
        parent[left] = n + t
        parent[right] = n + t

    def root(x: int) -> int:
        while parent[x] != x:
            x = parent[x]
        return x

    labels = np.empty(n, dtype=np.int64)
    seen: dict[int, int] = {}
    for leaf in range(n):
        r = root(leaf)
        if r not in seen:
            seen[r] = len(seen)
        labels[leaf] = seen[r]
    return labels


def cut_dendrogram(dend: Dendrogram, fraction: float) -> tuple[int, np.ndarray]:
    """Cut at ``fraction`` of the maximum merge height.

    Merges strictly above the threshold are undone; returns the component
    count and per-leaf labels (numbered by smallest leaf).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if dend.leaf_count == 1:
        return 1, np.zeros(1, dtype=np.int64)
    threshold = fraction * dend.max_height
    applied = 0
    for t in range(len(dend.merges)):
        if dend.merges[t, 2] <= threshold:
            applied = t + 1
        else:
            break
    labels = _labels_from_applied(dend, applied)
    return dend.leaf_count - applied, labels


def cut_to_n(dend: Dendrogram, n_clusters: int) -> np.ndarray:
    """Cut to exactly ``n_clusters`` by undoing the last merges."""
    if n_clusters < 1 or n_clusters > dend.leaf_count:
        raise ValueError(
            f"cannot cut {dend.leaf_count} leaves into {n_clusters} clusters"
        )
    return _labels_from_applied(dend, dend.leaf_count - n_clusters)


def kmeans_euclidean(
    X: np.ndarray, n_clusters: int, seed: int = 0, max_iter: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Plain Lloyd k-means with squared Euclidean distance.

    Initial centroids are ``n_clusters`` distinct rows drawn with the seed;
    empty clusters are reseeded with the point farthest from its centroid.
    Returns (labels, centroids).
    """
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    if n_clusters < 1 or n_clusters > m:
        raise ValueError(f"n_clusters must be in [1, {m}]")
    rng = np.random.default_rng(seed)
    centroids = X[np.sort(rng.choice(m, size=n_clusters, replace=False))].copy()
    labels = np.full(m, -1, dtype=np.int64)
    for _ in range(max_iter):
        sq = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(sq, axis=1)
        dist_to_own = sq[np.arange(m), new_labels]
        for c in range(n_clusters):
            if not np.any(new_labels == c):
                far = int(np.argmax(dist_to_own))
                new_labels[far] = c
                dist_to_own[far] = -1.0
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(n_clusters):
            centroids[c] = X[labels == c].mean(axis=0)
    return labels, centroids
