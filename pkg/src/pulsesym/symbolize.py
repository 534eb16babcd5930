"""Per-day symbolization of pulse sets.

A random subsample is clustered hierarchically (Ward linkage on the
symmetrized envelope bound), the dendrogram cut at a fraction of its
maximum merge height fixes the symbol count k, and iterative k-means over
the full pulse set produces k (centroid shape, frequency) symbols that
summarize the subject-day.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cluster import Dendrogram, cut_dendrogram, cut_to_n, ward_cluster
from .distance import default_band_radius, envelope_matrix, pairwise_distances

__all__ = [
    "SymbolVector",
    "subsample_indices",
    "subsample_pulses",
    "ward_cluster",
    "cut_dendrogram",
    "kmeans_symbolize",
    "symbolize_day",
    "save_symbol_vectors",
    "load_symbol_vectors",
]


@dataclass
class SymbolVector:
    """Centroid/frequency summary of one subject-day's pulses."""

    centroids: np.ndarray  # (k, length)
    frequencies: np.ndarray  # (k,), sums to 1
    counts: np.ndarray  # (k,) member counts behind the frequencies
    subject_id: str = ""
    day_index: int = 0
    class_label: str = "Unlabeled"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=np.float64))
        self.frequencies = np.asarray(self.frequencies, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.k < 1:
            raise ValueError("symbol vector needs at least one symbol")
        if self.frequencies.shape != (self.k,) or self.counts.shape != (self.k,):
            raise ValueError("centroids, frequencies and counts disagree on k")
        if np.any(self.frequencies < 0):
            raise ValueError("frequencies must be nonnegative")
        if abs(float(self.frequencies.sum()) - 1.0) > 1e-9:
            raise ValueError("frequencies must sum to 1")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def length(self) -> int:
        return self.centroids.shape[1]

    @property
    def symbols(self) -> list[tuple[np.ndarray, float]]:
        return [(self.centroids[i], float(self.frequencies[i])) for i in range(self.k)]

    def day_key(self) -> tuple[str, int]:
        return (self.subject_id, self.day_index)


def subsample_indices(m: int, n_sub: int, seed) -> np.ndarray:
    """Sorted uniform sample without replacement of min(n_sub, m) indices."""
    if m < 1:
        raise ValueError("cannot subsample an empty pulse set")
    if n_sub < 1:
        raise ValueError("n_sub must be positive")
    rng = np.random.default_rng(seed)
    take = min(n_sub, m)
    return np.sort(rng.choice(m, size=take, replace=False))


def subsample_pulses(pulses, n_sub: int, seed):
    """Uniform subsample of a pulse sequence (list or matrix rows)."""
    idx = subsample_indices(len(pulses), n_sub, seed)
    if isinstance(pulses, np.ndarray):
        return pulses[idx]
    return [pulses[int(i)] for i in idx]


def _lb_sym_to_centroids(
    pulses: np.ndarray,
    up_p: np.ndarray,
    lo_p: np.ndarray,
    centroids: np.ndarray,
    band_radius: int,
) -> np.ndarray:
    """(m, k) symmetrized envelope-bound distances, vectorized over pulses."""
    up_c, lo_c = envelope_matrix(centroids, band_radius)
    m, k = pulses.shape[0], centroids.shape[0]
    out = np.empty((m, k))
    for c in range(k):
        over = np.clip(pulses - up_c[c], 0.0, None)
        under = np.clip(lo_c[c] - pulses, 0.0, None)
        d_pc = np.sum(over * over + under * under, axis=1)
        over = np.clip(centroids[c] - up_p, 0.0, None)
        under = np.clip(lo_p - centroids[c], 0.0, None)
        d_cp = np.sum(over * over + under * under, axis=1)
        out[:, c] = np.sqrt(np.maximum(d_pc, d_cp))
    return out


def _euclidean_to_centroids(pulses: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = pulses[:, None, :] - centroids[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def centroids_from_labels(pulses: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Pointwise-mean centroids of labeled rows; every label must occur."""
    cents = np.empty((k, pulses.shape[1]))
    for c in range(k):
        members = pulses[labels == c]
        if members.shape[0] == 0:
            raise ValueError(f"label {c} has no members")
        cents[c] = members.mean(axis=0)
    return cents


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignment: np.ndarray
    counts: np.ndarray
    objective_trace: list[float]
    iterations: int
    converged: bool


def kmeans_symbolize(
    pulses: np.ndarray,
    k: int,
    init_centroids: np.ndarray,
    max_iter: int = 100,
    metric: str = "lb_keogh",
    band_radius: int | None = None,
    seed=None,
) -> KMeansResult:
    """Lloyd iterations with pointwise-mean centroid updates.

    Assignment uses the symmetrized envelope bound (or plain Euclidean).
    Iteration stops on stable assignments, on max_iter, or as a safeguard
    when the objective would increase (possible because the mean update
    does not minimize the envelope bound); the safeguard keeps the best
    state, so the reported objective trace is always non-increasing.
    Empty clusters are reseeded with the pulse farthest from its centroid.
    The ``seed`` is accepted for interface stability; the algorithm is
    deterministic given the initial centroids.
    """
    P = np.ascontiguousarray(pulses, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("pulses must be a nonempty (m, length) matrix")
    m, length = P.shape
    if k < 1 or k > m:
        raise ValueError(f"k must be in [1, {m}], got {k}")
    if metric not in ("lb_keogh", "euclidean"):
        raise ValueError(f"unknown metric {metric!r}")
    r = default_band_radius(length) if band_radius is None else int(band_radius)
    centroids = np.atleast_2d(np.asarray(init_centroids, dtype=np.float64)).copy()
    if centroids.shape != (k, length):
        raise ValueError(f"init centroids must have shape {(k, length)}")

    if metric == "lb_keogh":
        up_p, lo_p = envelope_matrix(P, r)

    assignment: np.ndarray | None = None
    prev_objective = math.inf
    trace: list[float] = []
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        if metric == "lb_keogh":
            D = _lb_sym_to_centroids(P, up_p, lo_p, centroids, r)
        else:
            D = _euclidean_to_centroids(P, centroids)
        new_assignment = np.argmin(D, axis=1)
        d_own = D[np.arange(m), new_assignment]
        # reseed empties with the farthest pulse; a repair can orphan another
        # cluster's only member, so iterate (reseeded pulses are locked,
        # and k <= m bounds the passes)
        for _ in range(m):
            counts = np.bincount(new_assignment, minlength=k)
            empties = np.nonzero(counts == 0)[0]
            if empties.size == 0:
                break
            far = int(np.argmax(d_own))
            new_assignment[far] = empties[0]
            d_own[far] = -1.0
        objective = float(np.maximum(d_own, 0.0).sum())
        if objective > prev_objective + 1e-12 * max(1.0, prev_objective):
            # mean update degraded the bound-based objective: keep prior state
            break
        trace.append(objective)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            assignment = new_assignment
            converged = True
            break
        assignment = new_assignment
        prev_objective = objective
        centroids = centroids_from_labels(P, assignment, k)

    counts = np.bincount(assignment, minlength=k)
    return KMeansResult(
        centroids=centroids_from_labels(P, assignment, k),
        assignment=assignment,
        counts=counts,
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
    )


def symbolize_day(
    pulses: np.ndarray,
    subject_id: str = "",
    day_index: int = 0,
    class_label: str = "Unlabeled",
    subsample_n: int = 3000,
    cutoff_fraction: float = 0.30,
    band_radius_frac: float = 0.1,
    kmeans_max_iter: int = 100,
    metric: str = "lb_keogh",
    seed=0,
    k_override: int | None = None,
) -> SymbolVector:
    """Full symbolization of one subject-day's length-normalized pulses."""
    P = np.ascontiguousarray(pulses, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("pulses must be a nonempty (m, length) matrix")
    m, length = P.shape
    r = default_band_radius(length, band_radius_frac)

    idx = subsample_indices(m, subsample_n, seed)
    sub = P[idx]
    dm = pairwise_distances(sub, None, r)
    dend: Dendrogram = ward_cluster(dm)
    if k_override is not None:
        k = int(k_override)
        labels = cut_to_n(dend, k)
    else:
        k, labels = cut_dendrogram(dend, cutoff_fraction)
    init = centroids_from_labels(sub, labels, k)
    result = kmeans_symbolize(
        P, k, init, max_iter=kmeans_max_iter, metric=metric, band_radius=r
    )
    freqs = result.counts / m
    return SymbolVector(
        centroids=result.centroids,
        frequencies=freqs,
        counts=result.counts,
        subject_id=subject_id,
        day_index=day_index,
        class_label=class_label,
        metadata={
            "subsample": int(idx.size),
            "band_radius": r,
            "kmeans_iterations": result.iterations,
            "kmeans_converged": result.converged,
            "metric": metric,
        },
    )


# -- serialization ----------------------------------------------------------

_RECORD_MARK = "=== symbol-vector ==="


def save_symbol_vectors(path: str | Path, vectors: list[SymbolVector]) -> None:
    """Write symbol vectors as structured text; floats round-trip exactly."""
    with Path(path).open("w", newline="\n") as fh:
        for v in vectors:
            fh.write(_RECORD_MARK + "\n")
            fh.write(f"subject: {v.subject_id}\n")
            fh.write(f"day: {v.day_index}\n")
            fh.write(f"label: {v.class_label}\n")
            fh.write(f"k: {v.k}\n")
            fh.write(f"length: {v.length}\n")
            fh.write("counts: " + ",".join(str(int(c)) for c in v.counts) + "\n")
            fh.write(
                "frequencies: " + ",".join(repr(float(f)) for f in v.frequencies) + "\n"
            )
            fh.write("centroids:\n")
            for row in v.centroids:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_symbol_vectors(path: str | Path) -> list[SymbolVector]:
    lines = Path(path).read_text().splitlines()
    vectors: list[SymbolVector] = []
    i = 0
    while i < len(lines):
        if lines[i].strip() != _RECORD_MARK:
            i += 1
            continue
        i += 1
        fields: dict[str, str] = {}
        while i < len(lines) and lines[i].strip() != "centroids:":
            key, _, val = lines[i].partition(":")
            fields[key.strip()] = val.strip()
            i += 1
        i += 1  # skip 'centroids:'
        k = int(fields["k"])
        rows = []
        for _ in range(k):
            rows.append(np.array([float(x) for x in lines[i].split(",")]))
            i += 1
        vectors.append(
            SymbolVector(
                centroids=np.vstack(rows),
                frequencies=np.array([float(x) for x in fields["frequencies"].split(",")]),
                counts=np.array([int(x) for x in fields["counts"].split(",")]),
                subject_id=fields["subject"],
                day_index=int(fields["day"]),
                class_label=fields["label"],
            )
        )
    return vectors
