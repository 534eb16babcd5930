"""Symbolic mismatch distance between subject-day symbol vectors.

The distance between two symbol vectors is the frequency-weighted sum of
pairwise centroid distances: W = sum over (a, b) of f_a * f_b * d(s_a, s_b)
with d the symmetrized envelope bound.  Note the self-mismatch of a
multi-symbol vector is positive (cross terms), so the matrix diagonal is
zeroed by convention only.
"""

from __future__ import annotations

import numpy as np

from .distance import default_band_radius, pairwise_distances
from .matrix import DayId, DistanceMatrix
from .segmentation import resample_linear
from .symbolize import SymbolVector


def _common_length(v_i: SymbolVector, v_j: SymbolVector) -> tuple[np.ndarray, np.ndarray]:
    """Resample both centroid sets to the longer of the two lengths.

    Days normalize to their own maximum pulse length, so centroids from
    different days can disagree; comparing at the longer length preserves
    shape for both.
    """
    target = max(v_i.length, v_j.length)
    if v_i.length == v_j.length:
        return v_i.centroids, v_j.centroids
    a = np.vstack([resample_linear(row, target) for row in v_i.centroids])
    b = np.vstack([resample_linear(row, target) for row in v_j.centroids])
    return a, b


def symbolic_mismatch(
    v_i: SymbolVector, v_j: SymbolVector, band_radius_frac: float = 0.1
) -> float:
    """Frequency-weighted aggregate centroid distance between two vectors."""
    if v_i.k == 0 or v_j.k == 0:
        raise ValueError("symbol vectors must be nonempty")
    a, b = _common_length(v_i, v_j)
    r = default_band_radius(a.shape[1], band_radius_frac)
    d = pairwise_distances(a, b, r)
    return float(v_i.frequencies @ d @ v_j.frequencies)


def mismatch_matrix(
    vectors: list[SymbolVector], band_radius_frac: float = 0.1
) -> DistanceMatrix:
    """All-pairs mismatch over subject-days, zero diagonal by convention."""
    if len(vectors) < 2:
        raise ValueError("need at least 2 symbol vectors")
    q = len(vectors)
    values = np.zeros((q, q))
    for i in range(q):
        for j in range(i + 1, q):
            w = symbolic_mismatch(vectors[i], vectors[j], band_radius_frac)
            values[i, j] = w
            values[j, i] = w
    ids = [
        DayId(subject_id=v.subject_id, day_index=v.day_index, class_label=v.class_label)
        for v in vectors
    ]
    return DistanceMatrix(
        ids=ids,
        values=values,
        kind="Mismatch",
        metadata={"band_radius_frac": band_radius_frac, "centroid_resampling": "to-longer"},
    )
