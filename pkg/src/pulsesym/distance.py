"""Distance kernels between equal-length sequences.

Full DTW (used as the reference distance and test oracle) and the Keogh
envelope lower bound (the cheap surrogate used everywhere in production).
The lower bound is asymmetric by definition, so the pipeline works with a
symmetrized form: ``max(lb(a, env(b)), lb(b, env(a)))``.  Taking the max of
two lower bounds preserves the lower-bound property while giving downstream
clustering a symmetric dissimilarity.

Note: the symmetrized bound is *not* a metric (no triangle inequality);
nothing downstream relies on one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.ndimage import maximum_filter1d, minimum_filter1d


def default_band_radius(length: int, frac: float = 0.1) -> int:
    """Sakoe-Chiba style band radius: ceil(frac * length)."""
    if length < 1:
        raise ValueError("length must be positive")
    return int(math.ceil(frac * length))


@dataclass(frozen=True)
class Envelope:
    """Sliding min/max envelope of a sequence for a given band radius.

    upper[i] = max(source[i-r : i+r+1]) and lower[i] the analogous min,
    with the window clamped at the sequence bounds.
    """

    upper: np.ndarray
    lower: np.ndarray
    band_radius: int

    def __len__(self) -> int:
        return len(self.upper)


def build_envelope(q: np.ndarray, band_radius: int) -> Envelope:
    """Compute the Keogh envelope of ``q`` with the given band radius.

    Linear time via scipy's streaming min/max filters; r = 0 degenerates to
    upper == lower == q.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("envelope source must be a nonempty 1-d sequence")
    if band_radius < 0:
        raise ValueError("band_radius must be nonnegative")
    if band_radius == 0:
        return Envelope(upper=q.copy(), lower=q.copy(), band_radius=0)
    size = 2 * band_radius + 1
    upper = maximum_filter1d(q, size=size, mode="nearest")
    lower = minimum_filter1d(q, size=size, mode="nearest")
    return Envelope(upper=upper, lower=lower, band_radius=band_radius)


def envelope_matrix(seqs: np.ndarray, band_radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise envelopes of a (n, length) matrix, as (upper, lower) matrices."""
    seqs = np.asarray(seqs, dtype=np.float64)
    if seqs.ndim != 2:
        raise ValueError("expected a 2-d matrix of sequences")
    if band_radius == 0:
        return seqs.copy(), seqs.copy()
    size = 2 * band_radius + 1
    upper = maximum_filter1d(seqs, size=size, axis=1, mode="nearest")
    lower = minimum_filter1d(seqs, size=size, axis=1, mode="nearest")
    return upper, lower


def lb_keogh(c: np.ndarray, env: Envelope) -> float:
    """Envelope lower bound of banded DTW between ``c`` and the envelope's source.

    sqrt of the summed squared excursions of ``c`` outside [lower, upper].
    Requires equal lengths.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.shape != env.upper.shape:
        raise ValueError(
            f"length mismatch: candidate has {c.shape[0]}, envelope has {env.upper.shape[0]}"
        )
    over = np.clip(c - env.upper, 0.0, None)
    under = np.clip(env.lower - c, 0.0, None)
    return float(np.sqrt(np.sum(over * over + under * under)))


def lb_keogh_sym(a: np.ndarray, b: np.ndarray, band_radius: int) -> float:
    """Symmetrized lower bound: max of both query/candidate directions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("sequences must have equal length")
    d_ab = lb_keogh(a, build_envelope(b, band_radius))
    d_ba = lb_keogh(b, build_envelope(a, band_radius))
    return max(d_ab, d_ba)


@njit(cache=True)
def _dtw_cost(a, b, r):  # pragma: no cover - exercised through dtw()
    n = a.shape[0]
    m = b.shape[0]
    inf = np.inf
    acc = np.full((n + 1, m + 1), inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        jlo = i - r if i - r > 1 else 1
        jhi = i + r if i + r < m else m
        for j in range(jlo, jhi + 1):
            d = a[i - 1] - b[j - 1]
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = d * d + best
    return acc[n, m]


def dtw(a: np.ndarray, b: np.ndarray, band_radius: int | None = None) -> float:
    """Dynamic time warping distance with squared local cost.

    Minimum cumulative squared difference over monotone warping paths with
    steps {(1,0), (0,1), (1,1)} and aligned endpoints, square-rooted at the
    end.  ``band_radius=None`` means unconstrained; otherwise cells are
    restricted to |i - j| <= band_radius.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise ValueError("dtw requires two nonempty 1-d sequences")
    if band_radius is None:
        r = max(a.size, b.size)
    else:
        if band_radius < 0:
            raise ValueError("band_radius must be nonnegative")
        if abs(a.size - b.size) > band_radius:
            raise ValueError(
                f"band radius {band_radius} too narrow for length difference "
                f"|{a.size} - {b.size}|"
            )
        r = int(band_radius)
    return float(np.sqrt(_dtw_cost(a, b, r)))


def pairwise_distances(
    a_set: np.ndarray, b_set: np.ndarray | None = None, band_radius: int | None = None
) -> np.ndarray:
    """Symmetrized lower-bound distances between two sets of equal-length rows.

    Entry (i, j) is max(lb(a_i, env(b_j)), lb(b_j, env(a_i))).  With
    ``b_set=None`` (or the same array) the result is symmetric with a zero
    diagonal.  Rows must all share one length.
    """
    A = np.ascontiguousarray(a_set, dtype=np.float64)
    same = b_set is None or b_set is a_set
    B = A if same else np.ascontiguousarray(b_set, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("expected nonempty 2-d matrices of sequences")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"mixed lengths: {A.shape[1]} vs {B.shape[1]}")
    length = A.shape[1]
    r = default_band_radius(length) if band_radius is None else int(band_radius)

    up_a, lo_a = envelope_matrix(A, r)
    if same:
        up_b, lo_b = up_a, lo_a
    else:
        up_b, lo_b = envelope_matrix(B, r)

    out = np.empty((A.shape[0], B.shape[0]), dtype=np.float64)
    for i in range(A.shape[0]):
        # a_i against every b envelope
        over = np.clip(A[i] - up_b, 0.0, None)
        under = np.clip(lo_b - A[i], 0.0, None)
        d_ab = np.sum(over * over + under * under, axis=1)
        # every b against a_i's envelope
        over = np.clip(B - up_a[i], 0.0, None)
        under = np.clip(lo_a[i] - B, 0.0, None)
        d_ba = np.sum(over * over + under * under, axis=1)
        out[i] = np.sqrt(np.maximum(d_ab, d_ba))
    if same:
        np.fill_diagonal(out, 0.0)
    return out
