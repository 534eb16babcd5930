"""Comparison feature sets: windowed acoustic features and their day means.

Recordings are cut into five-minute windows of non-overlapping 50 ms
frames; each frame contributes a level (dB of frame RMS) and, when voiced
and periodic enough, a phonation frequency from the autocorrelation pitch
estimator.  Eleven statistics per measure give a fixed 22-feature vector
per window (VAF); the feature-wise mean over a day's windows gives the MAF
vector.  Window vectors are clustered with seeded k-means, day vectors
with the Ward engine, both on column-standardized features.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .cluster import cut_to_n, kmeans_euclidean, ward_cluster
from .evaluate import ClusterAssignment
from .ingest import RawRecording, frame_rms
from .matrix import DayId
from .segmentation import estimate_pitch

#: Fixed feature order; the first 11 summarize frame f0 (Hz), the rest frame
#: level (dB).  Correlation pruning (|r| > 0.95, keep the lower index) is a
#: no-op on this base set by construction.
FEATURE_NAMES = (
    "f0_mean",
    "f0_std",
    "f0_skew",
    "f0_kurtosis",
    "f0_p5",
    "f0_p25",
    "f0_p50",
    "f0_p75",
    "f0_p95",
    "f0_pitched_fraction",
    "f0_confidence_mean",
    "spl_mean",
    "spl_std",
    "spl_skew",
    "spl_kurtosis",
    "spl_p5",
    "spl_p25",
    "spl_p50",
    "spl_p75",
    "spl_p95",
    "spl_voiced_fraction",
    "spl_frame_count",
)

CORRELATION_PRUNE_THRESHOLD = 0.95


@dataclass
class FeatureVector:
    values: np.ndarray
    subject_id: str = ""
    day_index: int = 0
    class_label: str = "Unlabeled"
    window_index: int | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(FEATURE_NAMES),):
            raise ValueError(f"feature vector must have {len(FEATURE_NAMES)} values")

    def day_key(self) -> tuple[str, int]:
        return (self.subject_id, self.day_index)


def _moment_stats(x: np.ndarray) -> list[float]:
    """mean, std, skew, kurtosis, p5..p95; zeros when undefined."""
    if x.size == 0:
        return [0.0] * 9
    mean = float(x.mean())
    var = float(x.var())
    std = math.sqrt(var)
    if var > 0:
        z = (x - mean) / std
        skew = float(np.mean(z**3))
        kurt = float(np.mean(z**4))
    else:
        skew = 0.0
        kurt = 0.0
    p5, p25, p50, p75, p95 = np.percentile(x, [5, 25, 50, 75, 95])
    return [mean, std, skew, kurt, float(p5), float(p25), float(p50), float(p75), float(p95)]


def compute_vaf(
    rec: RawRecording,
    window_s: float = 300.0,
    frame_ms: float = 50.0,
    level_threshold_db: float = -40.0,
    threshold_mode: str = "relative",
    pitch_fmin_hz: float = 70.0,
    pitch_fmax_hz: float = 1000.0,
) -> list[FeatureVector]:
    """One 22-feature vector per window; windows with no voiced frame drop."""
    sr = rec.sample_rate_hz
    window_len = int(round(window_s * sr))
    if rec.samples.size <= window_len:
        raise ValueError("recording must be longer than one window")
    frame_len = max(1, int(round(frame_ms / 1000.0 * sr)))
    rms = frame_rms(rec.samples, frame_len)
    with np.errstate(divide="ignore"):
        levels = 20.0 * np.log10(rms)
    finite = levels[np.isfinite(levels)]
    if finite.size == 0:
        raise ValueError("no voiced frames in the whole recording")
    if threshold_mode == "relative":
        threshold = finite.max() + level_threshold_db
    else:
        threshold = level_threshold_db
    voiced = levels >= threshold
    if not voiced.any():
        raise ValueError("no voiced frames in the whole recording")

    min_period = sr / pitch_fmax_hz
    max_period = sr / pitch_fmin_hz
    f0 = np.full(levels.size, np.nan)
    confidence = np.zeros(levels.size)
    for f in np.nonzero(voiced)[0]:
        frame = rec.samples[f * frame_len : (f + 1) * frame_len]
        try:
            est = estimate_pitch(frame, (min_period, max_period))
        except ValueError:
            continue
        confidence[f] = est.confidence
        if not est.low_confidence:
            f0[f] = sr / est.period_samples

    frames_per_window = max(1, int(round(window_len / frame_len)))
    vectors = []
    n_windows = math.ceil(levels.size / frames_per_window)
    for w in range(n_windows):
        sl = slice(w * frames_per_window, min(levels.size, (w + 1) * frames_per_window))
        v_mask = voiced[sl]
        if not v_mask.any():
            continue
        lv = levels[sl][v_mask]
        fw = f0[sl]
        cw = confidence[sl]
        pitched = np.isfinite(fw)
        n_frames = v_mask.size
        f0_vals = fw[pitched]
        values = (
            _moment_stats(f0_vals)
            + [pitched.sum() / n_frames, float(cw[v_mask].mean())]
            + _moment_stats(lv)
            + [v_mask.sum() / n_frames, float(n_frames)]
        )
        vectors.append(
            FeatureVector(
                values=np.array(values),
                subject_id=rec.subject_id,
                day_index=rec.day_index,
                class_label=rec.class_label,
                window_index=w,
            )
        )
    if not vectors:
        raise ValueError("no voiced frames in the whole recording")
    return vectors


def compute_maf(windows: list[FeatureVector]) -> FeatureVector:
    """Feature-wise mean over one subject-day's windows."""
    if not windows:
        raise ValueError("no windows to average")
    first = windows[0]
    stack = np.vstack([w.values for w in windows])
    return FeatureVector(
        values=stack.mean(axis=0),
        subject_id=first.subject_id,
        day_index=first.day_index,
        class_label=first.class_label,
        window_index=None,
    )


def prune_correlated(
    matrix: np.ndarray, threshold: float = CORRELATION_PRUNE_THRESHOLD
) -> list[int]:
    """Indices kept after dropping one of each |r| > threshold pair.

    Deterministic: columns are scanned in order and a column is dropped
    when it correlates too strongly with any earlier kept column.
    Constant columns have undefined correlation and are kept.
    """
    m = np.asarray(matrix, dtype=np.float64)
    kept: list[int] = []
    for j in range(m.shape[1]):
        col = m[:, j]
        drop = False
        for i in kept:
            other = m[:, i]
            if col.std() == 0 or other.std() == 0:
                continue
            r = float(np.corrcoef(other, col)[0, 1])
            if abs(r) > threshold:
                drop = True
                break
        if not drop:
            kept.append(j)
    return kept


def _standardize(matrix: np.ndarray) -> np.ndarray:
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    std[std == 0] = 1.0
    return (matrix - mean) / std


def _majority_day_labels(
    vectors: list[FeatureVector], window_labels: np.ndarray
) -> tuple[list[DayId], np.ndarray]:
    """Aggregate window assignments to their subject-day by majority.

    Ties break toward the lower cluster index.
    """
    by_day: dict[tuple[str, int], list[int]] = {}
    day_ids: dict[tuple[str, int], DayId] = {}
    for vec, lab in zip(vectors, window_labels):
        key = vec.day_key()
        by_day.setdefault(key, []).append(int(lab))
        day_ids.setdefault(
            key,
            DayId(subject_id=vec.subject_id, day_index=vec.day_index, class_label=vec.class_label),
        )
    ids = [day_ids[k] for k in sorted(by_day)]
    labels = np.array(
        [min(Counter(by_day[k]).items(), key=lambda kv: (-kv[1], kv[0]))[0] for k in sorted(by_day)],
        dtype=np.int64,
    )
    return ids, labels


def cluster_vaf(vectors: list[FeatureVector], n: int, seed: int = 0) -> ClusterAssignment:
    """Seeded k-means over window vectors, majority-aggregated to days."""
    if n < 1 or n > len(vectors):
        raise ValueError(f"n must be in [1, {len(vectors)}]")
    X = _standardize(np.vstack([v.values for v in vectors]))
    window_labels, _ = kmeans_euclidean(X, n, seed=seed)
    ids, labels = _majority_day_labels(vectors, window_labels)
    return ClusterAssignment(n=n, ids=ids, labels=labels)


def cluster_maf(vectors: list[FeatureVector], n: int) -> ClusterAssignment:
    """Ward over Euclidean distances between day vectors."""
    if n < 1 or n > len(vectors):
        raise ValueError(f"n must be in [1, {len(vectors)}]")
    X = _standardize(np.vstack([v.values for v in vectors]))
    diff = X[:, None, :] - X[None, :, :]
    dists = np.sqrt(np.sum(diff * diff, axis=2))
    dend = ward_cluster(dists)
    labels = cut_to_n(dend, n)
    ids = [
        DayId(subject_id=v.subject_id, day_index=v.day_index, class_label=v.class_label)
        for v in vectors
    ]
    return ClusterAssignment(n=n, ids=ids, labels=labels)
