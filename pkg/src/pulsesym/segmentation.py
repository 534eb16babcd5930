"""Peak-to-peak pulse segmentation of voiced regions.

Peaks are amplitude maxima filtered by topographic prominence with greedy
highest-first minimum-distance suppression, then corrected against a pitch
estimate: implausibly close peaks are removed and long gaps get synthetic
peaks re-inserted near local maxima.  Segments run from one corrected peak
to the next (half-open), then get linearly resampled to a common per-day
length.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import peak_prominences

#: Normalized-autocorrelation peak below this is a dubious pitch estimate.
LOW_CONFIDENCE = 0.3


@dataclass
class PulseSegment:
    """One variable-length peak-to-peak segment of a subject-day."""

    values: np.ndarray
    subject_id: str = ""
    day_index: int = 0
    start_sample: int = 0
    raw_length: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size < 2:
            raise ValueError("pulse segment needs at least 2 samples")
        if self.raw_length == 0:
            self.raw_length = self.values.size

    def with_values(self, values: np.ndarray) -> "PulseSegment":
        return replace(self, values=np.asarray(values, dtype=np.float64))

    @property
    def source(self) -> tuple[str, int, int]:
        return (self.subject_id, self.day_index, self.start_sample)


@dataclass(frozen=True)
class PitchEstimate:
    period_samples: float
    valid_range: tuple[float, float]
    confidence: float = 1.0

    def __post_init__(self) -> None:
        lo, hi = self.valid_range
        if not lo <= self.period_samples <= hi:
            raise ValueError(
                f"period {self.period_samples} outside valid range [{lo}, {hi}]"
            )

    @property
    def low_confidence(self) -> bool:
        return self.confidence < LOW_CONFIDENCE


def detect_peaks(
    region: np.ndarray, min_prominence: float, min_distance_samples: int
) -> np.ndarray:
    """Strict local maxima with prominence and min-distance filtering.

    Suppression is greedy highest-first; among equal heights the earlier
    peak wins.  Returned indices are sorted ascending.
    """
    x = np.asarray(region, dtype=np.float64)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("region must have at least 3 samples")
    if min_distance_samples < 1:
        raise ValueError("min_distance_samples must be >= 1")
    cand = np.nonzero((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:]))[0] + 1
    if cand.size == 0:
        return cand
    prom = peak_prominences(x, cand)[0]
    cand = cand[prom >= min_prominence]
    if cand.size == 0:
        return cand
    # highest first, ties by lower index; nearest kept neighbors via bisect
    order = np.lexsort((cand, -x[cand]))
    kept: list[int] = []
    for idx in cand[order]:
        idx = int(idx)
        pos = bisect.bisect_left(kept, idx)
        if pos > 0 and idx - kept[pos - 1] < min_distance_samples:
            continue
        if pos < len(kept) and kept[pos] - idx < min_distance_samples:
            continue
        kept.insert(pos, idx)
    return np.array(kept, dtype=np.int64)


def normalized_autocorr(y: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation of the mean-removed signal, per lag.

    r[tau] correlates y[:n-tau] with y[tau:], normalized by both windows'
    energies, so a perfectly periodic signal scores 1.0 at its period.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    y = y - y.mean()
    nfft = 1 << int(n * 2 - 1).bit_length()
    spec = np.fft.rfft(y, nfft)
    raw = np.fft.irfft(spec * np.conj(spec), nfft)[:n]
    sq = np.concatenate(([0.0], np.cumsum(y * y)))
    total = sq[-1]
    lags = np.arange(n)
    head = sq[n - lags] - sq[0]
    tail = total - sq[lags]
    denom = np.sqrt(head * tail)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, raw / denom, 0.0)
    return r


def estimate_pitch(
    region: np.ndarray,
    valid_range: tuple[float, float],
    octave_tolerance: float = 0.1,
) -> PitchEstimate:
    """Pitch period from the normalized autocorrelation maximum in range.

    Among autocorrelation peaks scoring within ``octave_tolerance`` of the
    maximum, the smallest lag wins.  A periodic signal correlates at every
    multiple of its period, and sample noise can push a multiple marginally
    above the true period's score; breaking such near-ties upward would
    double the segmentation period.
    """
    y = np.asarray(region, dtype=np.float64)
    lo, hi = valid_range
    if not 0 < lo <= hi:
        raise ValueError("valid_range must satisfy 0 < min <= max")
    if y.size < 2 * hi:
        raise ValueError("insufficient data for pitch")
    r = normalized_autocorr(y)
    lag_lo = max(1, int(math.ceil(lo)))
    lag_hi = min(y.size - 1, int(math.floor(hi)))
    if lag_hi < lag_lo:
        raise ValueError("valid_range contains no integer lag")
    window = r[lag_lo : lag_hi + 1]
    rmax = float(window.max())
    margin = max(octave_tolerance * abs(rmax), 1e-9)
    is_peak = np.zeros(r.size, dtype=bool)
    is_peak[1:-1] = (
        (r[1:-1] >= r[:-2])
        & (r[1:-1] >= r[2:])
        & ((r[1:-1] > r[:-2]) | (r[1:-1] > r[2:]))
    )
    near_max = window >= rmax - margin
    candidates = near_max & is_peak[lag_lo : lag_hi + 1]
    if candidates.any():
        best = int(np.argmax(candidates))
    else:
        best = int(np.argmax(window >= rmax - 1e-9))
    period = float(lag_lo + best)
    return PitchEstimate(
        period_samples=period, valid_range=(lo, hi), confidence=float(window[best])
    )


def correct_peaks(
    region: np.ndarray,
    peaks: np.ndarray,
    pitch: PitchEstimate,
    tolerance: float = 0.3,
) -> np.ndarray:
    """Remove spurious peaks and re-insert missing ones using the pitch.

    A peak closer than (1 - tolerance) periods to its predecessor is
    spurious (the earlier one is kept).  A gap spanning two or more
    inferred periods gets synthetic peaks, each snapped to the local
    maximum of a window around its inferred position; windows are sized so
    that all output gaps stay within
    [(1 - tolerance) * period, 2 * (1 + tolerance) * period].
    """
    if not 0.0 < tolerance < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    x = np.asarray(region, dtype=np.float64)
    p = np.asarray(peaks, dtype=np.int64)
    if p.size and np.any(np.diff(p) <= 0):
        raise ValueError("peaks must be sorted ascending")
    if p.size < 2:
        return p.copy()
    period = pitch.period_samples
    lo_gap = (1.0 - tolerance) * period
    hi_gap = 2.0 * (1.0 + tolerance) * period

    kept = [int(p[0])]
    for q in p[1:]:
        if q - kept[-1] >= lo_gap:
            kept.append(int(q))

    out: list[int] = []
    for a, b in zip(kept[:-1], kept[1:]):
        out.append(a)
        g = float(b - a)
        k = int(math.floor(g / period + 0.5))
        if lo_gap + 1.0 > 0:
            k = min(k, int(math.floor(g / (lo_gap + 1.0))))
        if k < 2:
            continue
        s = g / k
        if s + 1.0 > hi_gap:
            continue
        delta = max(0.0, min(s - lo_gap, hi_gap - s) / 2.0 - 0.5)
        for i in range(1, k):
            ideal = a + i * s
            w_lo = int(math.ceil(ideal - delta))
            w_hi = int(math.floor(ideal + delta))
            if w_lo > w_hi:
                pos = int(round(ideal))
            else:
                w_lo = max(w_lo, 0)
                w_hi = min(w_hi, x.size - 1)
                pos = w_lo + int(np.argmax(x[w_lo : w_hi + 1]))
            out.append(pos)
    out.append(kept[-1])
    return np.array(out, dtype=np.int64)


def segment_pulses(
    region: np.ndarray,
    peaks: np.ndarray,
    subject_id: str = "",
    day_index: int = 0,
    offset: int = 0,
) -> list[PulseSegment]:
    """Cut [peak_i, peak_{i+1}) segments; fewer than 2 peaks yields none."""
    x = np.asarray(region, dtype=np.float64)
    p = np.asarray(peaks, dtype=np.int64)
    if p.size < 2:
        return []
    segments = []
    for a, b in zip(p[:-1], p[1:]):
        if b - a < 2:
            continue
        segments.append(
            PulseSegment(
                values=x[a:b].copy(),
                subject_id=subject_id,
                day_index=day_index,
                start_sample=offset + int(a),
                raw_length=int(b - a),
            )
        )
    return segments


def resample_linear(values: np.ndarray, target_length: int) -> np.ndarray:
    """Resample by linear interpolation on a uniform grid with both endpoints."""
    v = np.asarray(values, dtype=np.float64)
    if target_length < 2:
        raise ValueError("target_length must be >= 2")
    if v.size == target_length:
        return v.copy()
    grid = np.linspace(0.0, v.size - 1.0, target_length)
    return np.interp(grid, np.arange(v.size), v)


def length_normalize(
    segments: list[PulseSegment],
    target_length: int | str = "auto",
    cap: int | None = None,
) -> list[PulseSegment]:
    """Up-sample all segments to a common length (default: the day's max)."""
    if not segments:
        raise ValueError("no segments to normalize")
    if target_length == "auto":
        target = max(s.values.size for s in segments)
        if cap is not None:
            target = min(target, cap)
    else:
        target = int(target_length)
    if target < 2:
        raise ValueError("target_length must be >= 2")
    return [s.with_values(resample_linear(s.values, target)) for s in segments]


# -- per-day orchestration --------------------------------------------------


@dataclass
class SegmentationParams:
    """Knobs for turning voiced regions into pulse segments."""

    peak_prominence_frac: float = 0.25  # of the region's amplitude range
    min_distance_frac: float = 0.5  # of the minimum pitch period
    pitch_fmin_hz: float = 70.0
    pitch_fmax_hz: float = 1000.0
    correction_tolerance: float = 0.3
    pitch_scope: str = "region"  # "region" (day-median fallback) or "day"


@dataclass
class SegmentationDiagnostics:
    region_periods: list[float] = field(default_factory=list)
    low_confidence_regions: int = 0
    fallback_regions: int = 0


def segment_day(
    rec,
    regions,
    params: SegmentationParams | None = None,
) -> tuple[list[PulseSegment], SegmentationDiagnostics]:
    """Segment every voiced region of one recording, in region order.

    Pitch is estimated per region; regions that are too short or score a
    low-confidence autocorrelation fall back to the day's median confident
    period (or to the middle of the valid range if no region is confident).
    """
    params = params or SegmentationParams()
    sr = rec.sample_rate_hz
    min_period = sr / params.pitch_fmax_hz
    max_period = sr / params.pitch_fmin_hz
    valid = (min_period, max_period)
    min_distance = max(1, int(round(params.min_distance_frac * min_period)))

    slices = [rec.samples[r.start_sample : r.end_sample] for r in regions]
    estimates: list[PitchEstimate | None] = []
    for sl in slices:
        try:
            est = estimate_pitch(sl, valid)
        except ValueError:
            est = None
        estimates.append(est)

    confident = [e.period_samples for e in estimates if e is not None and not e.low_confidence]
    if confident:
        fallback_period = float(np.median(confident))
    else:
        fallback_period = math.sqrt(min_period * max_period)
    day_scope = params.pitch_scope == "day"

    diags = SegmentationDiagnostics()
    segments: list[PulseSegment] = []
    for region, sl, est in zip(regions, slices, estimates):
        if sl.size < 3:
            continue
        if day_scope:
            period = fallback_period
        elif est is None:
            period = fallback_period
            diags.fallback_regions += 1
        elif est.low_confidence:
            period = fallback_period
            diags.low_confidence_regions += 1
        else:
            period = est.period_samples
        diags.region_periods.append(period)
        prominence = params.peak_prominence_frac * float(np.ptp(sl))
        peaks = detect_peaks(sl, prominence, min_distance)
        pitch = PitchEstimate(
            period_samples=min(max(period, min_period), max_period), valid_range=valid
        )
        corrected = correct_peaks(sl, peaks, pitch, params.correction_tolerance)
        segments.extend(
            segment_pulses(
                sl,
                corrected,
                subject_id=rec.subject_id,
                day_index=rec.day_index,
                offset=region.start_sample,
            )
        )
    return segments, diags
