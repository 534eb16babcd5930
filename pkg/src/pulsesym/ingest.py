"""Recording and cohort-manifest ingestion.

Handles the two interchange formats (16-bit PCM mono WAV and one-value-per-
line CSV), frame-energy voicing detection with silence-duration profiling,
amplitude calibration from signal units to dbSPL, and per-segment amplitude
normalization.
"""

from __future__ import annotations

import logging
import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

log = logging.getLogger(__name__)

CLASS_LABELS = ("Control", "PreTx", "PostTx", "Unlabeled")

#: int16 full scale; sample 16384 maps to 0.5.
_PCM_SCALE = 32768.0

SILENCE_BINS = (">=1s", ">=1min", ">=10min", ">=1h")
_BIN_EDGES_S = (1.0, 60.0, 600.0, 3600.0)


@dataclass
class RawRecording:
    """One subject-day univariate signal plus provenance."""

    samples: np.ndarray
    sample_rate_hz: float
    subject_id: str = ""
    day_index: int = 0
    class_label: str = "Unlabeled"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("zero-length signal")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.class_label!r}")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class ManifestEntry:
    file: str
    subject_id: str
    day_index: int
    class_label: str = "Unlabeled"
    sample_rate_hz: float | None = None
    calibration: list[tuple[float, float]] | None = None


@dataclass
class CohortManifest:
    entries: list[ManifestEntry]
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        seen = set()
        for e in self.entries:
            if e.class_label not in CLASS_LABELS:
                raise ValueError(f"{e.file}: unknown class label {e.class_label!r}")
            key = (e.subject_id, e.day_index)
            if key in seen:
                raise ValueError(f"duplicate (subject, day) pair {key}")
            seen.add(key)

    def path_for(self, entry: ManifestEntry) -> Path:
        p = Path(entry.file)
        return p if p.is_absolute() else self.base_dir / p


@dataclass
class VoicedRegion:
    start_sample: int
    end_sample: int
    mean_level_db: float

    def __post_init__(self) -> None:
        if self.start_sample >= self.end_sample:
            raise ValueError("voiced region must have start < end")

    @property
    def length(self) -> int:
        return self.end_sample - self.start_sample


@dataclass
class SilenceProfile:
    """Counts of silent gaps by duration bin, plus bookkeeping totals."""

    bin_counts: dict[str, int] = field(default_factory=lambda: {b: 0 for b in SILENCE_BINS})
    subsecond_count: int = 0
    total_silent_samples: int = 0


# -- file loading ---------------------------------------------------------


def read_wav(path: str | Path) -> tuple[np.ndarray, float]:
    """Read 16-bit PCM mono WAV into float64 in [-1, 1)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise ValueError(f"{path}: multi-channel WAV not supported")
            if wf.getsampwidth() != 2:
                raise ValueError(f"{path}: only 16-bit PCM WAV is supported")
            rate = float(wf.getframerate())
            frames = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise ValueError(f"{path}: unreadable WAV ({exc})") from exc
    raw = np.frombuffer(frames, dtype="<i2")
    if raw.size == 0:
        raise ValueError(f"{path}: zero-length signal")
    return raw.astype(np.float64) / _PCM_SCALE, rate


def write_wav(path: str | Path, samples: np.ndarray, sample_rate_hz: float) -> None:
    """Write float samples in [-1, 1) as 16-bit PCM mono WAV."""
    pcm = np.clip(np.round(np.asarray(samples) * _PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(round(sample_rate_hz)))
        wf.writeframes(pcm.tobytes())


def read_sample_csv(path: str | Path) -> np.ndarray:
    """Read a single-column CSV of reals, one sample per line, no header."""
    path = Path(path)
    values = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from exc
    if not values:
        raise ValueError(f"{path}: zero-length signal")
    return np.array(values, dtype=np.float64)


def write_sample_csv(path: str | Path, samples: np.ndarray) -> None:
    with Path(path).open("w", newline="\n") as fh:
        for x in np.asarray(samples, dtype=np.float64):
            fh.write(repr(float(x)) + "\n")


def load_recording(path: str | Path, entry: ManifestEntry | None = None) -> RawRecording:
    """Load one recording; WAV sample rate wins over the manifest's."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        samples, rate = read_wav(path)
    else:
        samples = read_sample_csv(path)
        if entry is None or entry.sample_rate_hz is None:
            raise ValueError(f"{path}: CSV input requires a manifest sample_rate_hz")
        rate = float(entry.sample_rate_hz)
    meta = {"source_file": str(path)}
    if entry is None:
        return RawRecording(samples=samples, sample_rate_hz=rate, metadata=meta)
    return RawRecording(
        samples=samples,
        sample_rate_hz=rate,
        subject_id=entry.subject_id,
        day_index=entry.day_index,
        class_label=entry.class_label,
        metadata=meta,
    )


def load_manifest(path: str | Path) -> CohortManifest:
    """Parse a YAML cohort manifest (see README for the schema)."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ValueError(f"{path}: manifest parse error: {exc}") from exc
    if not isinstance(doc, dict) or "recordings" not in doc:
        raise ValueError(f"{path}: manifest must have a top-level 'recordings' list")
    entries = []
    for rec in doc["recordings"]:
        try:
            calibration = rec.get("calibration")
            if calibration is not None:
                calibration = [(float(r), float(db)) for r, db in calibration]
            entries.append(
                ManifestEntry(
                    file=str(rec["file"]),
                    subject_id=str(rec["subject"]),
                    day_index=int(rec["day"]),
                    class_label=str(rec.get("label", "Unlabeled")),
                    sample_rate_hz=(
                        float(rec["sample_rate_hz"]) if "sample_rate_hz" in rec else None
                    ),
                    calibration=calibration,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: bad manifest entry {rec!r}: {exc}") from exc
    manifest = CohortManifest(entries=entries, base_dir=path.parent)
    for e in manifest.entries:
        p = manifest.path_for(e)
        if not p.exists():
            raise ValueError(f"manifest references missing file {p}")
    return manifest


# -- voicing --------------------------------------------------------------


def frame_rms(samples: np.ndarray, frame_len: int) -> np.ndarray:
    """RMS of consecutive non-overlapping frames (last one may be partial)."""
    n = samples.size
    n_full = n // frame_len
    parts = []
    if n_full:
        full = samples[: n_full * frame_len].reshape(n_full, frame_len)
        parts.append(np.sqrt(np.mean(full * full, axis=1)))
    if n % frame_len:
        tail = samples[n_full * frame_len :]
        parts.append(np.array([math.sqrt(float(np.mean(tail * tail)))]))
    return np.concatenate(parts) if parts else np.zeros(0)


def _level_db(rms: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(rms)


def detect_voicing(
    rec: RawRecording,
    frame_ms: float = 50.0,
    level_threshold_db: float = -40.0,
    threshold_mode: str = "relative",
) -> tuple[list[VoicedRegion], SilenceProfile]:
    """Frame-energy voicing detection.

    A frame is voiced when its level is at or above the threshold; in the
    default "relative" mode the threshold is an offset from the loudest
    frame, which makes the voiced/silent partition (and therefore the
    silence profile) invariant under amplitude scaling.  "absolute" mode
    compares against the threshold directly (dbSPL for calibrated signals).

    Every sample ends up in exactly one voiced or silent region.  Silent
    gaps shorter than one frame are absorbed into an adjacent voiced
    region; gaps under one second are tallied separately; longer gaps are
    binned by duration.
    """
    if frame_ms <= 0:
        raise ValueError("frame_ms must be positive")
    if threshold_mode not in ("relative", "absolute"):
        raise ValueError(f"unknown threshold_mode {threshold_mode!r}")
    frame_len = max(1, int(round(frame_ms / 1000.0 * rec.sample_rate_hz)))
    rms = frame_rms(rec.samples, frame_len)
    levels = _level_db(rms)
    finite = levels[np.isfinite(levels)]
    if finite.size == 0:
        voiced_mask = np.zeros(levels.size, dtype=bool)
    elif threshold_mode == "relative":
        voiced_mask = levels >= finite.max() + level_threshold_db
    else:
        voiced_mask = levels >= level_threshold_db

    n = rec.samples.size
    # (is_voiced, start_sample, end_sample) runs over frames
    runs: list[list] = []
    for f, v in enumerate(voiced_mask):
        start = f * frame_len
        end = min(n, (f + 1) * frame_len)
        if runs and runs[-1][0] == bool(v):
            runs[-1][2] = end
        else:
            runs.append([bool(v), start, end])

    # absorb sub-frame silent runs into an adjacent voiced run
    absorbed = True
    while absorbed:
        absorbed = False
        for idx, (v, start, end) in enumerate(runs):
            if v or end - start >= frame_len:
                continue
            if idx > 0 and runs[idx - 1][0]:
                runs[idx - 1][2] = end
            elif idx + 1 < len(runs) and runs[idx + 1][0]:
                runs[idx + 1][1] = start
            else:
                continue
            del runs[idx]
            # re-merge adjacent voiced runs
            merged = [runs[0]]
            for r in runs[1:]:
                if r[0] and merged[-1][0]:
                    merged[-1][2] = r[2]
                else:
                    merged.append(r)
            runs = merged
            absorbed = True
            break

    regions: list[VoicedRegion] = []
    profile = SilenceProfile()
    for v, start, end in runs:
        if v:
            seg = rec.samples[start:end]
            level = float(_level_db(np.array([math.sqrt(float(np.mean(seg * seg)))]))[0])
            regions.append(VoicedRegion(start_sample=start, end_sample=end, mean_level_db=level))
        else:
            profile.total_silent_samples += end - start
            dur_s = (end - start) / rec.sample_rate_hz
            if dur_s < _BIN_EDGES_S[0]:
                profile.subsecond_count += 1
            elif dur_s < _BIN_EDGES_S[1]:
                profile.bin_counts[">=1s"] += 1
            elif dur_s < _BIN_EDGES_S[2]:
                profile.bin_counts[">=1min"] += 1
            elif dur_s < _BIN_EDGES_S[3]:
                profile.bin_counts[">=10min"] += 1
            else:
                profile.bin_counts[">=1h"] += 1
    return regions, profile


# -- dbSPL calibration ----------------------------------------------------


@dataclass(frozen=True)
class SplCalibration:
    """Affine fit from log10(signal-unit RMS) to dbSPL."""

    slope: float
    intercept: float

    @classmethod
    def fit(cls, pairs: list[tuple[float, float]]) -> "SplCalibration":
        if len(pairs) < 2:
            raise ValueError("calibration needs at least 2 (rms, dbSPL) pairs")
        rms = np.array([p[0] for p in pairs], dtype=np.float64)
        db = np.array([p[1] for p in pairs], dtype=np.float64)
        if np.any(rms <= 0):
            raise ValueError("calibration RMS values must be positive")
        x = np.log10(rms)
        if np.ptp(x) == 0:
            raise ValueError("degenerate calibration: all RMS abscissae equal")
        slope, intercept = np.polyfit(x, db, 1)
        return cls(slope=float(slope), intercept=float(intercept))

    def level_for_rms(self, rms: float) -> float:
        if rms <= 0:
            raise ValueError("rms must be positive")
        return self.slope * math.log10(rms) + self.intercept

    def rms_for_level(self, level_db: float) -> float:
        """Inverse of the affine fit, back to signal-unit RMS."""
        return 10.0 ** ((level_db - self.intercept) / self.slope)


def scale_to_dbspl(
    rec: RawRecording,
    calibration: list[tuple[float, float]],
    frame_ms: float = 50.0,
) -> RawRecording:
    """Rescale amplitudes so frame levels read directly in dbSPL.

    Each frame is gained so that 20*log10 of its new RMS equals the
    calibrated level of its original RMS.  The fit's slope/intercept are
    recorded in the result's metadata.
    """
    cal = SplCalibration.fit(calibration)
    frame_len = max(1, int(round(frame_ms / 1000.0 * rec.sample_rate_hz)))
    out = rec.samples.copy()
    n = out.size
    for f in range(math.ceil(n / frame_len)):
        sl = slice(f * frame_len, min(n, (f + 1) * frame_len))
        rms = math.sqrt(float(np.mean(out[sl] * out[sl])))
        if rms <= 0:
            continue
        level = cal.level_for_rms(rms)
        out[sl] *= 10.0 ** (level / 20.0) / rms
    meta = dict(rec.metadata)
    meta["spl_fit"] = {"slope": cal.slope, "intercept": cal.intercept}
    return RawRecording(
        samples=out,
        sample_rate_hz=rec.sample_rate_hz,
        subject_id=rec.subject_id,
        day_index=rec.day_index,
        class_label=rec.class_label,
        metadata=meta,
    )


# -- segment normalization -------------------------------------------------

Z_SCORE = "zscore"
DBSPL_SCALED = "dbspl"


def normalize_segments(segments: list, mode: str) -> list:
    """Amplitude-normalize pulse segments.

    ``zscore`` maps each segment to mean 0, variance 1 (population), used
    for comparisons across subjects; constant segments are dropped with a
    logged count.  ``dbspl`` leaves values as they are (the scaling already
    happened at the signal level), used within one subject.
    """
    if mode == DBSPL_SCALED:
        return list(segments)
    if mode != Z_SCORE:
        raise ValueError(f"unknown normalization mode {mode!r}")
    out = []
    dropped = 0
    for seg in segments:
        v = np.asarray(seg.values, dtype=np.float64)
        mean = v.mean()
        var = v.var()
        if var <= 0:
            dropped += 1
            continue
        out.append(seg.with_values((v - mean) / math.sqrt(var)))
    if dropped:
        log.info("normalize_segments: dropped %d constant segment(s)", dropped)
    return out
