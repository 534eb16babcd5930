"""Pipeline configuration: every tunable in one validated dataclass.

Defaults follow the reference analysis setup: 3000-pulse subsamples, a 30%
dendrogram cutoff, 5000 random-distance trials, 18 clusters for
inter-subject groupings and 3 for intra-patient ones, sweeps over 2..40
(inter) and 2..10 (intra).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

VALID_COMPARISON_KINDS = ("inter", "intra")


@dataclass
class PipelineConfig:
    # voicing detection
    voicing_frame_ms: float = 50.0
    voicing_threshold_db: float = -40.0
    voicing_threshold_mode: str = "relative"  # "relative" to loudest frame | "absolute"

    # peak detection / correction
    peak_prominence_frac: float = 0.25  # of each region's amplitude range
    peak_min_distance_frac: float = 0.5  # of the minimum pitch period
    pitch_fmin_hz: float = 70.0
    pitch_fmax_hz: float = 1000.0
    pitch_scope: str = "region"  # "region" | "day"
    correction_tolerance: float = 0.3

    # amplitude normalization (inter-subject vs intra-patient switch)
    inter_normalization: str = "zscore"
    intra_normalization: str = "dbspl"

    # length normalization
    target_length: int | str = "auto"
    target_length_cap: int | None = None

    # distance kernel
    band_radius_frac: float = 0.1

    # symbolization
    subsample_n: int = 3000
    cutoff_fraction: float = 0.30
    kmeans_max_iter: int = 100
    kmeans_metric: str = "lb_keogh"  # or "euclidean"

    # evaluation
    n_clusters: int = 18
    intra_n_clusters: int = 3
    rrdm_trials: int = 5000
    sweep_range: list[int] = field(default_factory=lambda: [2, 40])
    intra_sweep_range: list[int] = field(default_factory=lambda: [2, 10])
    comparisons: list[str] = field(
        default_factory=lambda: ["PreTx/Control", "PostTx/Control", "intra"]
    )
    run_sweep: bool = False

    # execution
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        def positive(name, value):
            if value <= 0:
                raise ValueError(f"config: {name} must be positive, got {value}")

        positive("voicing_frame_ms", self.voicing_frame_ms)
        if self.voicing_threshold_mode not in ("relative", "absolute"):
            raise ValueError(
                "config: voicing_threshold_mode must be 'relative' or 'absolute', "
                f"got {self.voicing_threshold_mode!r}"
            )
        positive("peak_prominence_frac", self.peak_prominence_frac)
        positive("peak_min_distance_frac", self.peak_min_distance_frac)
        if not 0 < self.pitch_fmin_hz <= self.pitch_fmax_hz:
            raise ValueError(
                "config: pitch range needs 0 < pitch_fmin_hz <= pitch_fmax_hz, "
                f"got {self.pitch_fmin_hz}..{self.pitch_fmax_hz}"
            )
        if self.pitch_scope not in ("region", "day"):
            raise ValueError(f"config: pitch_scope must be 'region' or 'day', got {self.pitch_scope!r}")
        if not 0.0 < self.correction_tolerance < 1.0:
            raise ValueError(
                f"config: correction_tolerance must lie in (0, 1), got {self.correction_tolerance}"
            )
        for name in ("inter_normalization", "intra_normalization"):
            mode = getattr(self, name)
            if mode not in ("zscore", "dbspl"):
                raise ValueError(f"config: {name} must be 'zscore' or 'dbspl', got {mode!r}")
        if self.target_length != "auto":
            if not isinstance(self.target_length, int) or self.target_length < 2:
                raise ValueError(
                    f"config: target_length must be 'auto' or an integer >= 2, got {self.target_length!r}"
                )
        if self.target_length_cap is not None and self.target_length_cap < 2:
            raise ValueError("config: target_length_cap must be >= 2 when set")
        if not 0.0 < self.band_radius_frac <= 1.0:
            raise ValueError(f"config: band_radius_frac must lie in (0, 1], got {self.band_radius_frac}")
        positive("subsample_n", self.subsample_n)
        if not 0.0 < self.cutoff_fraction <= 1.0:
            raise ValueError(f"config: cutoff_fraction must lie in (0, 1], got {self.cutoff_fraction}")
        positive("kmeans_max_iter", self.kmeans_max_iter)
        if self.kmeans_metric not in ("lb_keogh", "euclidean"):
            raise ValueError(
                f"config: kmeans_metric must be 'lb_keogh' or 'euclidean', got {self.kmeans_metric!r}"
            )
        positive("n_clusters", self.n_clusters)
        positive("intra_n_clusters", self.intra_n_clusters)
        positive("rrdm_trials", self.rrdm_trials)
        for name in ("sweep_range", "intra_sweep_range"):
            rng = getattr(self, name)
            if len(rng) != 2 or rng[0] < 1 or rng[1] < rng[0]:
                raise ValueError(f"config: {name} must be [lo, hi] with 1 <= lo <= hi, got {rng}")
        for comp in self.comparisons:
            if comp != "intra" and "/" not in comp:
                raise ValueError(
                    f"config: comparison {comp!r} must be 'intra' or 'ClassA/ClassB'"
                )
        positive("workers", self.workers)

    # -- IO ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"config: unknown keys {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, path: str | Path) -> "PipelineConfig":
        doc = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(doc, dict):
            raise ValueError(f"config: {path} must contain a mapping")
        return cls.from_dict(doc)

    def save_yaml(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True), newline="\n")
