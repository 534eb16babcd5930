"""pulsesym: pulse segmentation, symbolization and symbolic-mismatch
analysis of long-duration waveform recordings."""

__version__ = "0.1.0"

from .cluster import Dendrogram, cut_dendrogram, cut_to_n, ward_cluster
from .config import PipelineConfig
from .distance import build_envelope, dtw, lb_keogh, lb_keogh_sym, pairwise_distances
from .evaluate import (
    ClusterAssignment,
    ConcentrationReport,
    class_concentration,
    cluster_subject_days,
    evaluate_clustering,
    intra_subject_compare,
    rrdm_significance,
    sensitivity_sweep,
    subject_concentration,
    total_concentration,
)
from .ingest import (
    CohortManifest,
    RawRecording,
    SilenceProfile,
    VoicedRegion,
    detect_voicing,
    load_manifest,
    load_recording,
    normalize_segments,
    scale_to_dbspl,
)
from .matrix import DayId, DistanceMatrix
from .mismatch import mismatch_matrix, symbolic_mismatch
from .pipeline import run_pipeline
from .segmentation import (
    PitchEstimate,
    PulseSegment,
    correct_peaks,
    detect_peaks,
    estimate_pitch,
    length_normalize,
    segment_pulses,
)
from .symbolize import (
    SymbolVector,
    kmeans_symbolize,
    subsample_pulses,
    symbolize_day,
)
from .synth import SynthSpec, generate_cohort

__all__ = [name for name in dir() if not name.startswith("_")]
