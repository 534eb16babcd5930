"""End-to-end orchestration: ingest -> segment -> symbolize -> mismatch ->
evaluate, with content-addressed caching of the heavy per-day stages.

All randomness flows from the config's master seed; per-day and per-stage
sub-seeds are derived by hashing (seed, stage, subject, day), so outputs
are byte-identical for any worker count and any execution order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cache import StageCache, hash_file, hash_obj
from .config import PipelineConfig
from .evaluate import (
    evaluate_clustering,
    intra_subject_compare,
    sensitivity_sweep,
)
from .ingest import (
    ManifestEntry,
    detect_voicing,
    load_manifest,
    load_recording,
    normalize_segments,
    scale_to_dbspl,
)
from .matrix import DistanceMatrix
from .mismatch import mismatch_matrix
from .segmentation import (
    PulseSegment,
    SegmentationParams,
    length_normalize,
    segment_day,
)
from .symbolize import SymbolVector, load_symbol_vectors, save_symbol_vectors, symbolize_day

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """Stage failure carrying the stage name and offending subject-day."""

    def __init__(self, stage: str, subject_day: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed on {subject_day}: {cause}")
        self.stage = stage
        self.subject_day = subject_day
        self.cause = cause


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit sub-seed from the master seed and a label path."""
    text = "|".join([str(master), *map(str, parts)])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# -- segment stage -----------------------------------------------------------


def _segment_cfg_slice(cfg: PipelineConfig) -> dict:
    keys = (
        "voicing_frame_ms",
        "voicing_threshold_db",
        "voicing_threshold_mode",
        "peak_prominence_frac",
        "peak_min_distance_frac",
        "pitch_fmin_hz",
        "pitch_fmax_hz",
        "pitch_scope",
        "correction_tolerance",
        "target_length",
        "target_length_cap",
    )
    d = cfg.to_dict()
    return {k: d[k] for k in keys}


def segment_one_day(job: dict) -> str:
    """Worker: segment a single subject-day into its cache directory.

    The artifact holds the length-normalized (amplitude-untouched beyond
    dbSPL scaling) segment matrix plus a source index and metadata.
    """
    cfg = PipelineConfig.from_dict(job["cfg"])
    entry = ManifestEntry(**job["entry"])
    cache = StageCache(job["cache_root"], enabled=job["cache_enabled"])
    path = Path(job["file_path"])
    key = {
        "file_sha256": job["file_hash"],
        "entry": {
            "subject": entry.subject_id,
            "day": entry.day_index,
            "label": entry.class_label,
            "sample_rate_hz": entry.sample_rate_hz,
            "calibration": entry.calibration,
        },
        "cfg": _segment_cfg_slice(cfg),
    }
    day_dir = cache.dir_for("segment", key)
    if cache.is_complete(day_dir):
        return str(day_dir)

    rec = load_recording(path, entry)
    spl_applied = False
    if entry.calibration:
        rec = scale_to_dbspl(rec, entry.calibration, frame_ms=cfg.voicing_frame_ms)
        spl_applied = True
    regions, silence = detect_voicing(
        rec,
        frame_ms=cfg.voicing_frame_ms,
        level_threshold_db=cfg.voicing_threshold_db,
        threshold_mode=cfg.voicing_threshold_mode,
    )
    params = SegmentationParams(
        peak_prominence_frac=cfg.peak_prominence_frac,
        min_distance_frac=cfg.peak_min_distance_frac,
        pitch_fmin_hz=cfg.pitch_fmin_hz,
        pitch_fmax_hz=cfg.pitch_fmax_hz,
        correction_tolerance=cfg.correction_tolerance,
        pitch_scope=cfg.pitch_scope,
    )
    segments, diags = segment_day(rec, regions, params)
    if not segments:
        raise ValueError("no pulse segments found (is the signal all silent?)")
    segments = length_normalize(segments, cfg.target_length, cfg.target_length_cap)

    matrix = np.vstack([s.values for s in segments])
    np.save(day_dir / "segments.npy", matrix)
    with (day_dir / "index.csv").open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject", "day", "start_sample", "raw_length"])
        for s in segments:
            writer.writerow([s.subject_id, s.day_index, s.start_sample, s.raw_length])
    meta = {
        "subject": rec.subject_id,
        "day": rec.day_index,
        "label": rec.class_label,
        "pulse_count": len(segments),
        "target_length": int(matrix.shape[1]),
        "voiced_regions": len(regions),
        "silence_bins": silence.bin_counts,
        "subsecond_silences": silence.subsecond_count,
        "total_silent_samples": silence.total_silent_samples,
        "spl_scaled": spl_applied,
        "spl_fit": rec.metadata.get("spl_fit", "identity"),
        "low_confidence_regions": diags.low_confidence_regions,
        "fallback_regions": diags.fallback_regions,
    }
    (day_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    cache.mark_complete(day_dir)
    return str(day_dir)


def export_segments_csv(day_dir: str | Path, out_path: str | Path) -> None:
    """CSV export of a segment dump (one row per normalized segment)."""
    matrix = np.load(Path(day_dir) / "segments.npy")
    with Path(out_path).open("w", newline="\n") as fh:
        for row in matrix:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


# -- symbolize stage ---------------------------------------------------------


def _symbolize_cfg_slice(cfg: PipelineConfig) -> dict:
    keys = (
        "band_radius_frac",
        "subsample_n",
        "cutoff_fraction",
        "kmeans_max_iter",
        "kmeans_metric",
    )
    d = cfg.to_dict()
    return {k: d[k] for k in keys}


def symbolize_one_day(job: dict) -> str:
    """Worker: symbolize one cached segment dump under one normalization."""
    cfg = PipelineConfig.from_dict(job["cfg"])
    mode = job["mode"]
    cache = StageCache(job["cache_root"], enabled=job["cache_enabled"])
    day_dir = Path(job["day_dir"])
    meta = json.loads((day_dir / "meta.json").read_text())
    key = {
        "segments_sha256": hash_file(day_dir / "segments.npy"),
        "mode": mode,
        "cfg": _symbolize_cfg_slice(cfg),
        "seed": job["seed"],
    }
    out_dir = cache.dir_for("symbolize", key)
    out_file = out_dir / "vector.txt"
    if cache.is_complete(out_dir):
        return str(out_file)

    matrix = np.load(day_dir / "segments.npy")
    segments = [
        PulseSegment(
            values=row, subject_id=meta["subject"], day_index=meta["day"]
        )
        for row in matrix
    ]
    segments = normalize_segments(segments, mode)
    if not segments:
        raise ValueError("all segments dropped by normalization")
    pulses = np.vstack([s.values for s in segments])
    vector = symbolize_day(
        pulses,
        subject_id=meta["subject"],
        day_index=meta["day"],
        class_label=meta["label"],
        subsample_n=cfg.subsample_n,
        cutoff_fraction=cfg.cutoff_fraction,
        band_radius_frac=cfg.band_radius_frac,
        kmeans_max_iter=cfg.kmeans_max_iter,
        metric=cfg.kmeans_metric,
        seed=job["seed"],
    )
    save_symbol_vectors(out_file, [vector])
    cache.mark_complete(out_dir)
    return str(out_file)


# -- full pipeline -----------------------------------------------------------


def _comparison_classes(comparison: str) -> tuple[str, str]:
    a, _, b = comparison.partition("/")
    return a.strip(), b.strip()


def _safe_name(comparison: str) -> str:
    return comparison.replace("/", "_")


def _map_jobs(fn, jobs: list[dict], workers: int) -> list[str]:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _write_report(report_dict: dict, path: Path) -> None:
    path.write_text(json.dumps(report_dict, indent=2, sort_keys=True))


def _write_heatmap_csv(report_dict: dict, path: Path) -> None:
    classes = sorted({c for cl in report_dict["clusters"] for c in cl["class_counts"]})
    with path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cluster", "size", *classes])
        for i, cl in enumerate(report_dict["clusters"]):
            writer.writerow(
                [i, cl["size"], *[cl["class_counts"].get(c, 0) for c in classes]]
            )


def _write_report_csv(report_dict: dict, path: Path) -> None:
    with path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["cluster", "size", "class_concentration", "subject_concentration", "dominant_label"]
        )
        for i, cl in enumerate(report_dict["clusters"]):
            writer.writerow(
                [
                    i,
                    cl["size"],
                    repr(cl["class_concentration"]),
                    repr(cl["subject_concentration"]),
                    cl["dominant_label"],
                ]
            )


def _write_ecdf_csv(samples, path: Path) -> None:
    with path.open("w", newline="\n") as fh:
        fh.write("null_concentration\n")
        for x in samples:
            fh.write(repr(float(x)) + "\n")


def run_pipeline(
    cfg: PipelineConfig,
    manifest_path: str | Path,
    out_dir: str | Path,
    workers: int | None = None,
    use_cache: bool = True,
) -> dict:
    """Run every configured stage; returns the run manifest dict."""
    cfg.validate()
    workers = cfg.workers if workers is None else workers
    out_dir = Path(out_dir)
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    cache_root = out_dir / "cache"
    cache = StageCache(cache_root, enabled=use_cache)

    manifest = load_manifest(manifest_path)
    run_info: dict = {
        "config": cfg.to_dict(),
        "versions": {
            "pulsesym": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seed": cfg.seed,
        "manifest": str(manifest_path),
        "manifest_sha256": hash_file(manifest_path),
        "subject_days": len(manifest.entries),
        "outputs": [],
        "notes": [],
    }

    # stage: segment
    seg_jobs = []
    for entry in manifest.entries:
        path = manifest.path_for(entry)
        seg_jobs.append(
            {
                "cfg": cfg.to_dict(),
                "entry": entry.__dict__,
                "file_path": str(path),
                "file_hash": hash_file(path),
                "cache_root": str(cache_root),
                "cache_enabled": use_cache,
            }
        )
    log.info("segment: %d subject-days, %d worker(s)", len(seg_jobs), workers)
    try:
        day_dirs = _map_jobs(segment_one_day, seg_jobs, workers)
    except Exception as exc:  # identify the failing day for the abort message
        for job in seg_jobs:
            try:
                segment_one_day(job)
            except Exception as inner:
                raise PipelineError(
                    "segment", f"{job['entry']['subject_id']} day {job['entry']['day_index']}", inner
                ) from inner
        raise PipelineError("segment", "unknown", exc) from exc

    # which normalization modes do the comparisons need?
    modes = set()
    inter_comparisons = [c for c in cfg.comparisons if c != "intra"]
    if inter_comparisons:
        modes.add(cfg.inter_normalization)
    if "intra" in cfg.comparisons:
        modes.add(cfg.intra_normalization)
    if not modes:
        modes.add(cfg.inter_normalization)

    # stage: symbolize (per day and mode)
    vectors_by_mode: dict[str, list[SymbolVector]] = {}
    for mode in sorted(modes):
        sym_jobs = []
        for entry, day_dir in zip(manifest.entries, day_dirs):
            sym_jobs.append(
                {
                    "cfg": cfg.to_dict(),
                    "mode": mode,
                    "day_dir": day_dir,
                    "seed": derive_seed(cfg.seed, "symbolize", entry.subject_id, entry.day_index, mode),
                    "cache_root": str(cache_root),
                    "cache_enabled": use_cache,
                }
            )
        log.info("symbolize (%s): %d subject-days", mode, len(sym_jobs))
        try:
            vec_files = _map_jobs(symbolize_one_day, sym_jobs, workers)
        except Exception as exc:
            for job, entry in zip(sym_jobs, manifest.entries):
                try:
                    symbolize_one_day(job)
                except Exception as inner:
                    raise PipelineError(
                        "symbolize", f"{entry.subject_id} day {entry.day_index}", inner
                    ) from inner
            raise PipelineError("symbolize", "unknown", exc) from exc
        vectors = [load_symbol_vectors(f)[0] for f in vec_files]
        vectors_by_mode[mode] = vectors
        vec_out = out_dir / f"vectors_{mode}.txt"
        save_symbol_vectors(vec_out, vectors)
        run_info["outputs"].append(str(vec_out.relative_to(out_dir)))

    # stage: mismatch + evaluate per inter-subject comparison
    inter_dms: dict[str, DistanceMatrix] = {}
    for comparison in inter_comparisons:
        class_a, class_b = _comparison_classes(comparison)
        vectors = [
            v
            for v in vectors_by_mode[cfg.inter_normalization]
            if v.class_label in (class_a, class_b)
        ]
        present = {v.class_label for v in vectors}
        if len(vectors) < 2 or present != {class_a, class_b}:
            run_info["notes"].append(
                f"skipped comparison {comparison}: classes not present in cohort"
            )
            continue
        try:
            key = {
                "comparison": comparison,
                "band_radius_frac": cfg.band_radius_frac,
                "vectors": hash_obj(
                    [[v.subject_id, v.day_index, v.class_label, v.centroids.tolist(), v.frequencies.tolist()] for v in vectors]
                ),
            }
            mm_dir = cache.dir_for("mismatch", key)
            mm_file = mm_dir / "mismatch.csv"
            if cache.is_complete(mm_dir):
                dm = DistanceMatrix.load_csv(mm_file)
            else:
                dm = mismatch_matrix(vectors, cfg.band_radius_frac)
                dm.save_csv(mm_file)
                cache.mark_complete(mm_dir)
            out_csv = out_dir / f"mismatch_{_safe_name(comparison)}.csv"
            out_csv.write_bytes(mm_file.read_bytes())
            run_info["outputs"].append(str(out_csv.relative_to(out_dir)))
            inter_dms[comparison] = dm

            n_used = min(cfg.n_clusters, len(dm))
            if n_used != cfg.n_clusters:
                run_info["notes"].append(
                    f"{comparison}: n_clusters clamped to Q={len(dm)}"
                )
            log.info("evaluate %s: Q=%d, n=%d, %d trials", comparison, len(dm), n_used, cfg.rrdm_trials)
            report = evaluate_clustering(
                dm,
                n=n_used,
                trials=cfg.rrdm_trials,
                seed=derive_seed(cfg.seed, "evaluate", comparison),
            )
            doc = report.to_dict()
            doc["comparison"] = comparison
            doc["normalization"] = cfg.inter_normalization
            doc["Q"] = len(dm)
            rpt = reports_dir / f"report_{_safe_name(comparison)}.json"
            _write_report(doc, rpt)
            _write_report_csv(doc, reports_dir / f"report_{_safe_name(comparison)}.csv")
            _write_heatmap_csv(doc, reports_dir / f"heatmap_{_safe_name(comparison)}.csv")
            if report.rrdm_samples is not None:
                _write_ecdf_csv(
                    report.rrdm_samples, reports_dir / f"ecdf_{_safe_name(comparison)}.csv"
                )
            run_info["outputs"].append(str(rpt.relative_to(out_dir)))
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError("evaluate", comparison, exc) from exc

    # stage: intra-patient comparison
    if "intra" in cfg.comparisons:
        vectors = [
            v
            for v in vectors_by_mode[cfg.intra_normalization]
            if v.class_label in ("PreTx", "PostTx")
        ]
        by_subject: dict[str, list[str]] = {}
        for v in vectors:
            by_subject.setdefault(v.subject_id, []).append(v.class_label)
        eligible = {
            s
            for s, labs in by_subject.items()
            if labs.count("PreTx") >= 2
            and labs.count("PostTx") >= 2
            and len(labs) >= cfg.intra_n_clusters
        }
        skipped = sorted(set(by_subject) - eligible)
        if skipped:
            run_info["notes"].append(
                f"intra comparison skipped patients without enough days: {skipped}"
            )
        kept = [v for v in vectors if v.subject_id in eligible]
        if eligible:
            try:
                reports, intra_dms = intra_subject_compare(
                    kept,
                    n=cfg.intra_n_clusters,
                    trials=cfg.rrdm_trials,
                    seed=derive_seed(cfg.seed, "evaluate", "intra"),
                    band_radius_frac=cfg.band_radius_frac,
                    return_matrices=True,
                )
            except Exception as exc:
                raise PipelineError("evaluate", "intra", exc) from exc
            for subject, dm in intra_dms.items():
                dm.save_csv(out_dir / f"mismatch_intra_{subject}.csv")
            doc = {
                "comparison": "intra (PreTx vs PostTx per patient)",
                "normalization": cfg.intra_normalization,
                "n": cfg.intra_n_clusters,
                "patients": {s: r.to_dict() for s, r in reports.items()},
            }
            rpt = reports_dir / "report_intra.json"
            _write_report(doc, rpt)
            with (reports_dir / "report_intra.csv").open("w", newline="\n") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["patient", "total_class_concentration", "p_value", "p_display"])
                for s in sorted(reports):
                    r = reports[s]
                    writer.writerow([s, repr(r.total_class_conc), r.p_value, r.p_display])
            run_info["outputs"].append(str(rpt.relative_to(out_dir)))
        else:
            run_info["notes"].append("intra comparison skipped: no eligible patients")

    # stage: sensitivity sweep
    if cfg.run_sweep and inter_dms:
        lo, hi = cfg.sweep_range
        n_values = [n for n in range(lo, hi + 1)]
        try:
            sweep = sensitivity_sweep(
                inter_dms,
                n_values,
                trials=cfg.rrdm_trials,
                seed=derive_seed(cfg.seed, "sweep"),
            )
        except Exception as exc:
            raise PipelineError("sweep", "inter comparisons", exc) from exc
        sweep_doc = {
            "rows": [
                {
                    "n": r.n,
                    "concentration": r.concentration,
                    "p_value": r.p_value,
                    "threshold_p05": r.threshold_p05,
                    "threshold_p01": r.threshold_p01,
                    "d": r.d,
                }
                for r in sweep.rows
            ],
            "d_pair": list(sweep.d_pair) if sweep.d_pair else None,
            "argmax_d_n": sweep.argmax_d_n,
            "selected_n": sweep.selected_n,
            "d_halfwidth": sweep.d_halfwidth,
            "notes": sweep.notes,
        }
        rpt = reports_dir / "sweep.json"
        _write_report(sweep_doc, rpt)
        with (reports_dir / "sweep.csv").open("w", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            names = list(inter_dms)
            writer.writerow(["n", *[f"conc[{n}]" for n in names], "d"])
            for row in sweep.rows:
                writer.writerow(
                    [
                        row.n,
                        *[row.concentration.get(n, "") for n in names],
                        row.d if row.d is not None else "",
                    ]
                )
        run_info["outputs"].append(str(rpt.relative_to(out_dir)))

    run_info["outputs"].sort()
    (out_dir / "run_manifest.json").write_text(
        json.dumps(run_info, indent=2, sort_keys=True)
    )
    return run_info
