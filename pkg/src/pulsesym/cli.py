"""Command-line interface.

Subcommands mirror the pipeline stages; ``run`` chains them all with
caching.  Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import FEATURE_NAMES, cluster_maf, cluster_vaf, compute_maf, compute_vaf
from .config import PipelineConfig
from .evaluate import (
    evaluate_clustering,
    null_concentrations,
    sensitivity_sweep,
    total_concentration,
)
from .ingest import load_manifest, load_recording
from .matrix import DayId, DistanceMatrix
from .mismatch import mismatch_matrix
from .pipeline import (
    PipelineError,
    derive_seed,
    export_segments_csv,
    run_pipeline,
    segment_one_day,
    symbolize_one_day,
)
from .cache import hash_file
from .symbolize import load_symbol_vectors, save_symbol_vectors
from .synth import (
    generate_cohort,
    graded_cohort_spec,
    null_cohort_spec,
    paired_cohort_spec,
    separated_cohort_spec,
    spec_from_yaml,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        cfg = PipelineConfig()
        cfg.validate()
        return cfg
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    return PipelineConfig.from_yaml(p)


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def build_parser() -> _Parser:
    parser = _Parser(prog="pulsesym", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config YAML (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="override the config master seed")

    p_run = sub.add_parser("run", help="run the full pipeline")
    common(p_run)
    p_run.add_argument("--manifest", required=True, help="cohort manifest YAML")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--workers", type=int, help="worker processes (default from config)")
    p_run.add_argument(
        "--stage-cache", choices=["on", "off"], default="on", help="reuse cached stages"
    )

    p_synth = sub.add_parser("synth", help="generate a synthetic cohort")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--spec", help="SynthSpec YAML")
    p_synth.add_argument(
        "--preset", choices=["separated", "graded", "null", "paired"], help="stock cohort recipe"
    )
    p_synth.add_argument("--subjects", type=int, default=6)
    p_synth.add_argument("--days", type=int, default=4)
    p_synth.add_argument("--pulses", type=int, default=1200)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--format", choices=["wav", "csv"], default="wav")

    p_seg = sub.add_parser("segment", help="segment recordings into pulse dumps")
    common(p_seg)
    p_seg.add_argument("--manifest", required=True)
    p_seg.add_argument("--out", required=True)
    p_seg.add_argument("--csv", action="store_true", help="also export segments as CSV")

    p_sym = sub.add_parser("symbolize", help="symbolize cached segment dumps")
    common(p_sym)
    p_sym.add_argument("--segments", required=True, help="directory from `segment`")
    p_sym.add_argument("--out", required=True, help="output symbol-vector file")
    p_sym.add_argument("--mode", choices=["zscore", "dbspl"], default="zscore")

    p_mm = sub.add_parser("mismatch", help="mismatch matrix from symbol vectors")
    common(p_mm)
    p_mm.add_argument("--vectors", required=True)
    p_mm.add_argument("--out", required=True, help="output distance CSV")
    p_mm.add_argument("--classes", help="restrict to two classes, e.g. PreTx,Control")

    p_ev = sub.add_parser("evaluate", help="cluster a distance matrix and score it")
    common(p_ev)
    p_ev.add_argument("--distances", required=True, help="distance matrix CSV")
    p_ev.add_argument("--labels", help="CSV subject,day,label overriding matrix labels")
    p_ev.add_argument("--n", type=int, required=True)
    p_ev.add_argument("--trials", type=int, default=0, help="RRDM trials (0 = skip)")
    p_ev.add_argument("--out", required=True, help="output report JSON")

    p_sw = sub.add_parser("sweep", help="sensitivity sweep over cluster counts")
    common(p_sw)
    p_sw.add_argument(
        "--distances",
        action="append",
        required=True,
        metavar="NAME=CSV",
        help="comparison name and matrix CSV (repeatable)",
    )
    p_sw.add_argument("--n-range", default="2:40", help="lo:hi cluster counts")
    p_sw.add_argument("--trials", type=int, default=1000)
    p_sw.add_argument("--out", required=True, help="output JSON (CSV twin written too)")

    p_bl = sub.add_parser("baseline", help="acoustic-feature baselines (VAF / MAF)")
    common(p_bl)
    p_bl.add_argument("--manifest", required=True)
    p_bl.add_argument("--method", choices=["vaf", "maf"], required=True)
    p_bl.add_argument("--n", type=int, required=True)
    p_bl.add_argument("--trials", type=int, default=0)
    p_bl.add_argument("--window-s", type=float, default=300.0)
    p_bl.add_argument("--out", required=True, help="output report JSON")

    return parser


# -- subcommand bodies --------------------------------------------------------


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg_workers = args.workers
    else:
        cfg_workers = cfg.workers
    manifest = _require_file(args.manifest, "manifest")
    run_pipeline(
        cfg,
        manifest,
        args.out,
        workers=cfg_workers,
        use_cache=args.stage_cache == "on",
    )
    print(f"pipeline complete; reports under {Path(args.out) / 'reports'}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    if bool(args.spec) == bool(args.preset):
        raise UsageError("synth needs exactly one of --spec or --preset")
    if args.spec:
        spec = spec_from_yaml(_require_file(args.spec, "synth spec"))
    elif args.preset == "separated":
        spec = separated_cohort_spec(
            subjects_per_class=args.subjects,
            days_per_subject=args.days,
            pulses_per_day=args.pulses,
            seed=args.seed,
        )
    elif args.preset == "graded":
        spec = graded_cohort_spec(
            subjects_per_class=args.subjects,
            days_per_subject=args.days,
            pulses_per_day=args.pulses,
            seed=args.seed,
        )
    elif args.preset == "null":
        spec = null_cohort_spec(
            subjects_per_class=args.subjects,
            days_per_subject=args.days,
            pulses_per_day=args.pulses,
            seed=args.seed,
        )
    else:
        spec = paired_cohort_spec(
            subjects_per_class=args.subjects,
            days_per_subject=args.days,
            pulses_per_day=args.pulses,
            seed=args.seed,
        )
    manifest_path, truth = generate_cohort(spec, args.out, file_format=args.format)
    print(f"wrote {len(truth['files'])} recordings; manifest at {manifest_path}")
    return EXIT_OK


def _cmd_segment(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    listing = []
    for entry in manifest.entries:
        path = manifest.path_for(entry)
        job = {
            "cfg": cfg.to_dict(),
            "entry": entry.__dict__,
            "file_path": str(path),
            "file_hash": hash_file(path),
            "cache_root": str(out / "cache"),
            "cache_enabled": True,
        }
        try:
            day_dir = segment_one_day(job)
        except Exception as exc:
            raise PipelineError(
                "segment", f"{entry.subject_id} day {entry.day_index}", exc
            ) from exc
        listing.append(
            {"subject": entry.subject_id, "day": entry.day_index, "dir": day_dir}
        )
        if args.csv:
            export_segments_csv(
                day_dir, out / f"segments_{entry.subject_id}_d{entry.day_index:02d}.csv"
            )
    (out / "segment_index.json").write_text(json.dumps(listing, indent=2, sort_keys=True))
    print(f"segmented {len(listing)} subject-days into {out}")
    return EXIT_OK


def _cmd_symbolize(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    seg_root = _require_file(args.segments, "segment directory")
    index = seg_root / "segment_index.json"
    if not index.exists():
        raise UsageError(f"{seg_root} has no segment_index.json (run `segment` first)")
    listing = json.loads(index.read_text())
    vectors = []
    for item in listing:
        job = {
            "cfg": cfg.to_dict(),
            "mode": args.mode,
            "day_dir": item["dir"],
            "seed": derive_seed(cfg.seed, "symbolize", item["subject"], item["day"], args.mode),
            "cache_root": str(seg_root / "cache"),
            "cache_enabled": True,
        }
        try:
            vec_file = symbolize_one_day(job)
        except Exception as exc:
            raise PipelineError(
                "symbolize", f"{item['subject']} day {item['day']}", exc
            ) from exc
        vectors.extend(load_symbol_vectors(vec_file))
    save_symbol_vectors(args.out, vectors)
    print(f"symbolized {len(vectors)} subject-days into {args.out}")
    return EXIT_OK


def _cmd_mismatch(args) -> int:
    cfg = _load_config(args.config)
    vectors = load_symbol_vectors(_require_file(args.vectors, "vector file"))
    if args.classes:
        keep = {c.strip() for c in args.classes.split(",")}
        vectors = [v for v in vectors if v.class_label in keep]
    if len(vectors) < 2:
        raise ValueError("need at least 2 symbol vectors after filtering")
    dm = mismatch_matrix(vectors, cfg.band_radius_frac)
    dm.save_csv(args.out)
    print(f"wrote {len(dm)}x{len(dm)} mismatch matrix to {args.out}")
    return EXIT_OK


def _apply_label_file(dm: DistanceMatrix, labels_path: Path) -> DistanceMatrix:
    mapping = {}
    with labels_path.open() as fh:
        for row in csv.reader(fh):
            if not row or row[0].lower() == "subject":
                continue
            mapping[(row[0], int(row[1]))] = row[2]
    ids = []
    for i in dm.ids:
        label = mapping.get((i.subject_id, i.day_index), i.class_label)
        ids.append(DayId(subject_id=i.subject_id, day_index=i.day_index, class_label=label))
    return DistanceMatrix(ids=ids, values=dm.values, kind=dm.kind, metadata=dm.metadata)


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    dm = DistanceMatrix.load_csv(_require_file(args.distances, "distance matrix"))
    if args.labels:
        dm = _apply_label_file(dm, _require_file(args.labels, "label file"))
    dm.validate()
    trials = args.trials if args.trials > 0 else None
    report = evaluate_clustering(dm, n=args.n, trials=trials, seed=seed)
    doc = report.to_dict()
    doc["Q"] = len(dm)
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True))
    print(
        f"n={args.n}: class concentration {report.total_class_conc:.4f}, "
        f"subject concentration {report.total_subj_conc:.4f}"
        + (f", p {report.p_display}" if report.p_value is not None else "")
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    dms = {}
    for spec in args.distances:
        name, _, path = spec.partition("=")
        if not path:
            raise UsageError(f"--distances needs NAME=CSV, got {spec!r}")
        dms[name] = DistanceMatrix.load_csv(_require_file(path, "distance matrix"))
    lo, _, hi = args.n_range.partition(":")
    n_values = list(range(int(lo), int(hi) + 1))
    result = sensitivity_sweep(dms, n_values, trials=args.trials, seed=seed)
    doc = {
        "rows": [
            {
                "n": r.n,
                "concentration": r.concentration,
                "p_value": r.p_value,
                "threshold_p05": r.threshold_p05,
                "threshold_p01": r.threshold_p01,
                "d": r.d,
            }
            for r in result.rows
        ],
        "d_pair": list(result.d_pair) if result.d_pair else None,
        "argmax_d_n": result.argmax_d_n,
        "selected_n": result.selected_n,
        "d_halfwidth": result.d_halfwidth,
    }
    out = Path(args.out)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True))
    with out.with_suffix(".csv").open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        names = list(dms)
        writer.writerow(["n", *[f"conc[{n}]" for n in names], "d"])
        for r in result.rows:
            writer.writerow(
                [r.n, *[r.concentration.get(n, "") for n in names], r.d if r.d is not None else ""]
            )
    print(f"swept {len(result.rows)} cluster counts into {out}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    windows = []
    for entry in manifest.entries:
        rec = load_recording(manifest.path_for(entry), entry)
        windows.extend(
            compute_vaf(
                rec,
                window_s=args.window_s,
                frame_ms=cfg.voicing_frame_ms,
                level_threshold_db=cfg.voicing_threshold_db,
                threshold_mode=cfg.voicing_threshold_mode,
                pitch_fmin_hz=cfg.pitch_fmin_hz,
                pitch_fmax_hz=cfg.pitch_fmax_hz,
            )
        )
    if args.method == "vaf":
        features = windows
        assign = cluster_vaf(windows, n=args.n, seed=seed)
    else:
        by_day: dict = {}
        for w in windows:
            by_day.setdefault(w.day_key(), []).append(w)
        features = [compute_maf(ws) for _, ws in sorted(by_day.items())]
        assign = cluster_maf(features, n=args.n)
    out_path = Path(args.out)
    feat_path = out_path.with_name(out_path.stem + "_features.csv")
    with feat_path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject", "day", "label", "window", *FEATURE_NAMES])
        for f in features:
            writer.writerow(
                [
                    f.subject_id,
                    f.day_index,
                    f.class_label,
                    "" if f.window_index is None else f.window_index,
                    *[repr(float(x)) for x in f.values],
                ]
            )
    conc = total_concentration(assign, "class")
    doc = {
        "method": args.method,
        "n": args.n,
        "total_class_concentration": conc,
        "total_subject_concentration": total_concentration(assign, "subject"),
        "Q": len(assign.ids),
    }
    if args.trials > 0:
        labels = [i.class_label for i in assign.ids]
        samples = null_concentrations(1.0, labels, [args.n], args.trials, seed)[:, 0]
        p = 1.0 - float(np.count_nonzero(samples <= conc)) / args.trials
        doc["p_value"] = p
        doc["trials"] = args.trials
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True))
    print(f"{args.method} n={args.n}: class concentration {conc:.4f}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "synth": _cmd_synth,
    "segment": _cmd_segment,
    "symbolize": _cmd_symbolize,
    "mismatch": _cmd_mismatch,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "baseline": _cmd_baseline,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, PipelineError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
