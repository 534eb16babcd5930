"""Synthetic cohort generation for end-to-end testing.

Real cohort data is private, so the pipeline is exercised on synthetic
subject-days: pulse trains built from per-class template mixtures at a
drawn pitch, interleaved with silent gaps to a target voiced fraction.
Every pulse starts at a dominant boundary peak so peak-to-peak
segmentation can recover the planted shapes; a ground-truth sidecar
records template ids per voiced run.

Templates are sums of Gaussian bumps over one period.  Keep bump centers
at or below ~0.6 of the period: later bumps can win the peak-corrector's
keep-the-earlier rule over the true boundary peak.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .ingest import CLASS_LABELS, write_sample_csv, write_wav

#: Amplitude of the boundary peak that delimits consecutive pulses.
PEAK_AMP = 1.0


@dataclass(frozen=True)
class ShapeTemplate:
    """Pulse interior as Gaussian bumps (amplitude, center, width) on [0, 1)."""

    bumps: tuple[tuple[float, float, float], ...]
    name: str = ""

    def render(self, period: int) -> np.ndarray:
        """One full pulse of ``period`` samples: boundary peak + interior."""
        t = np.arange(period) / period
        w = np.zeros(period)
        for amp, center, width in self.bumps:
            w += amp * np.exp(-0.5 * ((t - center) / width) ** 2)
        w[0] = PEAK_AMP
        return w


STOCK_TEMPLATES = {
    "early_single": ShapeTemplate(bumps=((0.55, 0.28, 0.09),), name="early_single"),
    "mid_double": ShapeTemplate(
        bumps=((0.45, 0.22, 0.07), (0.5, 0.5, 0.1)), name="mid_double"
    ),
    "late_broad": ShapeTemplate(bumps=((0.6, 0.55, 0.16),), name="late_broad"),
    "twin_dip": ShapeTemplate(
        bumps=((0.5, 0.2, 0.06), (-0.25, 0.4, 0.08), (0.45, 0.58, 0.08)),
        name="twin_dip",
    ),
}


@dataclass
class SynthSpec:
    """Recipe for one synthetic cohort."""

    class_templates: dict[str, list[ShapeTemplate]]
    class_weights: dict[str, list[float]]
    subjects_per_class: int = 3
    days_per_subject: int = 3
    pitch_range_hz: tuple[float, float] = (130.0, 170.0)
    sample_rate_hz: float = 8000.0
    pulses_per_day: int = 1000
    runs_per_day: int = 6
    voiced_fraction: float = 0.10
    noise_level: float = 0.01
    gain_range: tuple[float, float] = (0.25, 0.5)
    #: probability that a pulse repeats its predecessor's template; voice
    #: quality persists across adjacent cycles, and without persistence a
    #: chance-alternating mixture can anticorrelate the signal at one period
    template_persistence: float = 0.7
    #: day-to-day spread of the mixing weights (0 = every day uses the
    #: class weights exactly); makes within-class variation tunable
    weight_jitter: float = 0.0
    paired_subjects: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if set(self.class_templates) != set(self.class_weights):
            raise ValueError("class_templates and class_weights must share classes")
        if not self.class_templates:
            raise ValueError("need at least one class")
        for label, templates in self.class_templates.items():
            if label not in CLASS_LABELS:
                raise ValueError(f"unknown class label {label!r}")
            weights = self.class_weights[label]
            if len(templates) != len(weights) or not templates:
                raise ValueError(f"{label}: templates and weights disagree")
            if abs(sum(weights) - 1.0) > 1e-9:
                raise ValueError(f"{label}: mixing weights must sum to 1")
        if not 0.0 < self.voiced_fraction <= 1.0:
            raise ValueError("voiced_fraction must lie in (0, 1]")
        lo, hi = self.pitch_range_hz
        if not 0 < lo <= hi:
            raise ValueError("pitch_range_hz must satisfy 0 < min <= max")
        if self.noise_level < 0:
            raise ValueError("noise_level must be nonnegative")
        if not 0.0 <= self.template_persistence <= 1.0:
            raise ValueError("template_persistence must lie in [0, 1]")
        if self.weight_jitter < 0:
            raise ValueError("weight_jitter must be nonnegative")
        if self.paired_subjects and len(self.class_templates) != 2:
            raise ValueError("paired_subjects requires exactly 2 classes")

    def classes(self) -> list[str]:
        return sorted(self.class_templates)


def _render_day(spec: SynthSpec, label: str, rng: np.random.Generator):
    """Build one subject-day signal and its ground-truth run records."""
    templates = spec.class_templates[label]
    weights = np.asarray(spec.class_weights[label], dtype=np.float64)
    if spec.weight_jitter > 0:
        weights = weights + spec.weight_jitter * rng.uniform(-1.0, 1.0, weights.size)
        weights = np.clip(weights, 0.02, None)
        weights = weights / weights.sum()
    pulses_per_run = max(1, math.ceil(spec.pulses_per_day / spec.runs_per_day))

    run_payloads = []
    total_voiced = 0
    cache: dict[tuple[int, int], np.ndarray] = {}
    for _ in range(spec.runs_per_day):
        pitch = rng.uniform(*spec.pitch_range_hz)
        period = max(4, int(round(spec.sample_rate_hz / pitch)))
        # sticky template chain with the mixing weights as its stationary law
        ids = np.empty(pulses_per_run, dtype=np.int64)
        ids[0] = rng.choice(len(templates), p=weights)
        for i in range(1, pulses_per_run):
            if rng.random() < spec.template_persistence:
                ids[i] = ids[i - 1]
            else:
                ids[i] = rng.choice(len(templates), p=weights)
        gain = rng.uniform(*spec.gain_range)
        parts = []
        for tid in ids:
            key = (int(tid), period)
            if key not in cache:
                cache[key] = templates[int(tid)].render(period)
            parts.append(cache[key])
        run = np.concatenate(parts + [np.array([PEAK_AMP])]) * gain
        if spec.noise_level > 0:
            run = run + rng.normal(0.0, spec.noise_level * gain, size=run.size)
        run_payloads.append((run, period, [int(t) for t in ids]))
        total_voiced += run.size

    silence_total = int(round(total_voiced * (1.0 - spec.voiced_fraction) / spec.voiced_fraction))
    n_gaps = spec.runs_per_day + 1
    gap_len = silence_total // n_gaps
    gaps = [gap_len] * n_gaps
    gaps[0] += silence_total - gap_len * n_gaps

    chunks = []
    runs_truth = []
    cursor = 0
    for gap, (run, period, ids) in zip(gaps, run_payloads):
        chunks.append(np.zeros(gap))
        cursor += gap
        chunks.append(run)
        runs_truth.append(
            {
                "start_sample": cursor,
                "length": int(run.size),
                "pitch_period": period,
                "template_ids": ids,
            }
        )
        cursor += run.size
    chunks.append(np.zeros(gaps[-1]))
    signal = np.concatenate(chunks)
    return signal, runs_truth


def generate_cohort(
    spec: SynthSpec, out_dir: str | Path, file_format: str = "wav"
) -> tuple[Path, dict]:
    """Write recordings, a manifest and a ground-truth sidecar.

    Returns (manifest path, ground-truth dict).  Identical spec (seed
    included) reproduces bit-identical files; each subject-day renders from
    its own spawned seed, so generation order does not matter.
    """
    if file_format not in ("wav", "csv"):
        raise ValueError(f"unknown file format {file_format!r}")
    out_dir = Path(out_dir)
    rec_dir = out_dir / "recordings"
    rec_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for ci, label in enumerate(spec.classes()):
        for s in range(spec.subjects_per_class):
            if spec.paired_subjects:
                subject = f"p{s:02d}"
            else:
                subject = f"{label.lower()}{s:02d}"
            for d in range(spec.days_per_subject):
                day = ci * spec.days_per_subject + d if spec.paired_subjects else d
                jobs.append((label, subject, day))

    children = np.random.SeedSequence(spec.seed).spawn(len(jobs))
    entries = []
    truth: dict = {"seed": spec.seed, "files": {}}
    for (label, subject, day), child in zip(jobs, children):
        rng = np.random.default_rng(child)
        signal, runs_truth = _render_day(spec, label, rng)
        fname = f"{label}_{subject}_d{day:02d}.{file_format}"
        fpath = rec_dir / fname
        if file_format == "wav":
            write_wav(fpath, signal, spec.sample_rate_hz)
        else:
            write_sample_csv(fpath, signal)
        entries.append(
            {
                "file": f"recordings/{fname}",
                "subject": subject,
                "day": day,
                "label": label,
                "sample_rate_hz": spec.sample_rate_hz,
            }
        )
        truth["files"][fname] = {
            "subject": subject,
            "day": day,
            "label": label,
            "pulse_count": sum(len(r["template_ids"]) for r in runs_truth),
            "runs": runs_truth,
        }

    manifest_path = out_dir / "manifest.yaml"
    manifest_path.write_text(
        yaml.safe_dump({"recordings": entries}, sort_keys=False), newline="\n"
    )
    (out_dir / "ground_truth.json").write_text(
        json.dumps(truth, indent=2, sort_keys=True)
    )
    return manifest_path, truth


# -- stock cohorts ------------------------------------------------------------


def separated_cohort_spec(
    subjects_per_class: int = 6,
    days_per_subject: int = 4,
    pulses_per_day: int = 1200,
    seed: int = 0,
    **overrides,
) -> SynthSpec:
    """Two classes with disjoint template alphabets (clearly separable)."""
    return SynthSpec(
        class_templates={
            "Control": [STOCK_TEMPLATES["early_single"], STOCK_TEMPLATES["mid_double"]],
            "PreTx": [STOCK_TEMPLATES["late_broad"], STOCK_TEMPLATES["twin_dip"]],
        },
        class_weights={"Control": [0.6, 0.4], "PreTx": [0.6, 0.4]},
        subjects_per_class=subjects_per_class,
        days_per_subject=days_per_subject,
        pulses_per_day=pulses_per_day,
        seed=seed,
        **overrides,
    )


def graded_cohort_spec(
    subjects_per_class: int = 6,
    days_per_subject: int = 4,
    pulses_per_day: int = 600,
    seed: int = 33,
    **overrides,
) -> SynthSpec:
    """Partially overlapping classes: one shared template, jittered weights.

    Separation improves gradually with the cluster count instead of being
    immediate, which makes sweep-trend behavior observable.
    """
    return SynthSpec(
        class_templates={
            "Control": [STOCK_TEMPLATES["early_single"], STOCK_TEMPLATES["mid_double"]],
            "PreTx": [STOCK_TEMPLATES["early_single"], STOCK_TEMPLATES["late_broad"]],
        },
        class_weights={"Control": [0.7, 0.3], "PreTx": [0.7, 0.3]},
        subjects_per_class=subjects_per_class,
        days_per_subject=days_per_subject,
        pulses_per_day=pulses_per_day,
        noise_level=0.05,
        weight_jitter=0.28,
        seed=seed,
        **overrides,
    )


def null_cohort_spec(
    subjects_per_class: int = 3,
    days_per_subject: int = 3,
    pulses_per_day: int = 600,
    seed: int = 0,
    **overrides,
) -> SynthSpec:
    """Two classes drawn from the same alphabet and weights (no structure)."""
    shared = [STOCK_TEMPLATES["early_single"], STOCK_TEMPLATES["late_broad"]]
    return SynthSpec(
        class_templates={"Control": list(shared), "PreTx": list(shared)},
        class_weights={"Control": [0.5, 0.5], "PreTx": [0.5, 0.5]},
        subjects_per_class=subjects_per_class,
        days_per_subject=days_per_subject,
        pulses_per_day=pulses_per_day,
        seed=seed,
        **overrides,
    )


def paired_cohort_spec(
    subjects_per_class: int = 4,
    days_per_subject: int = 3,
    pulses_per_day: int = 600,
    disjoint: bool = True,
    seed: int = 0,
    **overrides,
) -> SynthSpec:
    """PreTx/PostTx days for the same subjects (intra-patient comparisons)."""
    if disjoint:
        templates = {
            "PreTx": [STOCK_TEMPLATES["late_broad"], STOCK_TEMPLATES["twin_dip"]],
            "PostTx": [STOCK_TEMPLATES["early_single"], STOCK_TEMPLATES["mid_double"]],
        }
    else:
        shared = [STOCK_TEMPLATES["early_single"], STOCK_TEMPLATES["mid_double"]]
        templates = {"PreTx": list(shared), "PostTx": list(shared)}
    return SynthSpec(
        class_templates=templates,
        class_weights={"PreTx": [0.6, 0.4], "PostTx": [0.6, 0.4]},
        subjects_per_class=subjects_per_class,
        days_per_subject=days_per_subject,
        pulses_per_day=pulses_per_day,
        paired_subjects=True,
        seed=seed,
        **overrides,
    )


def spec_from_yaml(path: str | Path) -> SynthSpec:
    """Load a SynthSpec from YAML (templates as [[amp, center, width], ...])."""
    doc = yaml.safe_load(Path(path).read_text())
    templates = {
        label: [ShapeTemplate(bumps=tuple(tuple(b) for b in bumps)) for bumps in tlist]
        for label, tlist in doc["class_templates"].items()
    }
    kwargs = {k: v for k, v in doc.items() if k not in ("class_templates", "class_weights")}
    for tup_key in ("pitch_range_hz", "gain_range"):
        if tup_key in kwargs:
            kwargs[tup_key] = tuple(kwargs[tup_key])
    return SynthSpec(
        class_templates=templates,
        class_weights={k: list(v) for k, v in doc["class_weights"].items()},
        **kwargs,
    )
