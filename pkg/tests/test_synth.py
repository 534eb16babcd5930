import json

import numpy as np
import pytest

from pulsesym.ingest import detect_voicing, load_manifest, load_recording, normalize_segments
from pulsesym.mismatch import mismatch_matrix
from pulsesym.segmentation import length_normalize, segment_day
from pulsesym.symbolize import symbolize_day
from pulsesym.synth import (
    STOCK_TEMPLATES,
    ShapeTemplate,
    SynthSpec,
    generate_cohort,
    null_cohort_spec,
    paired_cohort_spec,
    separated_cohort_spec,
    spec_from_yaml,
)


def one_template_spec(**overrides):
    defaults = dict(
        class_templates={"Control": [STOCK_TEMPLATES["early_single"]]},
        class_weights={"Control": [1.0]},
        subjects_per_class=1,
        days_per_subject=1,
        pitch_range_hz=(150.0, 150.0),
        pulses_per_day=150,
        runs_per_day=3,
        noise_level=0.0,
        voiced_fraction=0.2,
        seed=3,
    )
    defaults.update(overrides)
    return SynthSpec(**defaults)


def cohort_bytes(root):
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = p.read_bytes()
    return out


def segment_cohort_day(manifest, entry):
    rec = load_recording(manifest.path_for(entry), entry)
    regions, _ = detect_voicing(rec)
    segments, _ = segment_day(rec, regions)
    return rec, length_normalize(segments)


class TestGenerateCohort:
    def test_deterministic_bit_identical(self, tmp_path):
        spec = one_template_spec(noise_level=0.01)
        generate_cohort(spec, tmp_path / "a", file_format="wav")
        generate_cohort(spec, tmp_path / "b", file_format="wav")
        assert cohort_bytes(tmp_path / "a") == cohort_bytes(tmp_path / "b")

    def test_seed_changes_output(self, tmp_path):
        generate_cohort(one_template_spec(seed=1), tmp_path / "a")
        generate_cohort(one_template_spec(seed=2), tmp_path / "b")
        assert cohort_bytes(tmp_path / "a") != cohort_bytes(tmp_path / "b")

    def test_manifest_loads_and_ground_truth_written(self, tmp_path):
        spec = separated_cohort_spec(subjects_per_class=2, days_per_subject=2, pulses_per_day=60)
        manifest_path, truth = generate_cohort(spec, tmp_path, file_format="csv")
        man = load_manifest(manifest_path)
        assert len(man.entries) == 8
        sidecar = json.loads((tmp_path / "ground_truth.json").read_text())
        assert sidecar["files"] == truth["files"]
        for rec in truth["files"].values():
            assert all("template_ids" in run for run in rec["runs"])

    def test_noiseless_shapes_recovered_below_1e6(self, tmp_path):
        spec = one_template_spec()
        manifest_path, _ = generate_cohort(spec, tmp_path, file_format="csv")
        man = load_manifest(manifest_path)
        _, segments = segment_cohort_day(man, man.entries[0])
        zs = normalize_segments(segments, "zscore")
        period = int(round(spec.sample_rate_hz / 150.0))
        tmpl = STOCK_TEMPLATES["early_single"].render(period)
        tz = (tmpl - tmpl.mean()) / tmpl.std()
        assert max(np.abs(s.values - tz).max() for s in zs) < 1e-6

    def test_pulse_count_within_one_per_run(self, tmp_path):
        spec = one_template_spec(noise_level=0.01, seed=11)
        manifest_path, truth = generate_cohort(spec, tmp_path, file_format="csv")
        man = load_manifest(manifest_path)
        _, segments = segment_cohort_day(man, man.entries[0])
        rec_truth = next(iter(truth["files"].values()))
        n_runs = len(rec_truth["runs"])
        assert abs(len(segments) - rec_truth["pulse_count"]) <= n_runs

    def test_disjoint_classes_separate_in_mismatch(self, tmp_path):
        spec = separated_cohort_spec(
            subjects_per_class=2, days_per_subject=2, pulses_per_day=200, seed=5
        )
        manifest_path, _ = generate_cohort(spec, tmp_path, file_format="csv")
        man = load_manifest(manifest_path)
        vectors = []
        for entry in man.entries:
            _, segments = segment_cohort_day(man, entry)
            pulses = np.vstack([s.values for s in normalize_segments(segments, "zscore")])
            vectors.append(
                symbolize_day(
                    pulses,
                    subject_id=entry.subject_id,
                    day_index=entry.day_index,
                    class_label=entry.class_label,
                    subsample_n=150,
                    seed=0,
                )
            )
        dm = mismatch_matrix(vectors)
        labels = np.array(dm.labels())
        same = dm.values[np.ix_(labels == "Control", labels == "Control")]
        cross = dm.values[np.ix_(labels == "Control", labels == "PreTx")]
        within_mean = same[np.triu_indices_from(same, k=1)].mean()
        assert cross.mean() > 2 * within_mean

    def test_mixture_frequencies_recovered(self, tmp_path):
        spec = SynthSpec(
            class_templates={
                "Control": [STOCK_TEMPLATES["early_single"], STOCK_TEMPLATES["late_broad"]]
            },
            class_weights={"Control": [0.7, 0.3]},
            subjects_per_class=1,
            days_per_subject=1,
            pitch_range_hz=(140.0, 140.0),
            pulses_per_day=2000,
            runs_per_day=4,
            noise_level=0.01,
            voiced_fraction=0.3,
            seed=2,
        )
        manifest_path, _ = generate_cohort(spec, tmp_path, file_format="csv")
        man = load_manifest(manifest_path)
        _, segments = segment_cohort_day(man, man.entries[0])
        pulses = np.vstack([s.values for s in normalize_segments(segments, "zscore")])
        v = symbolize_day(pulses, subsample_n=400, seed=1, k_override=2)
        assert abs(np.sort(v.frequencies)[1] - 0.7) < 0.05

    def test_paired_cohort_shares_subjects(self, tmp_path):
        spec = paired_cohort_spec(subjects_per_class=2, days_per_subject=2, pulses_per_day=40)
        manifest_path, _ = generate_cohort(spec, tmp_path, file_format="csv")
        man = load_manifest(manifest_path)
        subjects = {e.subject_id for e in man.entries}
        assert subjects == {"p00", "p01"}
        labels = {e.class_label for e in man.entries}
        assert labels == {"PreTx", "PostTx"}

    def test_null_cohort_classes_share_templates(self):
        spec = null_cohort_spec()
        assert spec.class_templates["Control"] == spec.class_templates["PreTx"]
        assert spec.class_weights["Control"] == spec.class_weights["PreTx"]

    def test_graded_cohort_day_weights_vary(self, tmp_path):
        from pulsesym.synth import graded_cohort_spec

        spec = graded_cohort_spec(subjects_per_class=1, days_per_subject=3, pulses_per_day=300)
        _, truth = generate_cohort(spec, tmp_path, file_format="csv")
        fracs = []
        for rec in truth["files"].values():
            counts = np.zeros(2)
            for run in rec["runs"]:
                counts += np.bincount(run["template_ids"], minlength=2)
            fracs.append(counts[0] / counts.sum())
        assert max(fracs) - min(fracs) > 0.05  # jitter spreads the days out


class TestSpecValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            one_template_spec(class_weights={"Control": [0.5]})

    def test_voiced_fraction_bounds(self):
        with pytest.raises(ValueError, match="voiced_fraction"):
            one_template_spec(voiced_fraction=0.0)

    def test_weight_jitter_bounds(self):
        with pytest.raises(ValueError, match="weight_jitter"):
            one_template_spec(weight_jitter=-0.1)

    def test_mismatched_classes(self):
        with pytest.raises(ValueError, match="share classes"):
            SynthSpec(
                class_templates={"Control": [STOCK_TEMPLATES["early_single"]]},
                class_weights={"PreTx": [1.0]},
            )

    def test_unknown_label(self):
        with pytest.raises(ValueError, match="class label"):
            SynthSpec(
                class_templates={"Healthy": [STOCK_TEMPLATES["early_single"]]},
                class_weights={"Healthy": [1.0]},
            )

    def test_yaml_round_trip(self, tmp_path):
        doc = """
class_templates:
  Control:
    - [[0.5, 0.3, 0.1]]
  PreTx:
    - [[0.6, 0.5, 0.15]]
class_weights:
  Control: [1.0]
  PreTx: [1.0]
subjects_per_class: 2
days_per_subject: 1
pulses_per_day: 50
seed: 4
"""
        p = tmp_path / "spec.yaml"
        p.write_text(doc)
        spec = spec_from_yaml(p)
        assert spec.subjects_per_class == 2
        assert spec.class_templates["Control"][0] == ShapeTemplate(bumps=((0.5, 0.3, 0.1),))
