import math

import numpy as np
import pytest

from pulsesym.baselines import (
    FEATURE_NAMES,
    FeatureVector,
    cluster_maf,
    cluster_vaf,
    compute_maf,
    compute_vaf,
    prune_correlated,
)
from pulsesym.evaluate import total_concentration
from pulsesym.ingest import RawRecording

SR = 8000.0


def tone(freq_hz, duration_s, amp=0.5):
    t = np.arange(int(duration_s * SR)) / SR
    return amp * np.sin(2 * math.pi * freq_hz * t)


def fv(values22, subject="s", day=0, label="Control", window=0):
    return FeatureVector(
        values=np.asarray(values22, dtype=float),
        subject_id=subject,
        day_index=day,
        class_label=label,
        window_index=window,
    )


def feature(vec, name):
    return vec.values[FEATURE_NAMES.index(name)]


class TestComputeVaf:
    def test_pure_tone_f0(self):
        rec = RawRecording(samples=tone(200, 5.0), sample_rate_hz=SR, subject_id="s")
        windows = compute_vaf(rec, window_s=2.0)
        assert len(windows) >= 2
        for w in windows:
            assert abs(feature(w, "f0_mean") - 200.0) < 3.0
            assert feature(w, "f0_std") < 2.0
            assert feature(w, "f0_pitched_fraction") > 0.9

    def test_silent_window_dropped(self):
        sig = np.concatenate([tone(200, 2.0), np.zeros(int(2.0 * SR)), tone(200, 2.0)])
        rec = RawRecording(samples=sig, sample_rate_hz=SR)
        windows = compute_vaf(rec, window_s=2.0)
        assert [w.window_index for w in windows] == [0, 2]

    def test_constant_tone_spl_percentiles_equal(self):
        rec = RawRecording(samples=tone(200, 5.0), sample_rate_hz=SR)
        w = compute_vaf(rec, window_s=2.0)[0]
        assert feature(w, "spl_p5") == pytest.approx(feature(w, "spl_p95"), abs=0.2)

    def test_feature_count_and_names(self):
        assert len(FEATURE_NAMES) == 22
        rec = RawRecording(samples=tone(150, 3.0), sample_rate_hz=SR)
        w = compute_vaf(rec, window_s=1.0)[0]
        assert w.values.shape == (22,)

    def test_short_recording_rejected(self):
        rec = RawRecording(samples=tone(200, 1.0), sample_rate_hz=SR)
        with pytest.raises(ValueError, match="longer than one window"):
            compute_vaf(rec, window_s=2.0)

    def test_all_silent_rejected(self):
        rec = RawRecording(samples=np.zeros(int(5 * SR)), sample_rate_hz=SR)
        with pytest.raises(ValueError, match="no voiced frames"):
            compute_vaf(rec, window_s=2.0)


class TestComputeMaf:
    def test_single_window_identity(self):
        w = fv(np.arange(22.0))
        maf = compute_maf([w])
        assert np.array_equal(maf.values, w.values)
        assert maf.window_index is None

    def test_two_window_midpoint(self):
        a = fv(np.zeros(22))
        b = fv(np.full(22, 2.0), window=1)
        assert np.array_equal(compute_maf([a, b]).values, np.ones(22))

    def test_order_invariance(self):
        rng = np.random.default_rng(0)
        ws = [fv(rng.normal(size=22), window=i) for i in range(5)]
        m1 = compute_maf(ws)
        m2 = compute_maf(ws[::-1])
        assert np.allclose(m1.values, m2.values)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_maf([])


class TestPruning:
    def test_vaf_always_emits_exactly_22(self):
        # the production base set is the fixed post-pruning feature set
        rng = np.random.default_rng(1)
        sig = np.concatenate(
            [tone(150 + 30 * rng.random(), 1.0, amp=0.3 + 0.4 * rng.random()) for _ in range(8)]
        )
        rec = RawRecording(samples=sig, sample_rate_hz=SR)
        for w in compute_vaf(rec, window_s=1.0):
            assert w.values.shape == (22,)

    def test_uncorrelated_columns_all_kept(self):
        rng = np.random.default_rng(0)
        matrix = rng.normal(size=(60, 22))
        assert prune_correlated(matrix) == list(range(22))

    def test_drops_duplicated_column(self):
        rng = np.random.default_rng(2)
        base = rng.normal(size=(30, 3))
        matrix = np.column_stack([base, base[:, 0] * 2.0 + 1.0])
        assert prune_correlated(matrix) == [0, 1, 2]

    def test_constant_column_kept(self):
        rng = np.random.default_rng(3)
        matrix = np.column_stack([rng.normal(size=20), np.full(20, 7.0)])
        assert prune_correlated(matrix) == [0, 1]

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        matrix = rng.normal(size=(25, 8))
        assert prune_correlated(matrix) == prune_correlated(matrix)


def blob_windows(offsets, per_day=3, label_of=None):
    """Windows for synthetic days clustered tightly around per-day offsets."""
    rng = np.random.default_rng(7)
    out = []
    for day, off in enumerate(offsets):
        label = label_of(day) if label_of else ("Control" if off < 5 else "PreTx")
        for w in range(per_day):
            out.append(
                fv(
                    np.full(22, float(off)) + 0.01 * rng.normal(size=22),
                    subject=f"s{day}",
                    day=0,
                    label=label,
                    window=w,
                )
            )
    return out


class TestClusterVaf:
    def test_duplicate_groups_separate(self):
        windows = blob_windows([0, 0, 0, 9, 9, 9])
        assign = cluster_vaf(windows, 2, seed=0)
        labels = assign.labels
        assert len(set(labels[:3].tolist())) == 1
        assert len(set(labels[3:].tolist())) == 1
        assert labels[0] != labels[3]
        assert total_concentration(assign) == 1.0

    def test_single_cluster(self):
        windows = blob_windows([0, 9])
        assign = cluster_vaf(windows, 1, seed=0)
        assert set(assign.labels.tolist()) == {0}

    def test_deterministic_for_seed(self):
        windows = blob_windows([0, 3, 9, 12])
        a1 = cluster_vaf(windows, 3, seed=5)
        a2 = cluster_vaf(windows, 3, seed=5)
        assert np.array_equal(a1.labels, a2.labels)

    def test_majority_tie_breaks_low(self):
        # one day with windows split 1/1 between two clusters anchored by
        # other days: the tie goes to the lower cluster index
        rng = np.random.default_rng(8)
        windows = []
        for i in range(3):
            windows.append(fv(np.zeros(22) + 0.01 * rng.normal(size=22), subject="a", window=i))
        for i in range(3):
            windows.append(fv(np.full(22, 9.0) + 0.01 * rng.normal(size=22), subject="b", window=i))
        windows.append(fv(np.zeros(22) + 0.01 * rng.normal(size=22), subject="tie", window=0))
        windows.append(fv(np.full(22, 9.0) + 0.01 * rng.normal(size=22), subject="tie", window=1))
        assign = cluster_vaf(windows, 2, seed=0)
        mapping = assign.assignment()
        assert mapping[("tie", 0)] == min(mapping[("a", 0)], mapping[("b", 0)])


class TestClusterMaf:
    def test_separable_groups(self):
        days = [compute_maf([w]) for w in blob_windows([0, 0.1, 0.2, 9, 9.1, 9.2], per_day=1)]
        assign = cluster_maf(days, 2)
        assert np.array_equal(assign.labels, [0, 0, 0, 1, 1, 1])

    def test_singletons(self):
        days = [compute_maf([w]) for w in blob_windows([0, 3, 6, 9], per_day=1)]
        assign = cluster_maf(days, 4)
        assert sorted(assign.labels.tolist()) == [0, 1, 2, 3]

    def test_n_bounds(self):
        days = [compute_maf([w]) for w in blob_windows([0, 9], per_day=1)]
        with pytest.raises(ValueError):
            cluster_maf(days, 3)


def test_maf_of_single_window_equals_vaf():
    rec = RawRecording(samples=tone(180, 2.5), sample_rate_hz=SR, subject_id="s")
    windows = compute_vaf(rec, window_s=2.0)
    maf = compute_maf(windows[:1])
    assert np.array_equal(maf.values, windows[0].values)
