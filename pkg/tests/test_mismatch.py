import numpy as np
import pytest

from pulsesym.distance import default_band_radius, lb_keogh_sym
from pulsesym.matrix import DistanceMatrix
from pulsesym.mismatch import mismatch_matrix, symbolic_mismatch
from pulsesym.segmentation import resample_linear
from pulsesym.symbolize import SymbolVector


def vec(centroids, counts, subject="s", day=0, label="Control"):
    counts = np.asarray(counts)
    return SymbolVector(
        centroids=np.atleast_2d(np.asarray(centroids, dtype=float)),
        frequencies=counts / counts.sum(),
        counts=counts,
        subject_id=subject,
        day_index=day,
        class_label=label,
    )


def mismatch_brute(v_i, v_j):
    """Hand-expanded double sum with the same centroid-length rule."""
    target = max(v_i.length, v_j.length)
    a = [resample_linear(c, target) for c in v_i.centroids]
    b = [resample_linear(c, target) for c in v_j.centroids]
    r = default_band_radius(target)
    w = 0.0
    for fa, sa in zip(v_i.frequencies, a):
        for fb, sb in zip(v_j.frequencies, b):
            w += float(fa) * float(fb) * lb_keogh_sym(sa, sb, r)
    return w


P = np.array([0.0, 1.0, 0.0, 0.0])
Q = np.array([0.0, 0.0, 0.0, 2.0])


class TestSymbolicMismatch:
    def test_identical_single_symbol_zero(self):
        v = vec([P], [10])
        assert symbolic_mismatch(v, v) == 0.0

    def test_half_distance_example(self):
        v_i = vec([P, Q], [5, 5])
        v_j = vec([P], [10])
        d = lb_keogh_sym(P, Q, default_band_radius(4))
        assert symbolic_mismatch(v_i, v_j) == pytest.approx(0.5 * d, abs=1e-12)

    def test_symbol_order_invariance(self):
        v1 = vec([P, Q], [3, 7])
        v2 = vec([Q, P], [7, 3])
        other = vec([P + 1.0], [4])
        assert symbolic_mismatch(v1, other) == pytest.approx(
            symbolic_mismatch(v2, other), abs=1e-12
        )

    def test_multi_symbol_self_mismatch_not_zero(self):
        v = vec([P, Q], [5, 5])
        d = lb_keogh_sym(P, Q, default_band_radius(4))
        assert symbolic_mismatch(v, v) == pytest.approx(0.5 * d, abs=1e-12)
        assert symbolic_mismatch(v, v) > 0

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            ki, kj = rng.integers(1, 5), rng.integers(1, 5)
            length = int(rng.integers(4, 17))
            vi = vec(rng.normal(size=(ki, length)), rng.integers(1, 20, ki))
            vj = vec(rng.normal(size=(kj, length)), rng.integers(1, 20, kj))
            assert symbolic_mismatch(vi, vj) == pytest.approx(
                mismatch_brute(vi, vj), abs=1e-12
            )

    def test_bilinearity_under_count_doubling(self):
        rng = np.random.default_rng(1)
        cents = rng.normal(size=(3, 8))
        counts = np.array([2, 3, 5])
        doubled = np.array([4, 3, 5])
        other = vec(rng.normal(size=(2, 8)), [1, 1])
        w1 = symbolic_mismatch(vec(cents, counts), other)
        w2 = symbolic_mismatch(vec(cents, doubled), other)
        assert w1 == pytest.approx(mismatch_brute(vec(cents, counts), other), abs=1e-12)
        assert w2 == pytest.approx(mismatch_brute(vec(cents, doubled), other), abs=1e-12)

    def test_centroid_length_mismatch_resampled(self):
        vi = vec([np.array([0.0, 1.0, 0.0])], [1])
        vj = vec([np.array([0.0, 0.5, 1.0, 0.5, 0.0])], [1])
        w = symbolic_mismatch(vi, vj)
        assert w == pytest.approx(mismatch_brute(vi, vj), abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        vi = vec(rng.normal(size=(2, 6)), [1, 3])
        vj = vec(rng.normal(size=(3, 6)), [2, 2, 1])
        assert symbolic_mismatch(vi, vj) == pytest.approx(
            symbolic_mismatch(vj, vi), abs=1e-12
        )


class TestMismatchMatrix:
    def test_identical_single_symbol_vectors_zero_off_diagonal(self):
        v1 = vec([P], [5], subject="a")
        v2 = vec([P], [5], subject="b")
        dm = mismatch_matrix([v1, v2])
        assert dm.values[0, 1] == 0.0
        assert dm.values[0, 0] == 0.0

    def test_identical_multi_symbol_vectors_keep_cross_terms(self):
        # only the diagonal is zero by convention; identical two-symbol days
        # still differ by the cross-term mass
        v1 = vec([P, Q], [5, 5], subject="a")
        v2 = vec([P, Q], [5, 5], subject="b")
        dm = mismatch_matrix([v1, v2])
        assert dm.values[0, 1] == pytest.approx(symbolic_mismatch(v1, v2), abs=1e-12)
        assert dm.values[0, 1] > 0
        assert dm.values[0, 0] == 0.0

    def test_three_vectors_hand_expansion(self):
        rng = np.random.default_rng(3)
        vecs = [
            vec(rng.normal(size=(2, 4)), rng.integers(1, 9, 2), subject=f"s{i}")
            for i in range(3)
        ]
        dm = mismatch_matrix(vecs)
        for i in range(3):
            for j in range(3):
                expect = 0.0 if i == j else mismatch_brute(vecs[i], vecs[j])
                assert dm.values[i, j] == pytest.approx(expect, abs=1e-12)

    def test_permutation_consistency(self):
        rng = np.random.default_rng(4)
        vecs = [
            vec(rng.normal(size=(2, 5)), rng.integers(1, 9, 2), subject=f"s{i}")
            for i in range(4)
        ]
        dm = mismatch_matrix(vecs)
        perm = [2, 0, 3, 1]
        dm_p = mismatch_matrix([vecs[i] for i in perm])
        assert np.allclose(dm_p.values, dm.values[np.ix_(perm, perm)], atol=1e-12)

    def test_symmetric_nonnegative_zero_diag(self):
        rng = np.random.default_rng(5)
        vecs = [
            vec(rng.normal(size=(3, 6)), rng.integers(1, 9, 3), subject=f"s{i}")
            for i in range(5)
        ]
        dm = mismatch_matrix(vecs)
        dm.validate()
        assert dm.kind == "Mismatch"
        assert np.array_equal(dm.values, dm.values.T)
        assert np.all(np.diag(dm.values) == 0)
        assert np.all(dm.values >= 0)

    def test_needs_two_vectors(self):
        with pytest.raises(ValueError):
            mismatch_matrix([vec([P], [1])])


class TestMatrixIO:
    def make_dm(self):
        rng = np.random.default_rng(6)
        vecs = [
            vec(rng.normal(size=(2, 5)), rng.integers(1, 9, 2), subject=f"s{i}", day=i)
            for i in range(4)
        ]
        return mismatch_matrix(vecs)

    def test_csv_round_trip_exact(self, tmp_path):
        dm = self.make_dm()
        path = tmp_path / "dm.csv"
        dm.save_csv(path)
        loaded = DistanceMatrix.load_csv(path)
        assert np.array_equal(loaded.values, dm.values)
        assert loaded.kind == "Mismatch"
        assert [str(i) for i in loaded.ids] == [str(i) for i in dm.ids]

    def test_binary_round_trip_exact(self, tmp_path):
        dm = self.make_dm()
        path = tmp_path / "dm.f64"
        dm.save_binary(path)
        loaded = DistanceMatrix.load_binary(path)
        assert np.array_equal(loaded.values, dm.values)
        assert [str(i) for i in loaded.ids] == [str(i) for i in dm.ids]
