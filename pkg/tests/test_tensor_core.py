import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from lemo.errors import InsufficientPointsError, NumericalError, ShapeError
from lemo.tensor_core import as_matrix, as_tensor3, kmeans, orthonormal_rows, pairwise_dist


class TestCoercion:
    def test_as_matrix_accepts_lists(self):
        m = as_matrix([[1, 2], [3, 4]])
        assert m.dtype == np.float32
        assert m.flags.c_contiguous
        assert m.shape == (2, 2)

    def test_as_matrix_makes_views_contiguous(self, rng):
        base = rng.standard_normal((6, 8)).astype(np.float32)
        view = base[::2, ::2]
        assert not view.flags.c_contiguous
        m = as_matrix(view)
        assert m.flags.c_contiguous
        assert np.array_equal(m, view)

    @pytest.mark.parametrize("bad", [np.zeros(3), np.zeros((2, 2, 2))])
    def test_as_matrix_rejects_wrong_rank(self, bad):
        with pytest.raises(ShapeError):
            as_matrix(bad)

    @pytest.mark.parametrize("val", [np.nan, np.inf, -np.inf])
    def test_as_matrix_rejects_non_finite(self, val):
        with pytest.raises(NumericalError):
            as_matrix([[1.0, val]])

    def test_as_tensor3_shape_and_dtype(self):
        t = as_tensor3(np.zeros((2, 3, 4), dtype=np.float64))
        assert t.dtype == np.float32
        assert t.shape == (2, 3, 4)

    def test_as_tensor3_rejects_matrix(self):
        with pytest.raises(ShapeError):
            as_tensor3(np.zeros((3, 4)))

    def test_as_tensor3_rejects_nan(self):
        bad = np.zeros((1, 2, 2))
        bad[0, 1, 1] = np.nan
        with pytest.raises(NumericalError):
            as_tensor3(bad)


class TestOrthonormalRows:
    def test_shape_and_dtype(self):
        q = orthonormal_rows(0, 4, 9)
        assert q.shape == (4, 9)
        assert q.dtype == np.float32

    def test_deterministic(self):
        assert np.array_equal(orthonormal_rows(5, 6, 32), orthonormal_rows(5, 6, 32))

    def test_seeds_differ(self):
        assert not np.array_equal(orthonormal_rows(1, 6, 32), orthonormal_rows(2, 6, 32))

    def test_square_case_is_orthogonal(self):
        q = orthonormal_rows(3, 8, 8).astype(np.float64)
        gram = q @ q.T
        assert np.abs(gram - np.eye(8)).max() <= 1e-5

    def test_more_rows_than_dims_rejected(self):
        with pytest.raises(ShapeError):
            orthonormal_rows(0, 5, 4)

    @pytest.mark.parametrize("k,d", [(0, 4), (4, 0)])
    def test_empty_shape_rejected(self, k, d):
        with pytest.raises(ShapeError):
            orthonormal_rows(0, k, d)

    @given(st.integers(0, 1000), st.integers(1, 12), st.integers(0, 50))
    def test_rows_always_orthonormal(self, seed, k, extra):
        d = k + extra
        q = orthonormal_rows(seed, k, d).astype(np.float64)
        gram = q @ q.T
        assert np.abs(gram - np.eye(k)).max() <= 1e-5


class TestKmeans:
    def test_recovers_separated_blobs(self, rng):
        centers = np.array([[0.0, 0.0], [100.0, 0.0], [0.0, 100.0]])
        pts = np.concatenate([c + 0.1 * rng.standard_normal((30, 2)) for c in centers])
        cents, labels = kmeans(pts, 3, seed=0)
        # one centroid per blob, each within the blob's spread
        dist = cdist(cents.astype(np.float64), centers)
        matched = dist.min(axis=1)
        assert (matched < 1.0).all()
        assert len(set(dist.argmin(axis=1))) == 3
        # points of one blob share a label
        for b in range(3):
            assert len(set(labels[30 * b:30 * (b + 1)])) == 1

    def test_centroids_are_member_means(self, rng):
        pts = rng.standard_normal((57, 5)).astype(np.float32)
        cents, labels = kmeans(pts, 6, seed=1)
        for c in range(6):
            members = pts[labels == c].astype(np.float64)
            assert members.size > 0
            np.testing.assert_allclose(cents[c], members.mean(axis=0), atol=1e-5)

    def test_every_cluster_nonempty(self, rng):
        pts = rng.standard_normal((40, 3))
        _, labels = kmeans(pts, 8, seed=2)
        assert set(labels.tolist()) == set(range(8))

    def test_deterministic(self, rng):
        pts = rng.standard_normal((50, 4))
        c1, l1 = kmeans(pts, 5, seed=9)
        c2, l2 = kmeans(pts, 5, seed=9)
        assert np.array_equal(c1, c2)
        assert np.array_equal(l1, l2)

    def test_identical_points_do_not_crash(self):
        pts = np.ones((12, 3), dtype=np.float32)
        cents, labels = kmeans(pts, 3, seed=0)
        np.testing.assert_allclose(cents, 1.0)
        assert set(labels.tolist()) == set(range(3))

    def test_fewer_points_than_clusters_rejected(self):
        with pytest.raises(InsufficientPointsError):
            kmeans(np.zeros((2, 3)), 5)

    def test_bad_k_rejected(self):
        with pytest.raises(ShapeError):
            kmeans(np.zeros((5, 3)), 0)

    def test_bad_max_iter_rejected(self):
        with pytest.raises(ShapeError):
            kmeans(np.zeros((5, 3)), 2, max_iter=0)


class TestPairwiseDist:
    def test_matches_cdist(self, rng):
        a = rng.standard_normal((11, 6))
        b = rng.standard_normal((7, 6))
        got = pairwise_dist(a, b)
        want = cdist(a, b)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)

    def test_self_distance_has_zero_diagonal(self, rng):
        a = rng.standard_normal((9, 4)).astype(np.float32)
        d = pairwise_dist(a, a)
        assert np.array_equal(np.diag(d), np.zeros(9, dtype=np.float32))
        assert np.array_equal(d, d.T)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            pairwise_dist(np.zeros((2, 3)), np.zeros((2, 4)))
