import numpy as np
import pytest

from rmcstop.sampling import RandomStream, halton, lhs, sobol, standard_normals


class TestRandomStream:
    def test_replay_is_bit_identical(self):
        s = RandomStream(12345).child(7, "paths")
        a = standard_normals(s, 1000)
        b = standard_normals(s, 1000)
        assert np.array_equal(a, b)

    def test_children_are_distinct(self):
        s = RandomStream(1)
        a = s.child(0).normals(100)
        b = s.child(1).normals(100)
        c = s.child("other").normals(100)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_child_order_matters(self):
        s = RandomStream(3)
        assert s.child(1, 2).sub != s.child(2, 1).sub

    def test_normal_moments(self):
        # CLT bound: |mean| <= 3/sqrt(n), |var - 1| <= 0.01 at n = 1e6
        z = standard_normals(RandomStream(42), 10**6)
        assert abs(z.mean()) < 0.005
        assert abs(z.var() - 1.0) < 0.01

    def test_rejects_zero_draws(self):
        with pytest.raises(ValueError):
            standard_normals(RandomStream(0), 0)


class TestSobol:
    def test_box_count_equidistribution(self):
        pts = sobol(1024, 2)
        frac = np.mean((pts[:, 0] < 0.5) & (pts[:, 1] < 0.5))
        assert abs(frac - 0.25) < 0.01

    def test_dyadic_prefix_property(self):
        # indices 1..2^m of the 1-D sequence hit each dyadic interval once
        for m in range(1, 9):
            x = sobol(2**m, 1)[:, 0]
            counts = np.bincount((x * 2**m).astype(int), minlength=2**m)
            assert np.all(counts == 1), f"m={m}"

    def test_single_point(self):
        p = sobol(1, 5)
        assert p.shape == (1, 5)
        assert np.all((p >= 0) & (p < 1))

    def test_origin_skipped(self):
        assert np.all(sobol(1, 3) > 0)

    def test_deterministic(self):
        assert np.array_equal(sobol(100, 4), sobol(100, 4))

    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            sobol(10, 21)


class TestHalton:
    def test_hand_values_2d(self):
        # radical inverse in bases 2 and 3, indices 1..3
        pts = halton(3, 2)
        expected = np.array([[1 / 2, 1 / 3], [1 / 4, 2 / 3], [3 / 4, 1 / 9]])
        assert np.allclose(pts, expected, atol=1e-15)

    def test_index_six_base_two(self):
        # 6 = 110_2, reversed digits 0.011_2 = 3/8
        assert halton(6, 1)[5, 0] == pytest.approx(3 / 8, abs=1e-15)

    def test_strictly_inside_unit_cube(self):
        pts = halton(500, 5)
        assert np.all(pts > 0) and np.all(pts < 1)

    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            halton(10, 21)


class TestLHS:
    def test_stratification(self):
        n = 64
        pts = lhs(n, 3, RandomStream(7))
        for j in range(3):
            cells = np.floor(pts[:, j] * n).astype(int)
            assert sorted(cells) == list(range(n))

    def test_single_point(self):
        p = lhs(1, 2, RandomStream(0))
        assert p.shape == (1, 2)
        assert np.all((p >= 0) & (p < 1))

    def test_marginal_mean(self):
        n = 1000
        pts = lhs(n, 2, RandomStream(11))
        # stratified variance bound from the spec
        assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 2 / np.sqrt(12 * n))

    def test_reproducible(self):
        a = lhs(50, 2, RandomStream(5).child("x"))
        b = lhs(50, 2, RandomStream(5).child("x"))
        assert np.array_equal(a, b)
