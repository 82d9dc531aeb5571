import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpforward.errors import BracketError, ConvergenceError, DimensionError, DomainError
from dpforward.mechanisms import privacy_curve
from dpforward.numerics import (
    RandomStream,
    as_matrix,
    format_matrix,
    frobenius_norm,
    inv_std_normal_cdf,
    parse_matrix,
    read_matrix,
    sample_std_normal_matrix,
    singular_values,
    solve_monotone,
    spectral_norm,
    std_normal_cdf,
    write_matrix,
)

from oracles import jacobi_eigvalsh, mp_phi

# 50-digit bisection on Phi
Q75 = 0.674489750196081743202227


class TestStdNormalCdf:
    def test_symmetry_point(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_far_tail(self):
        assert std_normal_cdf(-40.0) < 1e-300

    def test_quartile(self):
        assert std_normal_cdf(Q75) == pytest.approx(0.75, abs=1e-15)

    @pytest.mark.parametrize("t", [-37.5, -12.0, -5.0, -1.3, -0.2, 0.4, 1.0, 3.3, 7.9, 9.5])
    def test_absolute_error_against_high_precision(self, t):
        assert abs(std_normal_cdf(t) - float(mp_phi(t))) <= 1e-15

    @given(st.floats(-30, 30), st.floats(-30, 30))
    def test_nondecreasing(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert std_normal_cdf(lo) <= std_normal_cdf(hi)


class TestInvStdNormalCdf:
    def test_median(self):
        assert inv_std_normal_cdf(0.5) == 0.0

    def test_quartile(self):
        assert inv_std_normal_cdf(0.75) == pytest.approx(Q75, abs=1e-13)

    @pytest.mark.parametrize("p", [1e-300, 1e-12, 1e-5, 0.01, 0.3, 0.75, 0.999, 1 - 1e-12])
    def test_residual(self, p):
        assert abs(std_normal_cdf(inv_std_normal_cdf(p)) - p) <= 1e-12

    @given(st.floats(1e-10, 0.5))
    def test_antisymmetry(self, p):
        assert inv_std_normal_cdf(p) == pytest.approx(-inv_std_normal_cdf(1 - p), abs=1e-7)

    @given(st.floats(-8, 5.3))
    def test_roundtrip(self, t):
        assert inv_std_normal_cdf(std_normal_cdf(t)) == pytest.approx(t, abs=1e-9)

    @given(st.floats(5.3, 8))
    def test_roundtrip_upper_tail_limited_by_rounding(self, t):
        # Phi(t) near 1 carries only ~1e-16 absolute resolution, so the
        # inverse is checked against the rounded probability instead.
        p = std_normal_cdf(t)
        back = inv_std_normal_cdf(p)
        assert abs(std_normal_cdf(back) - p) <= 2.3e-16
        density = math.exp(-t * t / 2) / math.sqrt(2 * math.pi)
        assert abs(back - t) <= 2.3e-16 / density

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            inv_std_normal_cdf(p)


class TestSolveMonotone:
    def test_identity(self):
        assert solve_monotone(lambda x: x, 0.3, 0.0, 1.0, 1e-14) == pytest.approx(0.3, abs=1e-14)

    def test_cube(self):
        x = solve_monotone(lambda x: x**3, 8.0, 0.0, 3.0, 1e-12, fprime=lambda x: 3 * x * x)
        assert x == pytest.approx(2.0, abs=1e-12)

    def test_decreasing(self):
        x = solve_monotone(lambda x: -x, -0.25, 0.0, 1.0, 1e-14)
        assert x == pytest.approx(0.25, abs=1e-14)

    def test_privacy_curve_root(self):
        delta0 = privacy_curve(math.sqrt(2.0), 1.0)
        s = solve_monotone(lambda s: privacy_curve(s, 1.0), delta0, 1e-3, 10.0, 1e-15)
        assert s == pytest.approx(math.sqrt(2.0), abs=1e-9)

    def test_no_straddle(self):
        with pytest.raises(BracketError):
            solve_monotone(lambda x: x, 2.0, 0.0, 1.0, 1e-12)

    def test_iteration_cap(self):
        with pytest.raises(ConvergenceError):
            solve_monotone(lambda x: x, 1 / 3, 0.0, 1.0, 0.0, max_iter=5)

    def test_newton_never_leaves_bracket(self):
        seen = []

        def f(x):
            seen.append(x)
            return math.atan(x)

        # atan's Newton step from far away overshoots wildly
        solve_monotone(f, 0.0, -3.0, 20.0, 1e-14, fprime=lambda x: 1 / (1 + x * x))
        assert all(-3.0 <= x <= 20.0 for x in seen)


class TestMatrices:
    def test_frobenius_examples(self):
        assert frobenius_norm(np.zeros((2, 3))) == 0.0
        assert frobenius_norm(np.eye(3)) == pytest.approx(math.sqrt(3))
        assert frobenius_norm([[3.0, 4.0]]) == 5.0

    def test_as_matrix_rejects(self):
        with pytest.raises(DomainError):
            as_matrix([[1.0, float("nan")]])
        with pytest.raises(DimensionError):
            as_matrix([1.0, 2.0])

    def test_singular_values_diag(self):
        np.testing.assert_allclose(singular_values(np.diag([3.0, 2.0])), [3.0, 2.0])

    def test_singular_values_rotation(self):
        c, s = math.cos(0.7), math.sin(0.7)
        np.testing.assert_allclose(singular_values([[c, -s], [s, c]]), [1.0, 1.0], atol=1e-14)

    def test_singular_values_vs_jacobi_eigen(self):
        A = np.random.default_rng(5).standard_normal((5, 4))
        expected = np.sqrt(np.clip(jacobi_eigvalsh(A.T @ A), 0, None))
        np.testing.assert_allclose(singular_values(A), expected, rtol=1e-10)

    @pytest.mark.parametrize("shape", [(1, 1), (1, 6), (7, 2), (3, 9), (8, 8)])
    def test_singular_values_shapes(self, shape):
        A = np.random.default_rng(sum(shape)).standard_normal(shape)
        sv = singular_values(A)
        assert sv.shape == (min(shape),)
        assert np.all(np.diff(sv) <= 0)
        np.testing.assert_allclose(sv, np.linalg.svd(A, compute_uv=False), rtol=1e-10)

    def test_singular_values_rank_deficient(self):
        u = np.arange(1.0, 5.0)[:, None]
        sv = singular_values(u @ u.T)
        assert sv[0] == pytest.approx(30.0)
        assert np.all(sv[1:] < 1e-12)

    def test_singular_values_cap(self):
        with pytest.raises(DimensionError):
            singular_values(np.ones((513, 2)))

    def test_spectral_norm_examples(self):
        assert spectral_norm(np.eye(4)) == pytest.approx(1.0, abs=1e-12)
        assert spectral_norm(np.diag([3.0, 2.0])) == pytest.approx(3.0, abs=1e-12)
        assert spectral_norm(np.zeros((3, 3))) == 0.0

    def test_spectral_norm_random(self):
        A = np.random.default_rng(8).standard_normal((8, 8))
        assert spectral_norm(A) == pytest.approx(singular_values(A)[0], abs=1e-6)

    def test_spectral_norm_start_not_orthogonal(self):
        # ones is a null vector of A^T A here
        assert spectral_norm([[1.0, -1.0], [1.0, -1.0]]) == pytest.approx(2.0, abs=1e-12)


class TestRandomStream:
    def test_determinism(self):
        a = sample_std_normal_matrix(RandomStream(7), 2, 2)
        b = sample_std_normal_matrix(RandomStream(7), 2, 2)
        np.testing.assert_array_equal(a, b)

    def test_shards_differ(self):
        a = RandomStream(7).standard_normal(4)
        b = RandomStream(7).spawn(1).standard_normal(4)
        assert not np.array_equal(a, b)

    def test_moments(self):
        z = sample_std_normal_matrix(RandomStream(2024), 1000, 1000)
        assert abs(z.mean()) < 0.005
        assert abs(z.var() - 1.0) < 0.01

    def test_seed_range(self):
        RandomStream(2**64 - 1)
        with pytest.raises(DomainError):
            RandomStream(-1)

    def test_bad_dims(self):
        with pytest.raises(DimensionError):
            sample_std_normal_matrix(RandomStream(1), 0, 3)


class TestMatrixFormat:
    def test_roundtrip_lossless(self, tmp_path):
        A = np.random.default_rng(3).standard_normal((4, 3)) * 10.0 ** np.arange(-6, 6, 1.0).reshape(4, 3)
        path = tmp_path / "m.txt"
        write_matrix(path, A)
        np.testing.assert_array_equal(read_matrix(path), A)

    def test_layout(self):
        assert format_matrix([[1.0, 2.5]]) == "1 2\n1 2.5\n"

    def test_bad_row_count(self):
        with pytest.raises(DimensionError):
            parse_matrix("2 2\n1 2\n")
