"""Numerics tests against independent oracles (series, closed forms, brute force)."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcert.errors import DecompositionError, DomainError
from semcert.numerics import (Interpolant1D, beta_inv_cdf, cumsum, gauss_newton_solve,
                              incomplete_beta, log_det_spd, mean, pinv,
                              sort_descending, std_normal_cdf, std_normal_inv_cdf,
                              trapezoid_path_integral)


# ---------------------------------------------------------------------------
# oracle: standard normal CDF via erf Taylor series (central) and the
# Mills-ratio asymptotic expansion (tails); fully independent of scipy.
# ---------------------------------------------------------------------------

def _erf_series(z: float) -> float:
    total = 0.0
    term = z
    k = 0
    while abs(term) > 1e-18 * max(1.0, abs(total)) and k < 200:
        total += term / (2 * k + 1)
        k += 1
        term *= -z * z / k
    return 2.0 / math.sqrt(math.pi) * total

def _phi_oracle(x: float) -> float:
    if x < -5.0:
        # Phi(x) = pdf(x)/|x| * (1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8)
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        u = 1.0 / (x * x)
        series = 1.0 - u + 3 * u ** 2 - 15 * u ** 3 + 105 * u ** 4
        return pdf / abs(x) * series
    if x > 5.0:
        return 1.0 - _phi_oracle(-x)
    return 0.5 * (1.0 + _erf_series(x / math.sqrt(2.0)))


def _bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestStdNormalInvCdf:
    def test_median(self):
        assert std_normal_inv_cdf(0.5) == pytest.approx(0.0, abs=1e-12)

    def test_one_sigma_vs_series_oracle(self):
        p = 0.8413447460685429
        oracle = _bisect(lambda x: _phi_oracle(x) - p, -8.0, 8.0)
        assert abs(oracle - 1.0) < 1e-9
        assert std_normal_inv_cdf(p) == pytest.approx(1.0, abs=1e-8)

    def test_deep_tail_vs_mills_oracle(self):
        p = 1e-12
        oracle = _bisect(lambda x: _phi_oracle(x) - p, -10.0, -1.0)
        value = std_normal_inv_cdf(p)
        assert value == pytest.approx(oracle, abs=1e-6)
        assert value == pytest.approx(-7.034, abs=2e-3)

    def test_round_trip_on_grid(self):
        xs = np.linspace(-6.0, 6.0, 241)
        ps = np.array([_phi_oracle(float(x)) for x in xs])
        back = std_normal_inv_cdf(ps)
        assert np.max(np.abs(back - xs)) < 1e-7

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.3, float("nan")])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            std_normal_inv_cdf(bad)

    def test_vectorized_matches_scalar(self):
        ps = np.array([0.01, 0.3, 0.75, 0.999])
        vec = std_normal_inv_cdf(ps)
        assert vec.shape == ps.shape
        for p, v in zip(ps, vec):
            assert std_normal_inv_cdf(float(p)) == v


class TestBetaInvCdf:
    def test_uniform(self):
        assert beta_inv_cdf(0.5, 1.0, 1.0) == pytest.approx(0.5, abs=1e-12)

    def test_closed_form_b_equal_one(self):
        # I_x(a, 1) = x^a, hence the inverse is p^(1/a)
        x = beta_inv_cdf(5e-4, 1000.0, 1.0)
        assert x == pytest.approx((5e-4) ** (1.0 / 1000.0), abs=1e-9)
        assert x == pytest.approx(0.9924276, abs=1e-6)

    def test_endpoints(self):
        assert beta_inv_cdf(0.0, 3.0, 7.0) == 0.0
        assert beta_inv_cdf(1.0, 3.0, 7.0) == 1.0

    def test_invalid_shapes(self):
        with pytest.raises(DomainError):
            beta_inv_cdf(0.5, -1.0, 2.0)
        with pytest.raises(DomainError):
            beta_inv_cdf(1.5, 1.0, 2.0)

    @given(st.floats(1e-6, 1 - 1e-6), st.floats(0.2, 50.0), st.floats(0.2, 50.0))
    @settings(max_examples=200, deadline=None)
    def test_exact_inverse_property(self, p, a, b):
        x = beta_inv_cdf(p, a, b)
        assert 0.0 <= x <= 1.0
        assert incomplete_beta(a, b, x) == pytest.approx(p, abs=1e-9)


class TestGaussNewtonSolve:
    def test_identity(self):
        out = gauss_newton_solve(np.eye(2), np.array([3.0, -1.0]))
        assert out == pytest.approx([3.0, -1.0])

    def test_diagonal(self):
        out = gauss_newton_solve(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
        assert out == pytest.approx([1.0, 1.0])

    def test_vs_adjugate_inverse_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            J = rng.normal(size=(5, 3))
            M = J.T @ J + 0.01 * np.eye(3)
            rhs = rng.normal(size=3)
            # adjugate/cofactor inverse for 3x3
            c = np.empty((3, 3))
            for i in range(3):
                for j in range(3):
                    minor = np.delete(np.delete(M, i, axis=0), j, axis=1)
                    c[j, i] = (-1) ** (i + j) * np.linalg.det(minor)
            det = (M[0, 0] * c[0, 0] + M[0, 1] * c[1, 0] + M[0, 2] * c[2, 0])
            expected = (c / det) @ rhs
            got = gauss_newton_solve(M, rhs)
            assert np.max(np.abs(got - expected)) < 1e-9
            assert np.linalg.norm(M @ got - rhs) <= 1e-10 * np.linalg.norm(rhs)

    def test_not_spd(self):
        with pytest.raises(DecompositionError):
            gauss_newton_solve(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))


class TestPinv:
    def test_identity(self):
        assert pinv(np.eye(4)) == pytest.approx(np.eye(4))

    def test_rank_deficient_diagonal(self):
        out = pinv(np.diag([2.0, 0.0]))
        assert out == pytest.approx(np.diag([0.5, 0.0]))

    def test_full_rank_2x2_closed_form(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            A = rng.normal(size=(2, 2))
            if abs(np.linalg.det(A)) < 1e-3:
                continue
            a, b, c, d = A.ravel()
            inv = np.array([[d, -b], [-c, a]]) / (a * d - b * c)
            assert np.max(np.abs(pinv(A) - inv)) < 1e-9

    def test_moore_penrose_identities(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            A = rng.normal(size=(4, 4))
            if rng.random() < 0.5:
                A[:, 2] = A[:, 0] + A[:, 1]  # exercise rank deficiency
            P = pinv(A)
            assert np.max(np.abs(A @ P @ A - A)) < 1e-8
            assert np.max(np.abs(P @ A @ P - P)) < 1e-8
            assert np.max(np.abs((A @ P).T - A @ P)) < 1e-8
            assert np.max(np.abs((P @ A).T - P @ A)) < 1e-8


class TestLogDetSpd:
    def test_identity(self):
        assert log_det_spd(np.eye(3)) == pytest.approx(0.0, abs=1e-14)

    def test_diagonal(self):
        assert log_det_spd(np.diag([np.e, np.e ** 2])) == pytest.approx(3.0, abs=1e-12)

    def test_vs_determinant_expansion(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            J = rng.normal(size=(6, 3))
            M = J.T @ J + 0.1 * np.eye(3)
            # cofactor expansion along the first row
            det = sum((-1) ** j * M[0, j]
                      * np.linalg.det(np.delete(np.delete(M, 0, 0), j, 1))
                      for j in range(3))
            assert log_det_spd(M) == pytest.approx(math.log(det), abs=1e-9)

    def test_not_spd(self):
        with pytest.raises(DecompositionError):
            log_det_spd(np.array([[0.0, 0.0], [0.0, -1.0]]))


class TestTrapezoidPathIntegral:
    def test_constant_field(self):
        val = trapezoid_path_integral(lambda pts: np.ones(len(pts)),
                                      [0.0, 0.0], [3.0, 4.0], 17)
        assert val == pytest.approx(1.0, abs=1e-14)

    def test_linear_norm_field(self):
        start = np.zeros(2)
        end = np.array([0.6, 0.8])
        val = trapezoid_path_integral(
            lambda pts: np.linalg.norm(pts - start, axis=1), start, end, 1001)
        assert val == pytest.approx(0.5, abs=1e-4)

    def test_quadratic_vs_riemann_oracle(self):
        def field(pts):
            return pts[:, 0] ** 2 + 2.0 * pts[:, 1]

        start = np.array([0.2, -0.3])
        end = np.array([1.4, 0.9])
        t = (np.arange(10 ** 6) + 0.5) / 10 ** 6
        pts = start[None, :] + t[:, None] * (end - start)[None, :]
        oracle = field(pts).mean()
        got = trapezoid_path_integral(field, start, end, 2001)
        assert got == pytest.approx(oracle, abs=1e-6)

    def test_needs_two_steps(self):
        with pytest.raises(DomainError):
            trapezoid_path_integral(lambda p: np.ones(len(p)), [0.0], [1.0], 1)


class TestElementwiseUtilities:
    def test_cumsum(self):
        assert cumsum([1.0, 2.0, 3.0]) == pytest.approx([1.0, 3.0, 6.0])

    def test_sort_descending(self):
        assert sort_descending([1.0, 3.0, 2.0]) == pytest.approx([3.0, 2.0, 1.0])

    def test_mean_empty(self):
        with pytest.raises(DomainError):
            mean([])

    def test_nan_rejected(self):
        for fn in (cumsum, sort_descending, mean):
            with pytest.raises(DomainError):
                fn([1.0, float("nan")])


class TestInterpolant1D:
    def test_exact_at_knots(self):
        knots = np.array([0.0, 0.5, 2.0])
        values = np.array([1.0, -3.0, 7.0])
        f = Interpolant1D(knots, values)
        for k, v in zip(knots, values):
            assert f(float(k)) == v

    def test_clamps_beyond_endpoints(self):
        f = Interpolant1D([0.0, 1.0], [2.0, 5.0])
        assert f(-10.0) == 2.0
        assert f(10.0) == 5.0

    def test_rejects_non_increasing(self):
        with pytest.raises(DomainError):
            Interpolant1D([0.0, 0.0, 1.0], [1.0, 2.0, 3.0])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=12, unique=True),
           st.data())
    @settings(max_examples=100, deadline=None)
    def test_monotone_preserving(self, knots, data):
        knots = np.sort(np.asarray(knots, dtype=float))
        values = np.sort(np.asarray(
            data.draw(st.lists(st.floats(-50, 50), min_size=len(knots),
                               max_size=len(knots)))))
        f = Interpolant1D(knots, values)
        q = np.linspace(knots[0], knots[-1], 101)
        out = f(q)
        assert np.all(np.diff(out) >= -1e-12)
