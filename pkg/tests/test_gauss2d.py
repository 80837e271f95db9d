import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad
from scipy.special import ndtr

from censdr import gauss2d as g2
from censdr._backend import set_backend
from censdr.errors import DegenerateCorrelationError, DomainError

from conftest import rel_err


@pytest.fixture(params=["numpy", "numba"], autouse=True)
def backend(request):
    set_backend(request.param)
    yield request.param
    set_backend("numba")


def biv_cdf_quadrature(a, b, rho):
    """Adaptive-quadrature oracle for P(A<=a, B<=b), independent of the kernel.

    Iterated form of the 2-D integral: the inner integral over the second
    coordinate is the conditional normal CDF, the outer one is handled by
    QUADPACK. Absolute accuracy ~1e-13.
    """
    if not np.isfinite(a) or not np.isfinite(b):
        raise ValueError("oracle expects finite arguments")
    s = np.sqrt(1.0 - rho * rho)

    def integrand(t):
        return np.exp(-0.5 * t * t) / np.sqrt(2 * np.pi) * ndtr((b - rho * t) / s)

    lo = min(-9.0, a - 1.0)
    val, _ = quad(integrand, lo, a, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def test_oracle_matches_dblquad():
    # validates the iterated-integral oracle against a literal 2-D quadrature
    rng = np.random.default_rng(1)
    for _ in range(8):
        a, b = rng.uniform(-2.5, 2.5, 2)
        rho = rng.uniform(-0.9, 0.9)
        s2 = 1.0 - rho * rho

        def pdf(v, u):
            q = u * u - 2 * rho * u * v + v * v
            return np.exp(-0.5 * q / s2) / (2 * np.pi * np.sqrt(s2))

        want, err = dblquad(pdf, -8.5, a, -8.5, b, epsabs=1e-10)
        assert abs(biv_cdf_quadrature(a, b, rho) - want) < 5e-9


class TestStdCdf:
    def test_symmetry_and_limits(self):
        assert g2.std_cdf(0.0) == 0.5
        assert g2.std_cdf(np.inf) == 1.0
        assert g2.std_cdf(-np.inf) == 0.0

    def test_high_precision_point(self):
        # frozen mpmath erf value
        assert abs(g2.std_cdf(1.959964) - 0.9750000009035576) < 1e-12

    def test_monotone(self):
        x = np.linspace(-8, 8, 400)
        assert np.all(np.diff(g2.std_cdf(x)) >= 0)

    def test_logcdf_matches_scipy_and_tails(self):
        from scipy.special import log_ndtr

        x = np.linspace(-45, 8, 300)
        got = g2.std_logcdf(x)
        assert np.allclose(got, log_ndtr(x), rtol=1e-12, atol=1e-12)


class TestStdQuantile:
    def test_endpoints(self):
        assert g2.std_quantile(0.5) == 0.0
        assert g2.std_quantile(0.0) == -np.inf
        assert g2.std_quantile(1.0) == np.inf

    def test_inversion_point(self):
        assert abs(g2.std_quantile(0.975) - 1.9599639845400545) < 1e-12

    def test_round_trip(self):
        p = np.linspace(0.001, 0.999, 57)
        assert np.max(np.abs(g2.std_cdf(g2.std_quantile(p)) - p)) < 1e-12

    def test_domain_error(self):
        with pytest.raises(DomainError):
            g2.std_quantile(-0.1)
        with pytest.raises(DomainError):
            g2.std_quantile(1.1)


class TestBivCdf:
    def test_independence_origin(self):
        assert abs(g2.biv_cdf(0.0, 0.0, 0.0) - 0.25) < 1e-14

    def test_marginalization(self):
        for a in (-1.3, 0.0, 2.1):
            for rho in (-0.8, 0.3):
                assert abs(g2.biv_cdf(a, np.inf, rho) - g2.std_cdf(a)) < 1e-14
                assert g2.biv_cdf(a, -np.inf, rho) == 0.0

    def test_arcsin_identity(self):
        want = 0.25 + np.arcsin(0.5) / (2 * np.pi)
        assert abs(g2.biv_cdf(0.0, 0.0, 0.5) - want) < 1e-12
        got = g2.biv_cdf(0.0, 0.0, 0.5)
        assert abs(got - biv_cdf_quadrature(0.0, 0.0, 0.5)) < 1e-11

    def test_random_grid_vs_quadrature(self):
        rng = np.random.default_rng(11)
        for _ in range(120):
            a, b = rng.uniform(-5, 5, 2)
            rho = rng.uniform(-0.99, 0.99)
            assert abs(g2.biv_cdf(a, b, rho) - biv_cdf_quadrature(a, b, rho)) < 1e-10

    def test_degenerate_correlations(self):
        assert abs(g2.biv_cdf(0.3, 0.7, 1.0) - g2.std_cdf(0.3)) < 1e-14
        want = max(0.0, g2.std_cdf(0.3) + g2.std_cdf(0.7) - 1.0)
        assert abs(g2.biv_cdf(0.3, 0.7, -1.0) - want) < 1e-14

    def test_rho_domain(self):
        with pytest.raises(DomainError):
            g2.biv_cdf(0.0, 0.0, 1.5)

    @settings(max_examples=60, deadline=None)
    @given(
        a=st.floats(-4, 4), b=st.floats(-4, 4),
        r1=st.floats(-0.95, 0.95), r2=st.floats(-0.95, 0.95),
    )
    def test_properties(self, a, b, r1, r2):
        # factorization at rho = 0
        assert abs(g2.biv_cdf(a, b, 0.0) - g2.std_cdf(a) * g2.std_cdf(b)) < 1e-12
        # symmetry in the arguments
        assert abs(g2.biv_cdf(a, b, r1) - g2.biv_cdf(b, a, r1)) < 1e-13
        # reflection identity
        refl = g2.std_cdf(a) - g2.biv_cdf(a, -b, -r1)
        assert abs(g2.biv_cdf(a, b, r1) - refl) < 1e-12
        # strict monotonicity in rho
        lo, hi = sorted((r1, r2))
        if hi - lo > 1e-6:
            assert g2.biv_cdf(a, b, lo) < g2.biv_cdf(a, b, hi) + 1e-15

    def test_logcdf_helper(self):
        rng = np.random.default_rng(5)
        a, b = rng.uniform(-3, 3, 50), rng.uniform(-3, 3, 50)
        r = rng.uniform(-0.9, 0.9, 50)
        p = g2.biv_cdf(a, b, r)
        ok = p > 1e-280  # below that the helper switches to its tail form
        assert np.allclose(g2.biv_logcdf(a, b, r)[ok], np.log(p[ok]), rtol=1e-12)
        # deep tails stay finite and ordered
        v = g2.biv_logcdf(-30.0, -28.0, 0.4)
        assert np.isfinite(v) and v < -300


class TestBivPdf:
    def test_origin_values(self):
        assert abs(g2.biv_pdf(0.0, 0.0, 0.0) - 1.0 / (2 * np.pi)) < 1e-15
        want = 1.0 / (2 * np.pi * np.sqrt(0.75))
        assert abs(g2.biv_pdf(0.0, 0.0, 0.5) - want) < 1e-14

    def test_tail_underflow_safe(self):
        assert g2.biv_pdf(10.0, 10.0, 0.0) < 1e-40

    def test_degenerate_error(self):
        with pytest.raises(DegenerateCorrelationError):
            g2.biv_pdf(0.0, 0.0, 1.0)

    def test_integrates_to_one(self):
        # tensor Gauss-Hermite style check on a wide grid
        x = np.linspace(-7, 7, 281)
        h = x[1] - x[0]
        xx, yy = np.meshgrid(x, x)
        total = g2.biv_pdf(xx, yy, 0.6).sum() * h * h
        assert abs(total - 1.0) < 1e-6


class TestDerivatives:
    def test_grad_independence_case(self):
        da, db, dr = g2.biv_cdf_grad(0.0, 0.0, 0.0)
        phi0 = 1.0 / np.sqrt(2 * np.pi)
        assert abs(da - 0.5 * phi0) < 1e-14
        assert abs(db - 0.5 * phi0) < 1e-14
        assert abs(dr - 1.0 / (2 * np.pi)) < 1e-14

    def test_grad_marginal_limit(self):
        da, _, _ = g2.biv_cdf_grad(0.0, np.inf, 0.3)
        assert abs(da - g2.std_pdf(0.0)) < 1e-14

    def test_grad_matches_finite_differences(self):
        h = 1e-5
        for (a, b, r) in [(0.3, -0.2, 0.4), (-1.0, 0.7, -0.3), (1.5, 1.1, 0.8)]:
            da, db, dr = g2.biv_cdf_grad(a, b, r)
            fda = (g2.biv_cdf(a + h, b, r) - g2.biv_cdf(a - h, b, r)) / (2 * h)
            fdb = (g2.biv_cdf(a, b + h, r) - g2.biv_cdf(a, b - h, r)) / (2 * h)
            fdr = (g2.biv_cdf(a, b, r + h) - g2.biv_cdf(a, b, r - h)) / (2 * h)
            assert rel_err(da, fda) < 1e-6
            assert rel_err(db, fdb) < 1e-6
            assert rel_err(dr, fdr) < 1e-6

    def test_drho_equals_pdf(self):
        rng = np.random.default_rng(2)
        a, b = rng.uniform(-3, 3, 20), rng.uniform(-3, 3, 20)
        r = rng.uniform(-0.9, 0.9, 20)
        assert np.allclose(g2.biv_cdf_grad(a, b, r)[2], g2.biv_pdf(a, b, r), rtol=1e-13)

    def test_hess_rho_symmetry_at_origin(self):
        dra, drb, _ = g2.biv_cdf_hess_rho(0.0, 0.0, 0.0)
        assert dra == 0.0 and drb == 0.0

    def test_hess_rho_matches_finite_differences(self):
        h = 1e-5
        for (a, b, r) in [(0.5, 0.5, 0.2), (-1.0, 0.7, -0.3)]:
            dra, drb, drr = g2.biv_cdf_hess_rho(a, b, r)
            pdf_r = lambda aa, bb, rr: g2.biv_cdf_grad(aa, bb, rr)[2]
            assert rel_err(dra, (pdf_r(a + h, b, r) - pdf_r(a - h, b, r)) / (2 * h)) < 1e-5
            assert rel_err(drb, (pdf_r(a, b + h, r) - pdf_r(a, b - h, r)) / (2 * h)) < 1e-5
            assert rel_err(drr, (pdf_r(a, b, r + h) - pdf_r(a, b, r - h)) / (2 * h)) < 1e-5

    def test_randomized_grid_fd_agreement(self):
        rng = np.random.default_rng(9)
        h = 1e-5
        for _ in range(40):
            a, b = rng.uniform(-4, 4, 2)
            r = rng.uniform(-0.95, 0.95)
            da, db, dr = g2.biv_cdf_grad(a, b, r)
            fda = (g2.biv_cdf(a + h, b, r) - g2.biv_cdf(a - h, b, r)) / (2 * h)
            fdr = (g2.biv_cdf(a, b, r + h) - g2.biv_cdf(a, b, r - h)) / (2 * h)
            assert rel_err(da, fda, floor=1e-6) < 1e-5
            assert rel_err(dr, fdr, floor=1e-6) < 1e-5
            _, _, drr = g2.biv_cdf_hess_rho(a, b, r)
            pdf_r = lambda rr: g2.biv_cdf_grad(a, b, rr)[2]
            assert rel_err(drr, (pdf_r(r + h) - pdf_r(r - h)) / (2 * h), floor=1e-6) < 1e-5
