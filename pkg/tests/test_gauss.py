import math

import numpy as np
import pytest
from scipy import integrate, stats

from bmsgam.gauss import (
    GaussFitState,
    fit_gauss,
    log_g_posterior_v,
    log_marginal_gauss_fixed_g,
    log_marginal_gauss_tcch,
    log_marginal_null,
    sample_gauss_conditionals,
    sample_gauss_g,
)
from bmsgam.glm import Family, FamilyKind, fit_mle
from bmsgam.marginal import log_marginal_fixed_g
from bmsgam.tcch import GPriorFamily, GPriorHyper, PriorKind, tcch_log_moment, tcch_log_pdf

MIXTURES = [k for k in PriorKind if k not in (PriorKind.CUSTOM, PriorKind.UNIT_INFORMATION)]


def toy(n=10, J=2, seed=0):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, J))
    B -= B.mean(axis=0)
    y = 0.5 + B @ rng.normal(size=J) + rng.normal(size=n)
    return B, y


def summary_state(n=200, J=6, r2=0.4, sse=150.0):
    return GaussFitState(r2, sse, np.zeros(J), 0.0, n, J, np.eye(J))


def log_flat_intercept_normal(y, cov):
    """log of the integral over alpha of N(y; alpha 1, cov) d alpha."""
    n = y.size
    L = np.linalg.cholesky(cov)
    ones = np.linalg.solve(L, np.ones(n))
    z = np.linalg.solve(L, y)
    prec1 = ones @ ones
    a_hat = (ones @ z) / prec1
    r = z - a_hat * ones
    logdet = 2 * np.log(np.diag(L)).sum()
    return -0.5 * n * math.log(2 * math.pi) - 0.5 * logdet - 0.5 * r @ r + 0.5 * math.log(2 * math.pi / prec1)


def conjugate_oracle(B, y, g):
    """Integrate beta and alpha in closed form, then phi (with prior 1/phi) numerically."""
    n = y.size
    P = B @ np.linalg.solve(B.T @ B, B.T)
    base = np.eye(n) + g * P
    # cov = base / phi; the alpha integral scales as phi^{(n-1)/2} times the phi = 1 value
    c1 = log_flat_intercept_normal(y, base)
    Linv = np.linalg.inv(np.linalg.cholesky(base))
    ones, z = Linv @ np.ones(n), Linv @ y
    r = z - (ones @ z) / (ones @ ones) * ones
    S = r @ r
    # c1 includes exp(-S/2); pull it out and restore the phi dependence
    lead = c1 + 0.5 * S
    m = (n - 1) / 2
    f = lambda phi: math.exp(lead + (m - 1) * math.log(phi) - 0.5 * phi * S)
    val, _ = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return math.log(val)


class TestFit:
    def test_r2_matches_projection(self):
        B, y = toy(n=30, J=3)
        fit = fit_gauss(B, y)
        P = B @ np.linalg.solve(B.T @ B, B.T)
        yc = y - y.mean()
        assert fit.r2 == pytest.approx(yc @ P @ yc / (yc @ yc), rel=1e-12)
        assert fit.sse_null == pytest.approx(yc @ yc)

    def test_reparameterization_invariance(self):
        B, y = toy(n=30, J=3, seed=1)
        Q = np.random.default_rng(2).normal(size=(3, 3)) + 3 * np.eye(3)
        assert fit_gauss(B, y).r2 == pytest.approx(fit_gauss(B @ Q, y).r2, rel=1e-12)

    def test_constant_response(self):
        with pytest.raises(ValueError):
            fit_gauss(np.zeros((5, 0)), np.ones(5))


class TestFixedG:
    def test_zero_r2(self):
        fit = summary_state(r2=0.0)
        g = 7.0
        assert log_marginal_gauss_fixed_g(fit, g) == pytest.approx(log_marginal_null(fit) - 3 * math.log1p(g),
                                                                   rel=1e-14)

    def test_null_model(self):
        B, y = toy()
        fit = fit_gauss(B[:, :0], y)
        assert log_marginal_gauss_fixed_g(fit, 5.0) == log_marginal_null(fit)

    @pytest.mark.parametrize("g,seed", [(0.5, 0), (10.0, 1), (300.0, 2)])
    def test_conjugate_oracle(self, g, seed):
        B, y = toy(seed=seed)
        assert log_marginal_gauss_fixed_g(fit_gauss(B, y), g) == pytest.approx(conjugate_oracle(B, y, g), rel=1e-8)

    def test_null_conjugate_oracle(self):
        _, y = toy(seed=3)
        n = y.size
        lead = log_flat_intercept_normal(y, np.eye(n)) + 0.5 * ((y - y.mean()) ** 2).sum()
        S = ((y - y.mean()) ** 2).sum()
        val, _ = integrate.quad(lambda p: math.exp(lead + ((n - 1) / 2 - 1) * math.log(p) - 0.5 * p * S),
                                0, np.inf, epsabs=0, epsrel=1e-12)
        assert log_marginal_null(fit_gauss(np.zeros((n, 0)), y)) == pytest.approx(math.log(val), rel=1e-10)


class TestMixture:
    @pytest.mark.parametrize("kind", MIXTURES)
    def test_against_quadrature(self, kind):
        fit = summary_state()
        prior = GPriorFamily(kind)
        h = prior.resolve(fit.n, fit.J).prior()
        lm = lambda v: log_marginal_gauss_fixed_g(fit, 1 / v - 1)
        ref = lm(0.5 * h.upper)
        f = lambda v: math.exp(lm(v) - ref + tcch_log_pdf(v, h))
        val, _ = integrate.quad(f, 0, h.upper, epsabs=0, epsrel=1e-11, limit=500,
                                points=[h.upper * t for t in (1e-6, 1e-3, 0.1, 0.5, 0.9)])
        assert log_marginal_gauss_tcch(fit, prior) == pytest.approx(ref + math.log(val), rel=1e-6)

    @pytest.mark.parametrize("kind", MIXTURES)
    def test_zero_r2_is_moment(self, kind):
        fit = summary_state(r2=0.0)
        prior = GPriorFamily(kind)
        h = prior.resolve(fit.n, fit.J).prior()
        expected = log_marginal_null(fit) + tcch_log_moment(fit.J / 2, h)
        assert log_marginal_gauss_tcch(fit, prior) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("r2", [0.05, 0.4, 0.95])
    def test_beta_prime_closed_form_matches_phi1(self, r2):
        fit = summary_state(r2=r2)
        prior = GPriorFamily(PriorKind.BETA_PRIME)
        h = prior.resolve(fit.n, fit.J)
        generic = GPriorFamily(PriorKind.CUSTOM, h)
        assert log_marginal_gauss_tcch(fit, prior) == pytest.approx(log_marginal_gauss_tcch(fit, generic), rel=1e-10)

    def test_unit_information(self):
        fit = summary_state()
        assert log_marginal_gauss_tcch(fit, GPriorFamily(PriorKind.UNIT_INFORMATION)) == \
            log_marginal_gauss_fixed_g(fit, 200.0)

    def test_unsupported_hyperparameters(self):
        fit = summary_state()
        custom = GPriorFamily(PriorKind.CUSTOM, GPriorHyper(1, 2, 1, 3, 1, 0.5))
        with pytest.raises(NotImplementedError):
            log_marginal_gauss_tcch(fit, custom)


class TestKnownPrecisionLaplace:
    def test_constant_offset(self):
        # Laplace is exact for the Gaussian likelihood; only the documented constant remains
        rng = np.random.default_rng(4)
        n, phi, g = 40, 1.7, 12.0
        x = rng.uniform(-1, 1, n)
        y = np.sin(3 * x) + rng.normal(scale=math.sqrt(phi), size=n)
        fam = Family(FamilyKind.GAUSSIAN, phi)
        offsets = []
        for _ in range(20):
            J = int(rng.integers(1, 7))
            B = rng.normal(size=(n, J)) + np.outer(x, rng.normal(size=J))
            B -= B.mean(axis=0)
            P = B @ np.linalg.solve(B.T @ B, B.T)
            exact = log_flat_intercept_normal(y, phi * (np.eye(n) + g * P))
            laplace = log_marginal_fixed_g(fit_mle(B, y, fam), g)
            offsets.append(laplace - exact)
        assert np.var(offsets) < 1e-16


class TestConditionals:
    def test_phi_and_alpha_moments(self):
        B, y = toy(n=25, J=3, seed=5)
        fit = fit_gauss(B, y)
        g, N = 4.0, 100_000
        rng = np.random.default_rng(6)
        draws = [sample_gauss_conditionals(fit, g, rng) for _ in range(N)]
        phi = np.array([d[0] for d in draws])
        alpha = np.array([d[1] for d in draws])
        beta = np.array([d[2] for d in draws])
        n = fit.n
        shape, rate = (n - 1) / 2, fit.sse_null * (1 + g * (1 - fit.r2)) / (2 * (1 + g))
        assert abs(phi.mean() - shape / rate) < 4 * math.sqrt(shape) / rate / math.sqrt(N)
        # alpha - ybar has variance E[1/(n phi)] = rate / ((shape - 1) n)
        var_a = rate / ((shape - 1) * n)
        dev2 = (alpha - fit.y_bar) ** 2
        assert abs(dev2.mean() - var_a) < 4 * dev2.std() / math.sqrt(N)
        shrunk = g / (1 + g) * fit.beta_hat
        se = beta.std(axis=0) / math.sqrt(N)
        assert np.all(np.abs(beta.mean(axis=0) - shrunk) < 4 * se)

    def test_large_g_recovers_least_squares(self):
        B, y = toy(n=25, J=3, seed=7)
        fit = fit_gauss(B, y)
        rng = np.random.default_rng(8)
        beta = np.array([sample_gauss_conditionals(fit, 1e12, rng)[2] for _ in range(20_000)])
        coef = np.linalg.lstsq(B, y - y.mean(), rcond=None)[0]
        np.testing.assert_allclose(beta.mean(axis=0), coef, atol=4 * beta.std(axis=0).max() / math.sqrt(20_000))


class TestGSampler:
    def test_unit_information(self):
        fit = summary_state()
        assert sample_gauss_g(fit, GPriorFamily(PriorKind.UNIT_INFORMATION), np.random.default_rng(0)) == 200.0

    @pytest.mark.parametrize("kind", [PriorKind.HYPER_G, PriorKind.INTRINSIC, PriorKind.ROBUST, PriorKind.ZS_ADAPTED])
    def test_cdf_against_target(self, kind):
        fit = summary_state(r2=0.3)
        prior = GPriorFamily(kind)
        h = prior.resolve(fit.n, fit.J)
        g = sample_gauss_g(fit, prior, np.random.default_rng(1), size=100_000)
        v = 1 / (1 + g)
        lf = lambda t: float(log_g_posterior_v(t, fit, h))
        mode_grid = np.linspace(1e-6, 1 / h.nu, 2001)[1:-1]
        ref = max(lf(t) for t in mode_grid)
        dens = lambda t: math.exp(lf(t) - ref)
        total, _ = integrate.quad(dens, 0, 1 / h.nu, limit=400, epsrel=1e-10)
        qs = np.quantile(v, np.linspace(0.02, 0.98, 25))
        cdf = [integrate.quad(dens, 0, q, limit=400, epsrel=1e-10)[0] / total for q in qs]
        emp = [(v <= q).mean() for q in qs]
        assert np.max(np.abs(np.array(cdf) - emp)) < 0.01

    def test_beta_prime_routes_agree(self):
        fit = summary_state(r2=0.5)
        prior = GPriorFamily(PriorKind.BETA_PRIME)
        h = prior.resolve(fit.n, fit.J)
        N = 100_000
        exact = 1 / (1 + sample_gauss_g(fit, prior, np.random.default_rng(2), size=N))
        griddy = 1 / (1 + sample_gauss_g(fit, GPriorFamily(PriorKind.CUSTOM, h), np.random.default_rng(3), size=N))
        for k in (1, 2):
            a, b = exact**k, griddy**k
            se = math.sqrt(a.var() / N + b.var() / N)
            assert abs(a.mean() - b.mean()) < 4 * se
        assert stats.ks_2samp(exact, griddy).pvalue > 0.001

    def test_shapes(self):
        fit = summary_state()
        rng = np.random.default_rng(4)
        prior = GPriorFamily(PriorKind.HYPER_G)
        assert isinstance(sample_gauss_g(fit, prior, rng), float)
        assert sample_gauss_g(fit, prior, rng, size=(3, 2)).shape == (3, 2)
