"""Exponential-family parameter types, densities, sampling, and conjugacy.

Pinned values are checked against independent oracles: quadrature of the
assembled density, scipy.stats distributions, and Monte Carlo moments.
"""

import numpy as np
import pytest
from scipy import integrate, stats

from laplace_match import distributions
from laplace_match.errors import InvalidParams, NonConjugatePair, OutOfSupport


def _scalar_grid():
    return [
        distributions.exponential(0.7),
        distributions.exponential(3.0),
        distributions.gamma(0.6, 1.5),
        distributions.gamma(4.0, 2.0),
        distributions.inverse_gamma(2.0, 1.0),
        distributions.inverse_gamma(3.5, 2.5),
        distributions.chi_squared(1.0),
        distributions.chi_squared(5.0),
        distributions.beta(0.7, 0.9),
        distributions.beta(2.0, 3.0),
    ]


def _support_interval(params):
    if params.family == "beta":
        return 0.0, 1.0
    return 0.0, np.inf


class TestParamValidation:
    def test_positive_scalars_required(self):
        with pytest.raises(InvalidParams):
            distributions.exponential(0.0)
        with pytest.raises(InvalidParams):
            distributions.gamma(-1.0, 2.0)
        with pytest.raises(InvalidParams):
            distributions.beta(1.0, 0.0)
        with pytest.raises(InvalidParams):
            distributions.chi_squared(-3.0)

    def test_dirichlet_needs_k_at_least_two(self):
        with pytest.raises(InvalidParams):
            distributions.dirichlet([2.0])
        with pytest.raises(InvalidParams):
            distributions.dirichlet([1.0, -1.0])

    def test_wishart_dof_frontier(self):
        # n > p - 1 strictly
        with pytest.raises(InvalidParams):
            distributions.wishart(1.0, np.eye(2))
        distributions.wishart(1.0 + 1e-6, np.eye(2))

    def test_matrix_params_must_be_spd(self):
        with pytest.raises(InvalidParams):
            distributions.inverse_wishart(4.0, np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(InvalidParams):
            distributions.wishart(4.0, np.array([[1.0, 0.5], [0.4, 1.0]]))

    def test_record_round_trip(self):
        params = distributions.wishart(4.0, np.array([[2.0, 0.5], [0.5, 1.0]]))
        back = distributions.from_record(params.to_record())
        assert back.family == "wishart"
        assert back.n == params.n
        np.testing.assert_array_equal(back.V, params.V)


class TestLogPdf:
    def test_exponential_boundary_limit(self):
        # lambda * exp(-lambda x) -> lambda as x -> 0+, log 1 = 0 for lambda=1
        params = distributions.exponential(1.0)
        assert distributions.log_pdf(params, 1e-12) == pytest.approx(0.0, abs=1e-9)

    def test_beta_uniform_case(self):
        params = distributions.beta(1.0, 1.0)
        assert distributions.log_pdf(params, 0.3) == pytest.approx(0.0, abs=1e-12)

    def test_gamma_matches_canonical_assembly(self):
        params = distributions.gamma(4.0, 2.0)
        can = distributions.canonical_form(params)
        direct = distributions.log_pdf(params, 2.0)
        assert direct == pytest.approx(can.log_density(2.0), abs=1e-10)
        # independent cross-check
        assert direct == pytest.approx(stats.gamma(4.0, scale=0.5).logpdf(2.0), abs=1e-10)

    def test_out_of_support(self):
        with pytest.raises(OutOfSupport):
            distributions.log_pdf(distributions.gamma(2.0, 1.0), -1.0)
        with pytest.raises(OutOfSupport):
            distributions.log_pdf(distributions.beta(2.0, 2.0), 1.5)
        with pytest.raises(OutOfSupport):
            distributions.log_pdf(
                distributions.wishart(4.0, np.eye(2)), np.array([[1.0, 2.0], [2.0, 1.0]])
            )

    def test_scipy_cross_checks(self):
        cases = [
            (distributions.exponential(2.0), 0.8, stats.expon(scale=0.5)),
            (distributions.inverse_gamma(3.0, 2.0), 1.1, stats.invgamma(3.0, scale=2.0)),
            (distributions.chi_squared(4.0), 2.7, stats.chi2(4.0)),
            (distributions.beta(2.0, 5.0), 0.2, stats.beta(2.0, 5.0)),
        ]
        for params, x, ref in cases:
            assert distributions.log_pdf(params, x) == pytest.approx(
                ref.logpdf(x), abs=1e-10
            )

    def test_dirichlet_matches_scipy(self):
        params = distributions.dirichlet([1.2, 0.8, 2.0])
        x = np.array([0.2, 0.3, 0.5])
        assert distributions.log_pdf(params, x) == pytest.approx(
            stats.dirichlet(params.alpha).logpdf(x), abs=1e-10
        )

    def test_wishart_matches_scipy(self):
        V = np.array([[1.5, 0.4], [0.4, 1.0]])
        params = distributions.wishart(5.0, V)
        X = np.array([[2.0, 0.3], [0.3, 1.2]])
        assert distributions.log_pdf(params, X) == pytest.approx(
            stats.wishart(5, V).logpdf(X), abs=1e-9
        )
        iw = distributions.inverse_wishart(5.0, V)
        assert distributions.log_pdf(iw, X) == pytest.approx(
            stats.invwishart(5, V).logpdf(X), abs=1e-9
        )

    @pytest.mark.parametrize("params", _scalar_grid(), ids=str)
    def test_quadrature_normalization(self, params):
        lo, hi = _support_interval(params)
        total, _ = integrate.quad(
            lambda x: np.exp(distributions.log_pdf(params, x)), lo, hi, limit=200
        )
        assert total == pytest.approx(1.0, abs=1e-6)


class TestCanonicalForm:
    @pytest.mark.parametrize(
        "params,xs",
        [
            (distributions.exponential(1.7), [0.1, 1.0, 4.0]),
            (distributions.gamma(3.0, 0.8), [0.5, 2.0, 7.0]),
            (distributions.inverse_gamma(2.5, 1.5), [0.3, 1.0, 3.0]),
            (distributions.chi_squared(6.0), [1.0, 5.0, 11.0]),
            (distributions.beta(2.0, 4.0), [0.1, 0.5, 0.9]),
            (distributions.dirichlet([1.5, 2.0, 0.9]), [np.array([0.2, 0.5, 0.3])]),
            (
                distributions.wishart(4.0, np.array([[1.0, 0.3], [0.3, 0.8]])),
                [np.array([[2.0, 0.1], [0.1, 1.5]])],
            ),
            (
                distributions.inverse_wishart(4.0, np.array([[1.2, 0.2], [0.2, 1.0]])),
                [np.array([[0.9, -0.1], [-0.1, 1.1]])],
            ),
        ],
        ids=lambda v: v.family if hasattr(v, "family") else "",
    )
    def test_assembly_matches_log_pdf(self, params, xs):
        can = distributions.canonical_form(params)
        for x in xs:
            assert can.log_density(x) == pytest.approx(
                distributions.log_pdf(params, x), abs=1e-10
            )


class TestSampling:
    def test_seed_determinism(self):
        params = distributions.gamma(2.0, 3.0)
        a = distributions.sample(params, seed=42, count=100)
        b = distributions.sample(params, seed=42, count=100)
        np.testing.assert_array_equal(a, b)

    def test_exponential_mean(self):
        x = distributions.sample(distributions.exponential(2.0), seed=0, count=10**6)
        se = np.std(x, ddof=1) / np.sqrt(x.size)
        assert abs(np.mean(x) - 0.5) < 4 * se

    def test_dirichlet_simplex_closure(self):
        x = distributions.sample(distributions.dirichlet([1.0, 1.0, 1.0]), seed=1, count=2000)
        np.testing.assert_allclose(np.sum(x, axis=-1), 1.0, atol=1e-12)
        assert np.all(x > 0)

    def test_wishart_samples_spd_and_unbiased(self):
        V = np.array([[1.0, 0.4], [0.4, 2.0]])
        params = distributions.wishart(5.0, V)
        S = distributions.sample(params, seed=3, count=20000)
        np.testing.assert_array_equal(S, np.swapaxes(S, -1, -2))
        assert np.all(np.linalg.eigvalsh(S)[..., 0] > 0)
        # E[S] = n V entrywise within 4 SE
        se = np.std(S, axis=0, ddof=1) / np.sqrt(S.shape[0])
        assert np.all(np.abs(np.mean(S, axis=0) - 5.0 * V) < 4 * se)

    @pytest.mark.parametrize(
        "params,cdf",
        [
            (distributions.exponential(1.3), stats.expon(scale=1 / 1.3).cdf),
            (distributions.gamma(2.5, 1.5), stats.gamma(2.5, scale=1 / 1.5).cdf),
            (distributions.inverse_gamma(3.0, 2.0), stats.invgamma(3.0, scale=2.0).cdf),
            (distributions.chi_squared(4.0), stats.chi2(4.0).cdf),
            (distributions.beta(2.0, 3.0), stats.beta(2.0, 3.0).cdf),
        ],
        ids=lambda v: getattr(v, "family", ""),
    )
    def test_kolmogorov_smirnov_one_percent(self, params, cdf):
        x = distributions.sample(params, seed=7, count=10**5)
        stat = stats.kstest(x, cdf).statistic
        critical = 1.63 / np.sqrt(x.size)  # 1% two-sided critical value
        assert stat < critical


class TestConjugateUpdate:
    def test_dirichlet_categorical_counts(self):
        prior = distributions.dirichlet([1.0, 1.0, 1.0])
        post = distributions.conjugate_update(prior, np.array([3.0, 0.0, 1.0]))
        np.testing.assert_allclose(post.alpha, [4.0, 1.0, 2.0], atol=1e-12)

    def test_beta_single_positive_label(self):
        eps = 0.01
        prior = distributions.beta(eps, eps)
        post = distributions.conjugate_update(prior, np.array([1.0]))
        assert post.alpha == pytest.approx(1.0 + eps, abs=1e-15)
        assert post.beta == pytest.approx(eps, abs=1e-15)

    def test_gamma_poisson_counts(self):
        prior = distributions.gamma(1.0, 1.0)
        post = distributions.conjugate_update(prior, np.array([2.0, 3.0]))
        assert post.alpha == pytest.approx(6.0)
        assert post.lam == pytest.approx(3.0)

    def test_gamma_poisson_grid_oracle(self):
        # grid-normalized prior x likelihood matches the conjugate density
        prior = distributions.gamma(1.0, 1.0)
        obs = np.array([2.0, 3.0])
        post = distributions.conjugate_update(prior, obs)
        lam = np.linspace(1e-6, 20.0, 40001)
        log_post = stats.gamma(1.0, scale=1.0).logpdf(lam)
        for k in obs:
            log_post += stats.poisson(lam).logpmf(int(k))
        dens = np.exp(log_post - np.max(log_post))
        dens /= np.trapezoid(dens, lam)
        ref = np.exp([distributions.log_pdf(post, v) for v in lam])
        l1 = np.trapezoid(np.abs(dens - ref), lam)
        assert l1 < 1e-6

    def test_beta_bernoulli_grid_oracle(self):
        prior = distributions.beta(0.5, 0.5)
        obs = np.array([1.0, 1.0, 0.0, 1.0])
        post = distributions.conjugate_update(prior, obs)
        x = np.linspace(1e-6, 1 - 1e-6, 20001)
        log_post = stats.beta(0.5, 0.5).logpdf(x) + 3 * np.log(x) + 1 * np.log1p(-x)
        dens = np.exp(log_post - np.max(log_post))
        dens /= np.trapezoid(dens, x)
        ref = np.exp([distributions.log_pdf(post, v) for v in x])
        assert np.trapezoid(np.abs(dens - ref), x) < 1e-6

    def test_inverse_wishart_scatter_batch(self):
        prior = distributions.inverse_wishart(3.0, np.eye(2))
        S = np.stack([np.diag([2.0, 1.0]), np.array([[1.0, 0.5], [0.5, 1.0]])])
        post = distributions.conjugate_update(prior, S)
        assert post.nu == pytest.approx(5.0)
        np.testing.assert_allclose(post.Psi, np.eye(2) + S[0] + S[1], atol=1e-12)

    def test_non_conjugate_pairs_rejected(self):
        with pytest.raises(NonConjugatePair):
            distributions.conjugate_update(
                distributions.exponential(1.0), np.array([1.0])
            )
        with pytest.raises(NonConjugatePair):
            distributions.conjugate_update(
                distributions.chi_squared(3.0), np.array([1.0])
            )

    def test_invalid_observations(self):
        with pytest.raises(InvalidParams):
            distributions.conjugate_update(
                distributions.beta(1.0, 1.0), np.array([2.0])
            )
        with pytest.raises(InvalidParams):
            distributions.conjugate_update(
                distributions.gamma(1.0, 1.0), np.array([-1.0])
            )


class TestPseudoPrior:
    def test_scalar_families(self):
        b = distributions.pseudo_prior("beta", epsilon_a=0.02)
        assert (b.alpha, b.beta) == (0.02, 0.02)
        g = distributions.pseudo_prior("gamma", epsilon_a=0.02)
        assert (g.alpha, g.lam) == (0.02, 0.02)

    def test_dirichlet_prior_count(self):
        d = distributions.pseudo_prior("dirichlet", K=4)
        np.testing.assert_array_equal(d.alpha, np.ones(4))
        d2 = distributions.pseudo_prior("dirichlet", K=3, dirichlet_prior=2.0)
        np.testing.assert_array_equal(d2.alpha, np.full(3, 2.0))

    def test_inverse_wishart_smallest_valid_dof(self):
        iw = distributions.pseudo_prior("inverse_wishart", epsilon_a=0.01, p=3)
        assert iw.nu == pytest.approx(2.01)
        np.testing.assert_allclose(iw.Psi, 0.01 * np.eye(3), atol=1e-15)

    def test_errors(self):
        with pytest.raises(InvalidParams):
            distributions.pseudo_prior("beta", epsilon_a=0.0)
        with pytest.raises(InvalidParams):
            distributions.pseudo_prior("dirichlet")
        with pytest.raises(NonConjugatePair):
            distributions.pseudo_prior("chi_squared")


class TestEfMean:
    def test_pinned_values(self):
        assert distributions.ef_mean(distributions.exponential(2.0))[0] == pytest.approx(0.5)
        # E[log x] under Beta(1,1) is -1
        assert distributions.ef_mean(distributions.beta(1.0, 1.0))[0] == pytest.approx(-1.0)
        assert distributions.ef_mean(distributions.gamma(2.0, 4.0))[1] == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "params",
        [
            distributions.exponential(1.5),
            distributions.gamma(3.0, 2.0),
            distributions.inverse_gamma(4.0, 3.0),
            distributions.chi_squared(5.0),
            distributions.beta(2.0, 3.0),
            distributions.dirichlet([1.5, 2.5, 1.0]),
            distributions.wishart(5.0, np.array([[1.0, 0.3], [0.3, 0.7]])),
            distributions.inverse_wishart(6.0, np.array([[2.0, 0.4], [0.4, 1.5]])),
        ],
        ids=lambda p: p.family,
    )
    def test_matches_monte_carlo(self, params):
        can = distributions.canonical_form(params)
        x = distributions.sample(params, seed=11, count=2 * 10**5)
        phi = np.stack([np.atleast_1d(can.phi(v)) for v in x])
        se = np.std(phi, axis=0, ddof=1) / np.sqrt(phi.shape[0])
        err = np.abs(np.mean(phi, axis=0) - distributions.ef_mean(params))
        assert np.all(err < 4 * se + 1e-12)
