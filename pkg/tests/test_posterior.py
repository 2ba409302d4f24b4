import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from unittest import mock

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from poolprev import posterior as post_mod
from poolprev.errors import InfeasibleFitError, PrecisionError, ValidationError
from poolprev.numerics import PrecisionContext
from poolprev.posterior import (
    Design,
    Observation,
    PosteriorMixture,
    PriorBeta,
    beta_distribution,
    build_posterior,
    cdf,
    credible_interval,
    fit_beta_mom,
    mean,
    pdf,
    pool_positive_prob,
    quantile,
    raw_moment,
    variance,
)

from conftest import QuadOracle, perfect_integrand, random_perfect_cases


@pytest.fixture(scope="module")
def counterexample():
    return build_posterior(PriorBeta(1, 1), Design(m=1, n=1, q=3), Observation(y=0, z=1))


@pytest.fixture(scope="module")
def uniform():
    return build_posterior(PriorBeta(1, 1), Design(m=0, n=0, q=1), Observation(0, 0))


def counter_cdf(p):
    # CDF of (5 Beta(1,2) - 2 Beta(1,5)) / 3 from the closed-form beta CDFs
    return (5 * (1 - (1 - p) ** 2) - 2 * (1 - (1 - p) ** 5)) / 3


def beta_pdf(p, a, b):
    return p ** (a - 1) * (1 - p) ** (b - 1) / (math.gamma(a) * math.gamma(b) / math.gamma(a + b))


class TestPoolPositiveProb:
    @pytest.mark.parametrize("p,q,expected", [(0.5, 1, 0.5), (0, 5, 0), (0.2, 3, 0.488)])
    def test_values(self, p, q, expected):
        assert pool_positive_prob(p, q) == pytest.approx(expected, abs=1e-15)

    @given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 10), st.integers(1, 10))
    def test_monotone(self, p1, p2, q1, q2):
        lo, hi = sorted((p1, p2))
        assert pool_positive_prob(lo, q1) <= pool_positive_prob(hi, q1)
        qa, qb = sorted((q1, q2))
        assert pool_positive_prob(lo, qa) <= pool_positive_prob(lo, qb) + 1e-15
        assert 0 <= pool_positive_prob(lo, qa) <= 1

    @pytest.mark.parametrize("p", [-0.01, 1.01])
    def test_domain(self, p):
        with pytest.raises(ValidationError):
            pool_positive_prob(p, 3)


class TestTypes:
    def test_prior_validation(self):
        with pytest.raises(ValidationError):
            PriorBeta(0, 1)
        with pytest.raises(ValidationError):
            PriorBeta(1, -2)

    def test_prior_exact(self):
        assert PriorBeta(0.5, 2.0) == PriorBeta(Fraction(1, 2), 2)

    def test_design_validation(self):
        with pytest.raises(ValidationError):
            Design(-1, 2, 3)
        with pytest.raises(ValidationError):
            Design(1, 2, 0)

    def test_observation_consistency(self):
        with pytest.raises(ValidationError):
            build_posterior(PriorBeta(), Design(2, 2, 3), Observation(3, 0))
        with pytest.raises(ValidationError):
            build_posterior(PriorBeta(), Design(2, 2, 3), Observation(0, 3))

    def test_frozen(self, counterexample):
        with pytest.raises(dataclasses.FrozenInstanceError):
            counterexample.normalizer = 1


class TestBuildPosterior:
    def test_counterexample_components(self, counterexample):
        comps = [(c.a, c.b, c.weight) for c in counterexample.components]
        assert comps == [(1, 2, 1), (1, 5, -1)]
        assert counterexample.normalizer == Fraction(3, 10)
        assert (counterexample.gamma, counterexample.delta) == (1, 2)

    def test_counterexample_density(self, counterexample):
        for p in (Fraction(0), Fraction(1, 7), Fraction(1, 2), Fraction(9, 10), Fraction(1)):
            f12 = 2 * (1 - p)
            f15 = 5 * (1 - p) ** 4
            assert pdf(counterexample, p) == (5 * f12 - 2 * f15) / 3

    def test_zero_pool_positives_single_component(self):
        post = build_posterior(PriorBeta(2, 3), Design(7, 4, 3), Observation(2, 0))
        assert [(c.a, c.b, c.weight) for c in post.components] == [(4, 5 + 3 + 12, 1)]

    def test_no_data_is_prior(self, uniform):
        assert [(c.a, c.b, c.weight) for c in uniform.components] == [(1, 1, 1)]

    def test_component_structure(self):
        prior, design, obs = PriorBeta(2, 1), Design(5, 6, 4), Observation(3, 4)
        post = build_posterior(prior, design, obs)
        gamma, delta = 3 + 2, 5 - 3 + 1 + 4 * (6 - 4)
        expected = [(gamma, delta + 4 * i, (-1) ** i * math.comb(4, i)) for i in range(5)]
        assert [(c.a, c.b, c.weight) for c in post.components] == expected
        norm = sum(w * Fraction(math.factorial(a - 1) * math.factorial(b - 1), math.factorial(a + b - 1))
                   for a, b, w in expected)
        assert post.normalizer == norm

    def test_nonpositive_normalizer_rejected(self):
        with pytest.raises(PrecisionError):
            PosteriorMixture.from_terms([(1, 2, 1), (1, 1, -1)])

    def test_canonicalization(self):
        post = PosteriorMixture.from_terms([(2, 3, 1), (1, 1, 1), (2, 3, 2), (4, 4, 1), (4, 4, -1)])
        assert [(c.a, c.b, c.weight) for c in post.components] == [(1, 1, 1), (2, 3, 3)]

    def test_conjugate_reduction(self):
        post = build_posterior(PriorBeta(3, 2), Design(12, 0, 5), Observation(4, 0))
        assert [(c.a, c.b, c.weight) for c in post.components] == [(7, 10, 1)]

    @pytest.mark.parametrize("case", random_perfect_cases(8, seed=3, max_q=1))
    def test_q1_reduction(self, case):
        post = build_posterior(PriorBeta(case["alpha"], case["beta"]),
                               Design(case["m"], case["n"], 1), Observation(case["y"], case["z"]))
        a = case["y"] + case["z"] + case["alpha"]
        b = case["m"] + case["n"] - case["y"] - case["z"] + case["beta"]
        for p in np.linspace(0, 1, 100):
            assert float(pdf(post, p)) == pytest.approx(beta_pdf(p, a, b), rel=1e-12, abs=1e-300)


class TestPdf:
    def test_counterexample_zero(self, counterexample):
        assert pdf(counterexample, 0) == 0
        assert float(pdf(counterexample, 0.0)) == 0

    @pytest.mark.parametrize("p", [0, 0.3, Fraction(2, 3), 1])
    def test_uniform(self, uniform, p):
        assert pdf(uniform, p) == 1

    @pytest.mark.parametrize("case", random_perfect_cases(10, seed=21))
    def test_against_quadrature(self, case):
        post = build_posterior(PriorBeta(case["alpha"], case["beta"]),
                               Design(case["m"], case["n"], case["q"]), Observation(case["y"], case["z"]))
        oracle = QuadOracle(lambda p: perfect_integrand(p, **case))
        for p in np.linspace(0, 1, 11):
            assert float(pdf(post, p)) == pytest.approx(oracle.pdf(p), rel=1e-10, abs=1e-300)

    def test_domain(self, uniform):
        with pytest.raises(ValidationError):
            pdf(uniform, 1.5)


class TestCdf:
    def test_endpoints(self, counterexample):
        assert cdf(counterexample, 0) == 0
        assert cdf(counterexample, 1) == 1

    def test_counterexample_half(self, counterexample):
        assert cdf(counterexample, Fraction(1, 2)) == Fraction(29, 48)
        assert counter_cdf(Fraction(1, 2)) == Fraction(29, 48)
        oracle = QuadOracle(lambda p: perfect_integrand(p, 1, 0, 1, 1, 3, 1, 1))
        assert float(cdf(counterexample, 0.5)) == pytest.approx(oracle.cdf(0.5), rel=1e-12)

    def test_exact_matches_real_path(self, counterexample):
        for p in (Fraction(1, 8), Fraction(5, 8)):
            assert float(cdf(counterexample, float(p))) == pytest.approx(float(cdf(counterexample, p)), rel=1e-15)

    def test_monotone(self):
        post = build_posterior(PriorBeta(), Design(10, 30, 4), Observation(3, 17))
        values = [cdf(post, p) for p in np.linspace(0, 1, 1000)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_real_path_normalization(self):
        ctx = PrecisionContext(100)
        post = build_posterior(PriorBeta(0.5, 1.5), Design(6, 9, 3), Observation(2, 5), ctx)
        assert not post.exact
        assert abs(cdf(post, 1) - 1) < ctx.mp().mpf(10) ** (-ctx.digits + 20)

    @pytest.mark.parametrize("case", random_perfect_cases(6, seed=8))
    def test_against_quadrature(self, case):
        post = build_posterior(PriorBeta(case["alpha"], case["beta"]),
                               Design(case["m"], case["n"], case["q"]), Observation(case["y"], case["z"]))
        oracle = QuadOracle(lambda p: perfect_integrand(p, **case))
        for x in (0.1, 0.35, 0.6, 0.85):
            assert float(cdf(post, x)) == pytest.approx(oracle.cdf(x), rel=1e-9, abs=1e-300)


class TestQuantile:
    def test_uniform(self, uniform):
        assert quantile(uniform, 0.25) == pytest.approx(0.25, abs=1e-12)

    def test_round_trip(self):
        post = build_posterior(PriorBeta(), Design(20, 20, 3), Observation(4, 9))
        for p in (0.05, 0.2, 0.3, 0.5):
            u = cdf(post, p)
            if 1e-12 < u < 1 - 1e-12:
                assert quantile(post, u) == pytest.approx(p, abs=1e-10)

    def test_cdf_tolerance(self):
        post = build_posterior(PriorBeta(), Design(3, 12, 5), Observation(1, 6))
        for u in (0.025, 0.5, 0.975):
            assert abs(float(cdf(post, quantile(post, u))) - u) <= 1e-15

    def test_counterexample_median(self, counterexample):
        grid = np.linspace(0, 1, 1_000_001)
        values = counter_cdf(grid)
        oracle = float(np.interp(0.5, values, grid))
        assert quantile(counterexample, 0.5) == pytest.approx(oracle, abs=1e-8)

    @pytest.mark.parametrize("u", [0, 1, -0.5, 2])
    def test_domain(self, uniform, u):
        with pytest.raises(ValidationError):
            quantile(uniform, u)


class TestCredibleInterval:
    def test_uniform(self, uniform):
        low, high = credible_interval(uniform, 0.95)
        assert low == pytest.approx(0.025, abs=1e-12)
        assert high == pytest.approx(0.975, abs=1e-12)

    def test_all_pools_negative(self):
        post = build_posterior(PriorBeta(), Design(0, 200, 3), Observation(0, 0))
        assert [(c.a, c.b) for c in post.components] == [(1, 601)]
        low, high = credible_interval(post, 0.95)
        b = 601
        assert low == pytest.approx(1 - 0.975 ** (1 / b), abs=1e-12)
        assert high == pytest.approx(1 - 0.025 ** (1 / b), abs=1e-12)
        assert high - low < 0.01

    def test_level_domain(self, uniform):
        with pytest.raises(ValidationError):
            credible_interval(uniform, 1.0)


class TestMoments:
    def test_golden(self, counterexample):
        assert raw_moment(counterexample, 1) == Fraction(4, 9)
        assert raw_moment(counterexample, 2) == Fraction(31, 126)
        assert raw_moment(counterexample, 3) == Fraction(13, 84)

    def test_mean_variance(self, counterexample, uniform):
        assert mean(counterexample) == Fraction(4, 9)
        assert variance(counterexample) == Fraction(31, 126) - Fraction(16, 81) == Fraction(55, 1134)
        assert mean(uniform) == Fraction(1, 2)
        assert variance(uniform) == Fraction(1, 12)

    def test_domain(self, uniform):
        with pytest.raises(ValidationError):
            raw_moment(uniform, 0)

    @pytest.mark.parametrize("case", random_perfect_cases(6, seed=13))
    def test_mean_against_quadrature(self, case):
        post = build_posterior(PriorBeta(case["alpha"], case["beta"]),
                               Design(case["m"], case["n"], case["q"]), Observation(case["y"], case["z"]))
        oracle = QuadOracle(lambda p: perfect_integrand(p, **case))
        assert float(mean(post)) == pytest.approx(oracle.mean(), rel=1e-10)
        assert variance(post) >= 0

    def test_real_path_moments(self):
        post = build_posterior(PriorBeta(0.5, 0.5), Design(4, 3, 2), Observation(1, 2))
        case = dict(m=4, y=1, n=3, z=2, q=2, alpha=0.5, beta=0.5)
        oracle = QuadOracle(lambda p: perfect_integrand(p, **case))
        assert float(mean(post)) == pytest.approx(oracle.mean(), rel=1e-9)


class TestMethodOfMoments:
    def test_exact_beta_recovered(self):
        post = build_posterior(PriorBeta(2, 5), Design(0, 0, 1), Observation(0, 0))
        assert fit_beta_mom(post) == (2, 5)
        assert fit_beta_mom(beta_distribution(2, 5)) == (2, 5)

    def test_uniform(self, uniform):
        assert fit_beta_mom(uniform) == (1, 1)

    def test_counterexample_symbolic(self, counterexample):
        mu, v = sympy.Rational(4, 9), sympy.Rational(55, 1134)
        a, b = sympy.symbols("a b", positive=True)
        sol = sympy.solve([a / (a + b) - mu, a * b / ((a + b) ** 2 * (a + b + 1)) - v], [a, b], dict=True)
        assert len(sol) == 1
        expected = (Fraction(str(sol[0][a])), Fraction(str(sol[0][b])))
        assert expected == (Fraction(20, 11), Fraction(25, 11))
        assert fit_beta_mom(counterexample) == expected

    def test_fitted_beta_misses_third_moment(self, counterexample):
        a, b = fit_beta_mom(counterexample)
        fitted = beta_distribution(a, b)
        # non-integer parameters take the real path
        tol = 10.0 ** -150
        assert abs(raw_moment(fitted, 1) - Fraction(4, 9)) < tol
        assert abs(raw_moment(fitted, 2) - Fraction(31, 126)) < tol
        assert abs(float(raw_moment(fitted, 3)) - 13 / 84) > 1e-6

    def test_infeasible(self, uniform):
        with mock.patch.object(post_mod, "variance", return_value=Fraction(1, 4)):
            with pytest.raises(InfeasibleFitError):
                fit_beta_mom(uniform)


class TestNonnegativity:
    @settings(max_examples=25, deadline=None)
    @given(
        m=st.integers(0, 12), n=st.integers(0, 25), q=st.integers(1, 6),
        yf=st.floats(0, 1), zf=st.floats(0, 1),
    )
    def test_density_nonnegative(self, m, n, q, yf, zf):
        post = build_posterior(PriorBeta(), Design(m, n, q), Observation(round(yf * m), round(zf * n)))
        floor = -(10.0 ** (-post.ctx.digits + 20))
        for p in np.linspace(0, 1, 101):
            assert pdf(post, p) >= floor


def test_concurrent_evaluation():
    post = build_posterior(PriorBeta(), Design(10, 40, 3), Observation(2, 12))
    expected = credible_interval(post)
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(lambda _: credible_interval(post), range(8)))
    assert all(r == expected for r in results)
