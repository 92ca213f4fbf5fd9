import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import invgamma, norm, t as student_t

from causalbed.roots import (
    DEFAULT_ROOT_PRIOR,
    RootState,
    expected_log_variance,
    lml_batched,
    log_marginal_likelihood,
    posterior_update,
    predictive_logpdf,
    predictive_t_params,
    sample_joint_predictive,
)


def test_default_prior_values():
    assert (DEFAULT_ROOT_PRIOR.mu, DEFAULT_ROOT_PRIOR.lam) == (0.0, 0.1)
    assert (DEFAULT_ROOT_PRIOR.alpha, DEFAULT_ROOT_PRIOR.beta) == (50.0, 25.0)


def test_sequential_equals_batch():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.normal(rng.uniform(-3, 3), rng.uniform(0.2, 2.0), size=rng.integers(1, 30))
        batch = posterior_update(DEFAULT_ROOT_PRIOR, x)
        seq = DEFAULT_ROOT_PRIOR
        for xi in x:
            seq = posterior_update(seq, [xi])
        for name in ("mu", "lam", "alpha", "beta"):
            assert getattr(seq, name) == pytest.approx(getattr(batch, name), abs=1e-12, rel=1e-12)


def test_lml_chains_additively():
    rng = np.random.default_rng(4)
    x = rng.normal(1.0, 0.7, size=17)
    full = log_marginal_likelihood(DEFAULT_ROOT_PRIOR, x)
    part = log_marginal_likelihood(DEFAULT_ROOT_PRIOR, x[:6])
    post = posterior_update(DEFAULT_ROOT_PRIOR, x[:6])
    part += log_marginal_likelihood(post, x[6:])
    assert part == pytest.approx(full, abs=1e-10)


def test_single_obs_marginal_matches_quadrature():
    # marginal p(x) = int N(x | f, s2) NIG(f, s2) df ds2, integrated numerically
    state = RootState(mu=0.5, lam=0.8, alpha=3.0, beta=2.0)
    x0 = 1.3

    def integrand(s2):
        # f | s2 ~ N(mu, s2/lam); x | f ~ N(f, s2) -> x | s2 ~ N(mu, s2(1+1/lam))
        return norm.pdf(x0, state.mu, math.sqrt(s2 * (1 + 1 / state.lam))) * invgamma.pdf(
            s2, state.alpha, scale=state.beta
        )

    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=200)
    assert log_marginal_likelihood(state, [x0]) == pytest.approx(math.log(val), abs=1e-6)


def test_lml_batched_matches_scalar():
    rng = np.random.default_rng(5)
    mat = rng.normal(size=(8, 5))
    batched = lml_batched(DEFAULT_ROOT_PRIOR, mat)
    for i in range(8):
        assert batched[i] == pytest.approx(
            log_marginal_likelihood(DEFAULT_ROOT_PRIOR, mat[i]), abs=1e-10
        )


def test_expected_log_variance_against_mc():
    rng = np.random.default_rng(6)
    state = RootState(mu=0.0, lam=1.0, alpha=4.0, beta=3.0)
    draws = invgamma.rvs(state.alpha, scale=state.beta, size=200_000, random_state=rng)
    mc = np.log(draws)
    se = mc.std(ddof=1) / math.sqrt(mc.size)
    assert abs(expected_log_variance(state) - mc.mean()) < 3 * se


def test_predictive_is_student_t():
    state = RootState(mu=1.0, lam=2.0, alpha=3.0, beta=4.0)
    dof, loc, scale = predictive_t_params(state)
    xs = np.linspace(-3, 5, 9)
    expected = student_t.logpdf(xs, dof, loc=loc, scale=scale)
    np.testing.assert_allclose(predictive_logpdf(state, xs), expected, atol=1e-12)


def test_predictive_consistent_with_marginal():
    # one-step predictive density equals the single-observation marginal
    state = posterior_update(DEFAULT_ROOT_PRIOR, [0.3, -0.2, 0.9])
    x0 = 0.4
    assert predictive_logpdf(state, [x0])[0] == pytest.approx(
        log_marginal_likelihood(state, [x0]), abs=1e-10
    )


def test_sample_joint_predictive_moments():
    state = RootState(mu=2.0, lam=4.0, alpha=6.0, beta=10.0)
    rng = np.random.default_rng(7)
    draws = sample_joint_predictive(state, (50_000, 2), rng)
    # marginal mean = mu; marginal var = beta (1 + 1/lam) / (alpha - 1)
    var = state.beta * (1 + 1 / state.lam) / (state.alpha - 1)
    assert draws.mean() == pytest.approx(state.mu, abs=0.03)
    assert draws.var() == pytest.approx(var, rel=0.05)
    # rows within a block share (f, s2) -> positive covariance beta/(lam (alpha-1))
    cov = np.cov(draws[:, 0], draws[:, 1])[0, 1]
    assert cov == pytest.approx(state.beta / (state.lam * (state.alpha - 1)), rel=0.1)
