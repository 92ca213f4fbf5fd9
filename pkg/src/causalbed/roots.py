"""Exact conjugate inference for root-node mechanisms.

A root node has a constant mechanism f and Gaussian noise with variance s2;
(f, s2) carries a normal-inverse-gamma prior, so posterior, marginal
likelihood and predictive density are available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln


@dataclass(frozen=True)
class RootState:
    """Normal-inverse-gamma parameters (prior or posterior)."""

    mu: float
    lam: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.lam > 0 and self.alpha > 0 and self.beta > 0):
            raise ValueError("lam, alpha, beta must be strictly positive")


DEFAULT_ROOT_PRIOR = RootState(mu=0.0, lam=0.1, alpha=50.0, beta=25.0)


def posterior_update(state: RootState, obs) -> RootState:
    """Conjugate update with a batch of observations.

    Composing updates over any partition of the observations yields the same
    posterior as a single batch update.
    """
    x = np.asarray(obs, dtype=float).reshape(-1)
    n = x.size
    if n == 0:
        return state
    xbar = float(x.mean())
    ssq = float(np.sum((x - xbar) ** 2))
    lam_n = state.lam + n
    mu_n = (state.lam * state.mu + n * xbar) / lam_n
    alpha_n = state.alpha + n / 2.0
    beta_n = state.beta + 0.5 * ssq + (state.lam * n * (xbar - state.mu) ** 2) / (2.0 * lam_n)
    return RootState(mu=mu_n, lam=lam_n, alpha=alpha_n, beta=beta_n)


def log_marginal_likelihood(state: RootState, obs) -> float:
    """Log of the closed-form marginal p(obs) under the N-invGamma state.

    Chains additively: lml(prior, A+B) = lml(prior, A) + lml(post_A, B).
    """
    x = np.asarray(obs, dtype=float).reshape(-1)
    n = x.size
    if n == 0:
        return 0.0
    post = posterior_update(state, x)
    return float(
        gammaln(post.alpha)
        - gammaln(state.alpha)
        + state.alpha * math.log(state.beta)
        - post.alpha * math.log(post.beta)
        + 0.5 * (math.log(state.lam) - math.log(post.lam))
        - (n / 2.0) * math.log(2.0 * math.pi)
    )


def lml_batched(state: RootState, obs_matrix: np.ndarray) -> np.ndarray:
    """log_marginal_likelihood of each row of obs_matrix (B x n), vectorized."""
    x = np.asarray(obs_matrix, dtype=float)
    if x.ndim != 2:
        raise ValueError("obs_matrix must be 2-D")
    n = x.shape[1]
    if n == 0:
        return np.zeros(x.shape[0])
    xbar = x.mean(axis=1)
    ssq = np.sum((x - xbar[:, None]) ** 2, axis=1)
    lam_n = state.lam + n
    alpha_n = state.alpha + n / 2.0
    beta_n = state.beta + 0.5 * ssq + (state.lam * n * (xbar - state.mu) ** 2) / (2.0 * lam_n)
    return (
        gammaln(alpha_n)
        - gammaln(state.alpha)
        + state.alpha * math.log(state.beta)
        - alpha_n * np.log(beta_n)
        + 0.5 * (math.log(state.lam) - math.log(lam_n))
        - (n / 2.0) * math.log(2.0 * math.pi)
    )


def expected_log_variance(state: RootState) -> float:
    """E[log s2] under the inverse-gamma marginal: -digamma(alpha) + log(beta)."""
    return float(-digamma(state.alpha) + math.log(state.beta))


def predictive_t_params(state: RootState) -> tuple[float, float, float]:
    """(dof, loc, scale) of the single-observation Student-t predictive."""
    dof = 2.0 * state.alpha
    scale = math.sqrt(state.beta * (1.0 + 1.0 / state.lam) / state.alpha)
    return dof, state.mu, scale


def predictive_logpdf(state: RootState, x) -> np.ndarray:
    """Student-t predictive log-density at x (elementwise, one new obs each)."""
    dof, loc, scale = predictive_t_params(state)
    z = (np.asarray(x, dtype=float) - loc) / scale
    return (
        gammaln((dof + 1.0) / 2.0)
        - gammaln(dof / 2.0)
        - 0.5 * math.log(dof * math.pi)
        - math.log(scale)
        - ((dof + 1.0) / 2.0) * np.log1p(z * z / dof)
    )


def sample_joint_predictive(
    state: RootState, shape: tuple[int, ...], rng: np.random.Generator
) -> np.ndarray:
    """Sample blocks from the joint predictive.

    ``shape = (B, n)`` draws B independent blocks of n exchangeable
    observations each: per block, s2 ~ invGamma(alpha, beta),
    f ~ N(mu, s2/lam), rows iid N(f, s2).
    """
    b, n = shape
    s2 = state.beta / rng.gamma(state.alpha, 1.0, size=b)
    f = state.mu + np.sqrt(s2 / state.lam) * rng.standard_normal(b)
    return f[:, None] + np.sqrt(s2)[:, None] * rng.standard_normal((b, n))
