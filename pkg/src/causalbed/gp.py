"""Gaussian-process machinery for non-root mechanisms.

Rational quadratic kernel, marginal likelihood, predictive posteriors and MAP
hyperparameter fitting under Gamma hyperpriors. The kernel follows the form
k(x, x') = out * (1 + len * |x - x'|^2 / (2 a))^(-a) with a fixed weighting
a = log 2, i.e. the length-scale parameter multiplies the squared distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

ALPHA_RQ = math.log(2.0)

JITTERS = (0.0, 1e-8, 1e-6, 1e-4)


class GpNumericsError(RuntimeError):
    """Cholesky failed even after jitter escalation (pathological kernel)."""


@dataclass(frozen=True)
class GpHyperParams:
    lengthscale: float
    outputscale: float
    noise: float  # noise variance
    alpha_rq: float = ALPHA_RQ

    def __post_init__(self):
        if not (self.lengthscale > 0 and self.outputscale > 0 and self.noise > 0):
            raise ValueError("GP hyperparameters must be strictly positive")


@dataclass(frozen=True)
class GammaPrior:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("shape and rate must be positive")

    def mode(self) -> float:
        # mode of Gamma(shape, rate); falls back to a small value if shape <= 1
        if self.shape > 1.0:
            return (self.shape - 1.0) / self.rate
        return 0.5 / self.rate

    def logpdf(self, x: float) -> float:
        return (self.shape - 1.0) * math.log(x) - self.rate * x

    def dlogpdf(self, x: float) -> float:
        return (self.shape - 1.0) / x - self.rate


@dataclass(frozen=True)
class GpPriorConfig:
    """Gamma hyperpriors for (noise, outputscale, lengthscale)."""

    noise: GammaPrior = GammaPrior(50.0, 500.0)
    outputscale: GammaPrior = GammaPrior(100.0, 10.0)
    lengthscale: GammaPrior = GammaPrior(30.0, 30.0)

    @staticmethod
    def for_parent_count(p: int) -> "GpPriorConfig":
        return GpPriorConfig(lengthscale=GammaPrior(30.0 * max(p, 1), 30.0))

    def modes(self) -> GpHyperParams:
        return GpHyperParams(
            lengthscale=self.lengthscale.mode(),
            outputscale=self.outputscale.mode(),
            noise=self.noise.mode(),
        )


@dataclass(frozen=True)
class OptConfig:
    max_iters: int = 60
    step: float = 0.1
    grad_tol: float = 1e-5
    min_step: float = 1e-12


def rq_kernel(x, x_prime, hp: GpHyperParams) -> float:
    """Kernel value between two points (vectors or scalars)."""
    diff = np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float)
    q = float(np.sum(diff * diff))
    return hp.outputscale * (1.0 + hp.lengthscale * q / (2.0 * hp.alpha_rq)) ** (-hp.alpha_rq)


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared distances; supports leading batch dimensions on a."""
    # a: (..., n, p), b: (m, p) -> (..., n, m)
    a2 = np.sum(a * a, axis=-1)[..., :, None]
    b2 = np.sum(b * b, axis=-1)
    cross = a @ np.swapaxes(b, -1, -2) if b.ndim > 2 else a @ b.T
    q = a2 + b2 - 2.0 * cross
    return np.maximum(q, 0.0)


def rq_gram(a: np.ndarray, b: np.ndarray, hp: GpHyperParams) -> np.ndarray:
    """Kernel matrix between row-sets a (..., n, p) and b (m, p)."""
    q = _sqdist(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return hp.outputscale * (1.0 + hp.lengthscale * q / (2.0 * hp.alpha_rq)) ** (-hp.alpha_rq)


def _chol_with_jitter(mat: np.ndarray):
    for jit in JITTERS:
        try:
            m = mat if jit == 0.0 else mat + jit * np.eye(mat.shape[0])
            return cho_factor(m, lower=True), jit
        except np.linalg.LinAlgError:
            continue
    raise GpNumericsError("covariance matrix not positive definite after jitter escalation")


def _chol_batched(mats: np.ndarray) -> np.ndarray:
    """Batched lower Cholesky with shared jitter escalation."""
    for jit in JITTERS:
        try:
            m = mats if jit == 0.0 else mats + jit * np.eye(mats.shape[-1])
            return np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            continue
    raise GpNumericsError("batched covariance not positive definite after jitter escalation")


class GpState:
    """Immutable training snapshot: inputs, targets, hyperparameters, Cholesky.

    Prediction and likelihood evaluation are safe under concurrent reads.
    """

    def __init__(self, inputs: np.ndarray, targets: np.ndarray, hp: GpHyperParams):
        inputs = np.asarray(inputs, dtype=float)
        targets = np.asarray(targets, dtype=float).reshape(-1)
        if inputs.ndim != 2 or inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs must be (n, p) with matching targets")
        self.inputs = inputs
        self.targets = targets
        self.hp = hp
        self.n = inputs.shape[0]
        if self.n > 0:
            k = rq_gram(inputs, inputs, hp) + hp.noise * np.eye(self.n)
            self._cho, self._jitter = _chol_with_jitter(k)
            self._alpha = cho_solve(self._cho, targets)
        else:
            self._cho = None
            self._jitter = 0.0
            self._alpha = np.zeros(0)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho, rhs)

    def log_marginal(self) -> float:
        if self.n == 0:
            return 0.0
        logdet = 2.0 * float(np.sum(np.log(np.diag(self._cho[0]))))
        return float(
            -0.5 * self.targets @ self._alpha
            - 0.5 * logdet
            - 0.5 * self.n * math.log(2.0 * math.pi)
        )

    def predictive(self, test_inputs: np.ndarray, include_noise: bool = False):
        """Joint posterior over function values (or observations) at test rows."""
        test = np.asarray(test_inputs, dtype=float)
        k_star = rq_gram(test, test, self.hp)
        if self.n == 0:
            mean = np.zeros(test.shape[0])
            cov = k_star
        else:
            k_cross = rq_gram(test, self.inputs, self.hp)
            mean = k_cross @ self._alpha
            cov = k_star - k_cross @ self.solve(k_cross.T)
        if include_noise:
            cov = cov + self.hp.noise * np.eye(test.shape[0])
        return mean, cov

    def predictive_diag(self, test_inputs: np.ndarray, include_noise: bool = False):
        """Pointwise predictive mean and variance (vectorized)."""
        test = np.asarray(test_inputs, dtype=float)
        var_prior = np.full(test.shape[0], self.hp.outputscale)
        if self.n == 0:
            mean = np.zeros(test.shape[0])
            var = var_prior
        else:
            k_cross = rq_gram(test, self.inputs, self.hp)
            mean = k_cross @ self._alpha
            var = var_prior - np.sum(k_cross * self.solve(k_cross.T).T, axis=1)
        var = np.maximum(var, 1e-12)
        if include_noise:
            var = var + self.hp.noise
        return mean, var

    def joint_moments_batch(self, inputs_b: np.ndarray, include_noise: bool = True):
        """Joint predictive mean/cov for B blocks of N rows each.

        inputs_b has shape (B, N, p); returns means (B, N) and covariances
        (B, N, N). The N rows of each block are treated jointly.
        """
        inputs_b = np.asarray(inputs_b, dtype=float)
        b, n_new, _ = inputs_b.shape
        k_star = rq_gram_blocks(inputs_b, self.hp)
        if self.n == 0:
            means = np.zeros((b, n_new))
            covs = k_star
        else:
            k_cross = rq_gram(inputs_b, self.inputs, self.hp)  # (B, N, n)
            means = k_cross @ self._alpha
            sol = cho_solve(self._cho, k_cross.reshape(-1, self.n).T)
            sol = sol.T.reshape(b, n_new, self.n)
            covs = k_star - k_cross @ np.swapaxes(sol, 1, 2)
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        if include_noise:
            covs = covs + self.hp.noise * np.eye(n_new)
        return means, covs

    def joint_logpdf_batch(self, inputs_b: np.ndarray, targets_b: np.ndarray) -> np.ndarray:
        """Joint predictive log-density of B blocks of N observations each."""
        targets_b = np.asarray(targets_b, dtype=float)
        means, covs = self.joint_moments_batch(inputs_b, include_noise=True)
        return mvn_logpdf_batch(targets_b, means, covs)

    def sample_joint_batch(
        self, inputs_b: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Sample B blocks of N observations jointly from the predictive."""
        means, covs = self.joint_moments_batch(inputs_b, include_noise=True)
        chols = _chol_batched(covs)
        z = rng.standard_normal(means.shape)
        return means + np.einsum("bij,bj->bi", chols, z)


def rq_gram_blocks(inputs_b: np.ndarray, hp: GpHyperParams) -> np.ndarray:
    """Within-block kernel matrices for inputs of shape (B, N, p)."""
    diff = inputs_b[:, :, None, :] - inputs_b[:, None, :, :]
    q = np.sum(diff * diff, axis=-1)
    return hp.outputscale * (1.0 + hp.lengthscale * q / (2.0 * hp.alpha_rq)) ** (-hp.alpha_rq)


def mvn_logpdf_batch(x: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Log-density of x[b] under N(means[b], covs[b]) for each block b."""
    n = x.shape[-1]
    chols = _chol_batched(covs)
    resid = x - means
    sol = np.linalg.solve(chols, resid[..., None])[..., 0]
    maha = np.sum(sol * sol, axis=-1)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (maha + logdet + n * math.log(2.0 * math.pi))


def gp_log_marginal(state: GpState) -> float:
    return state.log_marginal()


def gp_predictive(state: GpState, test_inputs: np.ndarray, include_noise: bool = False):
    return state.predictive(test_inputs, include_noise=include_noise)


def _objective_and_grad(inputs, targets, hp: GpHyperParams, prior: GpPriorConfig):
    """MAP objective (lml + log hyperprior) and its gradient in log-params."""
    n = targets.shape[0]
    q = _sqdist(inputs, inputs)
    base = 1.0 + hp.lengthscale * q / (2.0 * hp.alpha_rq)
    m = base ** (-hp.alpha_rq)
    k = hp.outputscale * m + hp.noise * np.eye(n)
    cho, _ = _chol_with_jitter(k)
    alpha_v = cho_solve(cho, targets)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    lml = -0.5 * targets @ alpha_v - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi)

    kinv = cho_solve(cho, np.eye(n))
    dk_out = m
    dk_len = -hp.outputscale * base ** (-hp.alpha_rq - 1.0) * q / 2.0

    def dlml(dk):
        return 0.5 * (alpha_v @ dk @ alpha_v - np.sum(kinv * dk))

    grad_theta = np.array(
        [
            dlml(dk_len) + prior.lengthscale.dlogpdf(hp.lengthscale),
            dlml(dk_out) + prior.outputscale.dlogpdf(hp.outputscale),
            float(0.5 * (alpha_v @ alpha_v - np.trace(kinv))) + prior.noise.dlogpdf(hp.noise),
        ]
    )
    theta = np.array([hp.lengthscale, hp.outputscale, hp.noise])
    obj = (
        float(lml)
        + prior.lengthscale.logpdf(hp.lengthscale)
        + prior.outputscale.logpdf(hp.outputscale)
        + prior.noise.logpdf(hp.noise)
    )
    return obj, grad_theta * theta  # chain rule to log-space


def map_objective(inputs, targets, hp: GpHyperParams, prior: GpPriorConfig) -> float:
    obj, _ = _objective_and_grad(
        np.asarray(inputs, dtype=float), np.asarray(targets, dtype=float).reshape(-1), hp, prior
    )
    return obj


def fit_map_hyperparams(
    inputs: np.ndarray,
    targets: np.ndarray,
    prior: GpPriorConfig,
    opt: OptConfig = OptConfig(),
    init: GpHyperParams | None = None,
) -> GpHyperParams:
    """MAP hyperparameters by gradient ascent in log-parameter space.

    Backtracking halving guarantees the objective never decreases across
    accepted steps; with a zero iteration budget the initialization (prior
    modes by default) is returned unchanged.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    hp = init if init is not None else prior.modes()
    if opt.max_iters == 0 or targets.size == 0:
        return hp
    phi = np.log([hp.lengthscale, hp.outputscale, hp.noise])
    obj, grad = _objective_and_grad(inputs, targets, hp, prior)
    step = opt.step
    for _ in range(opt.max_iters):
        if np.max(np.abs(grad)) < opt.grad_tol:
            break
        accepted = False
        while step >= opt.min_step:
            phi_new = phi + step * grad
            with np.errstate(over="ignore"):
                theta_new = np.exp(phi_new)
            if not np.all(np.isfinite(theta_new)):
                step *= 0.5
                continue
            hp_new = GpHyperParams(*theta_new)
            try:
                obj_new, grad_new = _objective_and_grad(inputs, targets, hp_new, prior)
            except (GpNumericsError, ValueError, np.linalg.LinAlgError):
                obj_new = -np.inf
            if np.isfinite(obj_new) and obj_new > obj:
                phi, obj, grad = phi_new, obj_new, grad_new
                accepted = True
                step = min(step * 1.5, opt.step)
                break
            step *= 0.5
        if not accepted:
            break
    return GpHyperParams(*np.exp(phi))
