"""Bi-level experiment design: GP-UCB over values, argmax over targets.

For every candidate intervention target a 1-D Bayesian optimisation run picks
the most promising intervention value using the GP-UCB acquisition
mu(x) + gamma * sigma(x); the observational candidate (no intervention) is
evaluated once. The experiment is the best (target, value) pair overall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gp import GpHyperParams, GpState
from .scm import InterventionSpec


@dataclass(frozen=True)
class DesignConfig:
    gamma: float = 1.0
    n_bo_rounds: int = 8
    grid_size: int = 512
    domain: tuple[float, float] = (-7.0, 7.0)

    def __post_init__(self):
        if self.n_bo_rounds < 1 or self.grid_size < 2:
            raise ValueError("invalid design configuration")
        if not self.domain[0] < self.domain[1]:
            raise ValueError("domain must be a nonempty interval")


@dataclass(frozen=True)
class TargetResult:
    target: int | None  # None encodes the observational candidate
    value: float
    utility: float


@dataclass(frozen=True)
class DesignOutcome:
    spec: InterventionSpec
    utility: float
    per_target: tuple[TargetResult, ...]


def _surrogate(xs: np.ndarray, us: np.ndarray) -> GpState:
    """Utility surrogate on the normalized domain [0, 1]."""
    var = float(np.var(us))
    var = max(var, 1e-8)
    hp = GpHyperParams(lengthscale=1.0, outputscale=var, noise=0.1 * var)
    return GpState(xs[:, None], us - us.mean(), hp)


def optimize_value(eval_fn, cfg: DesignConfig, rng: np.random.Generator) -> tuple[float, float]:
    """Maximize eval_fn(x) over the domain with GP-UCB.

    The first evaluation is at the domain midpoint, the second uniform at
    random; the remaining budget follows the acquisition argmax on a dense
    grid. Returns the best observed (x, utility).
    """
    lo, hi = cfg.domain
    span = hi - lo
    xs: list[float] = []
    us: list[float] = []

    def evaluate(x: float):
        xs.append(x)
        us.append(float(eval_fn(x)))

    evaluate(0.5 * (lo + hi))
    if cfg.n_bo_rounds > 1:
        evaluate(float(rng.uniform(lo, hi)))
    grid = np.linspace(0.0, 1.0, cfg.grid_size)
    for _ in range(cfg.n_bo_rounds - len(xs)):
        xn = (np.array(xs) - lo) / span
        st = _surrogate(xn, np.array(us))
        mean, var = st.predictive_diag(grid[:, None], include_noise=False)
        acq = mean + cfg.gamma * np.sqrt(var)
        x_next = lo + span * float(grid[int(np.argmax(acq))])
        evaluate(x_next)
    best = int(np.argmax(us))
    return xs[best], us[best]


def design_experiment(
    utility_fn,
    d: int,
    cfg: DesignConfig,
    rng: np.random.Generator,
    targets: tuple[int, ...] | None = None,
    include_observational: bool = True,
) -> DesignOutcome:
    """Pick the experiment maximizing utility_fn(spec).

    ``utility_fn`` maps an InterventionSpec to a scalar utility. Candidate
    targets default to all d nodes. Exact ties are broken in favour of the
    observational candidate, then the lowest target index.
    """
    if targets is None:
        targets = tuple(range(d))
    results: list[TargetResult] = []
    if include_observational:
        u_obs = float(utility_fn(InterventionSpec.observational()))
        results.append(TargetResult(target=None, value=0.0, utility=u_obs))
    for target in targets:
        x_best, u_best = optimize_value(
            lambda x, _t=target: utility_fn(InterventionSpec.single(_t, x)), cfg, rng
        )
        results.append(TargetResult(target=target, value=x_best, utility=u_best))

    def rank(r: TargetResult):
        # maximize utility; ties prefer observational, then lowest index
        return (r.utility, r.target is None, -(r.target if r.target is not None else 0))

    best = max(results, key=rank)
    spec = (
        InterventionSpec.observational()
        if best.target is None
        else InterventionSpec.single(best.target, best.value)
    )
    return DesignOutcome(spec=spec, utility=best.utility, per_target=tuple(results))
