"""Ground-truth environment: sampled SCMs and interventional data batches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .gp import GammaPrior, GpHyperParams, GpPriorConfig, rq_gram
from .graphs import Dag, topological_order
from .roots import RootState, DEFAULT_ROOT_PRIOR


@dataclass(frozen=True)
class InterventionSpec:
    """Hard intervention do(X_i = v); the empty tuple is observational.

    Only single-node interventions are supported.
    """

    targets: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        nodes = [i for i, _ in self.targets]
        if len(set(nodes)) != len(nodes):
            raise ValueError("intervention targets must be distinct")
        if len(nodes) > 1:
            raise ValueError("only single-node interventions are supported")

    @staticmethod
    def observational() -> "InterventionSpec":
        return InterventionSpec(())

    @staticmethod
    def single(node: int, value: float) -> "InterventionSpec":
        return InterventionSpec(((int(node), float(value)),))

    @property
    def is_observational(self) -> bool:
        return len(self.targets) == 0

    @property
    def target_nodes(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.targets)

    def validate_for(self, d: int):
        for i, _ in self.targets:
            if not 0 <= i < d:
                raise ValueError(f"intervention target {i} out of range for d={d}")


@dataclass(frozen=True)
class Batch:
    """One experiment outcome: N_t rows collected under a single spec."""

    spec: InterventionSpec
    data: np.ndarray  # (n, d)
    t: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError("batch data must be a 2-D array")
        for i, v in self.spec.targets:
            if not np.all(data[:, i] == v):
                raise ValueError(f"intervened column {i} must equal {v}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


class Dataset:
    """Ordered collection of batches with per-node truncated views.

    The view for node j excludes all rows collected under interventions on j,
    since intervened nodes contribute an indicator rather than a mechanism
    likelihood. Views are memoized per (node, horizon).
    """

    def __init__(self, batches: list[Batch] | None = None):
        self.batches: list[Batch] = list(batches) if batches else []
        self._views: dict[tuple[int, int], np.ndarray] = {}

    def append(self, batch: Batch):
        self.batches.append(batch)

    def with_batch(self, batch: Batch) -> "Dataset":
        """New Dataset with one extra batch; self is left untouched."""
        return Dataset(self.batches + [batch])

    @property
    def horizon(self) -> int:
        return len(self.batches)

    @property
    def d(self) -> int:
        return self.batches[0].d if self.batches else 0

    def n_rows(self, horizon: int | None = None) -> int:
        h = self.horizon if horizon is None else horizon
        return sum(b.n for b in self.batches[:h])

    def rows_excluding(self, node: int, horizon: int | None = None) -> np.ndarray:
        """All rows up to horizon where `node` was not intervened (m x d)."""
        h = self.horizon if horizon is None else horizon
        key = (node, h)
        if key not in self._views:
            parts = [b.data for b in self.batches[:h] if node not in b.spec.target_nodes]
            if parts:
                view = np.concatenate(parts, axis=0)
            else:
                view = np.zeros((0, self.d if self.batches else 0))
            view.setflags(write=False)
            self._views[key] = view
        return self._views[key]

    def node_view(self, node: int, parents: tuple[int, ...], horizon: int | None = None):
        """(parent values, node values) on the truncated rows for `node`."""
        rows = self.rows_excluding(node, horizon)
        return rows[:, list(parents)], rows[:, node]


@dataclass(frozen=True)
class ScmPriorConfig:
    """Hyperparameters of the generative model prior."""

    root: RootState = DEFAULT_ROOT_PRIOR
    gp_noise: GammaPrior = GammaPrior(50.0, 500.0)
    gp_outputscale: GammaPrior = GammaPrior(100.0, 10.0)
    gp_lengthscale_shape_per_parent: float = 30.0
    gp_lengthscale_rate: float = 30.0
    linear_kernel: bool = False  # model-mismatch toggle; ground truth stays RQ

    def gp_prior_for(self, n_parents: int) -> GpPriorConfig:
        return GpPriorConfig(
            noise=self.gp_noise,
            outputscale=self.gp_outputscale,
            lengthscale=GammaPrior(
                self.gp_lengthscale_shape_per_parent * max(n_parents, 1),
                self.gp_lengthscale_rate,
            ),
        )


class MechanismDraw:
    """A single fixed function drawn from a GP prior, realized lazily.

    Function values are materialized on demand by conditioning the
    (noise-free) GP prior on all previously realized values, so repeated
    evaluation at the same inputs is consistent. Callers must serialize
    access; evaluation mutates the value cache.
    """

    JITTER = 1e-6

    def __init__(self, hp: GpHyperParams):
        self.hp = hp
        self.points = np.zeros((0, 0))
        self.values = np.zeros(0)
        self._index: dict[bytes, int] = {}

    def evaluate(self, points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        out = np.empty(n)
        new_rows: list[int] = []
        pending: dict[bytes, list[int]] = {}
        for r in range(n):
            key = points[r].tobytes()
            if key in self._index:
                out[r] = self.values[self._index[key]]
            elif key in pending:
                pending[key].append(r)
            else:
                pending[key] = [r]
                new_rows.append(r)
        if new_rows:
            new_pts = points[new_rows]
            vals = self._draw(new_pts, rng)
            if self.points.size == 0:
                self.points = new_pts.copy()
                self.values = vals.copy()
            else:
                self.points = np.concatenate([self.points, new_pts], axis=0)
                self.values = np.concatenate([self.values, vals])
            for k, (r, v) in enumerate(zip(new_rows, vals)):
                idx = len(self.values) - len(new_rows) + k
                self._index[points[r].tobytes()] = idx
                for rr in pending[points[r].tobytes()]:
                    out[rr] = v
        return out

    def _draw(self, new_pts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        k_new = rq_gram(new_pts, new_pts, self.hp)
        if self.points.size == 0:
            mean = np.zeros(new_pts.shape[0])
            cov = k_new
        else:
            k_cross = rq_gram(new_pts, self.points, self.hp)
            k_old = rq_gram(self.points, self.points, self.hp)
            cho = cho_factor(k_old + self.JITTER * np.eye(k_old.shape[0]), lower=True)
            sol = cho_solve(cho, k_cross.T)
            mean = k_cross @ cho_solve(cho, self.values)
            cov = k_new - k_cross @ sol
        cov = cov + self.JITTER * np.eye(cov.shape[0])
        chol = np.linalg.cholesky(0.5 * (cov + cov.T))
        return mean + chol @ rng.standard_normal(new_pts.shape[0])

    def rebuild_index(self):
        self._index = {self.points[r].tobytes(): r for r in range(self.points.shape[0])}


class GroundTruthScm:
    """Sampled data-generating SCM (graph, mechanisms, noise variances).

    Evaluation mutates per-mechanism function caches; callers hold exclusive
    access per instance.
    """

    def __init__(
        self,
        graph: Dag,
        root_params: dict[int, tuple[float, float]],
        mechanisms: dict[int, MechanismDraw],
        noise_vars: dict[int, float],
    ):
        self.graph = graph
        self.root_params = root_params  # node -> (mean, variance)
        self.mechanisms = mechanisms  # non-root node -> function draw
        self.noise_vars = noise_vars  # non-root node -> variance
        self.order = topological_order(graph)
        roots = set(graph.roots())
        if set(root_params) != roots:
            raise ValueError("root_params must cover exactly the root nodes")
        if any(v <= 0 for _, v in root_params.values()) or any(
            v <= 0 for v in noise_vars.values()
        ):
            raise ValueError("noise variances must be strictly positive")

    @property
    def d(self) -> int:
        return self.graph.d

    def mechanism_value(self, node: int, parent_rows: np.ndarray, rng) -> np.ndarray:
        return self.mechanisms[node].evaluate(parent_rows, rng)

    def node_conditional_logpdf(self, node: int, rows: np.ndarray, rng) -> np.ndarray:
        """Exact log p*(x_node | parents) per row of a (m x d) matrix."""
        x = rows[:, node]
        if node in self.root_params:
            mean, var = self.root_params[node]
            mu = np.full(x.shape, mean)
        else:
            pa = list(self.graph.parents(node))
            mu = self.mechanism_value(node, rows[:, pa], rng)
            var = self.noise_vars[node]
        return -0.5 * (np.log(2.0 * math.pi * var) + (x - mu) ** 2 / var)


def sample_ground_truth(
    graph: Dag, prior_cfg: ScmPriorConfig, rng: np.random.Generator
) -> GroundTruthScm:
    """Draw (f*, sigma2*) for every node from the model prior."""
    root_params: dict[int, tuple[float, float]] = {}
    mechanisms: dict[int, MechanismDraw] = {}
    noise_vars: dict[int, float] = {}
    roots = set(graph.roots())
    for node in range(graph.d):
        if node in roots:
            st = prior_cfg.root
            var = st.beta / rng.gamma(st.alpha, 1.0)
            mean = st.mu + math.sqrt(var / st.lam) * rng.standard_normal()
            root_params[node] = (float(mean), float(var))
        else:
            p = len(graph.parents(node))
            noise_vars[node] = float(
                rng.gamma(prior_cfg.gp_noise.shape, 1.0 / prior_cfg.gp_noise.rate)
            )
            hp = GpHyperParams(
                lengthscale=float(
                    rng.gamma(
                        prior_cfg.gp_lengthscale_shape_per_parent * p,
                        1.0 / prior_cfg.gp_lengthscale_rate,
                    )
                ),
                outputscale=float(
                    rng.gamma(
                        prior_cfg.gp_outputscale.shape, 1.0 / prior_cfg.gp_outputscale.rate
                    )
                ),
                noise=noise_vars[node],
            )
            mechanisms[node] = MechanismDraw(hp)
    return GroundTruthScm(graph, root_params, mechanisms, noise_vars)


def sample_batch(
    scm: GroundTruthScm,
    spec: InterventionSpec,
    n: int,
    rng: np.random.Generator,
    t: int = 0,
) -> Batch:
    """Ancestral sampling from the interventional distribution of the SCM."""
    if n < 1:
        raise ValueError("n must be >= 1")
    spec.validate_for(scm.d)
    clamped = dict(spec.targets)
    data = np.zeros((n, scm.d))
    for node in scm.order:
        if node in clamped:
            data[:, node] = clamped[node]
        elif node in scm.root_params:
            mean, var = scm.root_params[node]
            data[:, node] = mean + math.sqrt(var) * rng.standard_normal(n)
        else:
            pa = list(scm.graph.parents(node))
            f = scm.mechanism_value(node, data[:, pa], rng)
            data[:, node] = f + math.sqrt(scm.noise_vars[node]) * rng.standard_normal(n)
    return Batch(spec=spec, data=data, t=t)
