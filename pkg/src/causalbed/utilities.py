"""Nested Monte Carlo information-gain utilities for experiment design.

Three utilities score a candidate experiment a = (target, value) by the
expected information its outcome batch X carries about
  - the graph (utility_cd),
  - the full model, graph plus mechanisms (utility_cml),
  - a query interventional variable Y = X_outcome under do(X_treatment = psi)
    with psi ~ U(psi_low, psi_high) (utility_cr).

All expectations over the graph posterior use frozen Monte Carlo samples so
that every candidate evaluated during one design phase sees the same graphs,
intervention values psi and base random numbers (common random numbers).
Each utility is shifted by its outcome entropy so that it estimates a mutual
information: it is nonnegative in expectation and collapses to zero when the
posterior carries no remaining uncertainty about its target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import digamma, logsumexp

from . import roots
from .gp import GpState
from .graphs import Dag, topological_order
from .likelihood import MechanismCache
from .scm import Batch, Dataset, InterventionSpec


@dataclass(frozen=True)
class QuerySpec:
    """Query variable Y = X_outcome under do(X_treatment = psi), psi uniform."""

    treatment: int
    outcome: int
    psi_low: float = 2.0
    psi_high: float = 5.0

    def __post_init__(self):
        if self.treatment == self.outcome:
            raise ValueError("treatment and outcome must differ")
        if not self.psi_low < self.psi_high:
            raise ValueError("psi_low must be < psi_high")


@dataclass(frozen=True)
class McBudget:
    """Sample counts of the nested Monte Carlo estimators."""

    n_outer: int
    n_inner: int
    n_outcomes: int
    n_psi: int = 5
    n_y: int = 3
    n_anc: int = 50

    def __post_init__(self):
        if min(self.n_outer, self.n_inner, self.n_outcomes, self.n_psi, self.n_y, self.n_anc) < 1:
            raise ValueError("all budget counts must be >= 1")

    def halved(self) -> "McBudget":
        h = lambda v: max(1, v // 2)
        return McBudget(
            n_outer=h(self.n_outer),
            n_inner=h(self.n_inner),
            n_outcomes=h(self.n_outcomes),
            n_psi=h(self.n_psi),
            n_y=h(self.n_y),
            n_anc=h(self.n_anc),
        )


CD_CML_BUDGET = McBudget(n_outer=5, n_inner=30, n_outcomes=100)
CR_BUDGET = McBudget(n_outer=3, n_inner=9, n_outcomes=50, n_psi=5, n_y=3, n_anc=50)


@dataclass(frozen=True)
class UtilityValue:
    value: float
    std_error: float
    n_samples: int


def _summarize(samples: np.ndarray, shift: float = 0.0) -> UtilityValue:
    arr = np.asarray(samples, dtype=float)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return UtilityValue(float(arr.mean()) + shift, se, arr.size)


def draw_posterior_graphs(posterior, n: int, rng: np.random.Generator) -> list[Dag]:
    """n iid graph draws from the weighted-graph posterior approximation."""
    support = posterior.support()
    w = np.array([wi for _, wi in support])
    w = w / w.sum()
    idx = rng.choice(len(support), size=n, p=w)
    return [support[i][0] for i in idx]


@dataclass
class FrozenSamples:
    """Monte Carlo draws held fixed for all evaluations within a design phase."""

    outer: list[Dag]
    inner: list[Dag]
    psi: np.ndarray
    outcome_seed: int
    y_seed: int
    anc_seed: int


def freeze_samples(
    posterior,
    budget: McBudget,
    rng: np.random.Generator,
    query: QuerySpec | None = None,
) -> FrozenSamples:
    outer = draw_posterior_graphs(posterior, budget.n_outer, rng)
    inner = draw_posterior_graphs(posterior, budget.n_inner, rng)
    if query is not None:
        psi = rng.uniform(query.psi_low, query.psi_high, size=budget.n_psi)
    else:
        psi = np.zeros(0)
    seeds = rng.integers(0, 2**63, size=3)
    return FrozenSamples(
        outer=outer,
        inner=inner,
        psi=psi,
        outcome_seed=int(seeds[0]),
        y_seed=int(seeds[1]),
        anc_seed=int(seeds[2]),
    )


def _dedup_graphs(graphs: list[Dag]) -> tuple[list[Dag], np.ndarray]:
    uniq: dict[bytes, tuple[Dag, int]] = {}
    for g in graphs:
        prev = uniq.get(g.key())
        uniq[g.key()] = (g, (prev[1] if prev else 0) + 1)
    gs = [g for g, _ in uniq.values()]
    counts = np.array([c for _, c in uniq.values()], dtype=float)
    return gs, counts


class NodeStates:
    """Per-dataset lookup of node posterior states keyed by (node, parents).

    Hyperparameters always come from MAP fits on the base (real) dataset;
    the states themselves condition on ``data``, which may include a
    hypothetical outcome batch.
    """

    def __init__(self, cache: MechanismCache, base_data: Dataset, data: Dataset):
        self.cache = cache
        self.base_data = base_data
        self.data = data
        self._memo: dict[tuple[int, tuple[int, ...]], object] = {}

    def state(self, node: int, parents: tuple[int, ...]):
        key = (node, parents)
        st = self._memo.get(key)
        if st is None:
            rec = self.cache.record_for(node, parents, self.base_data)
            if self.data is self.base_data:
                st = self.cache.state_for(rec, self.data)
            elif rec.is_root:
                _, obs = self.data.node_view(node, ())
                st = roots.posterior_update(self.cache.prior_cfg.root, obs)
            else:
                inputs, targets = self.data.node_view(node, parents)
                st = GpState(inputs, targets, rec.hp)
            self._memo[key] = st
        return st


def simulate_outcomes(
    g: Dag,
    spec: InterventionSpec,
    n_batches: int,
    batch_size: int,
    states: NodeStates,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw hypothetical outcome batches X ~ p(X | g, data, do(spec)).

    Returns (n_batches, batch_size, d); rows within a batch are sampled
    jointly from the posterior predictive, batches are independent.
    """
    d = g.d
    clamped = dict(spec.targets)
    out = np.zeros((n_batches, batch_size, d))
    for node in topological_order(g):
        if node in clamped:
            out[:, :, node] = clamped[node]
            continue
        parents = g.parents(node)
        st = states.state(node, parents)
        if not parents:
            out[:, :, node] = roots.sample_joint_predictive(st, (n_batches, batch_size), rng)
        else:
            out[:, :, node] = st.sample_joint_batch(out[:, :, list(parents)], rng)
    return out


def ancestral_rows(
    g: Dag,
    states: NodeStates,
    target: int,
    clamp: dict[int, float],
    n_rows: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Independent draws of the ancestors of ``target`` under do(clamp).

    Returns (n_rows, d) with only ancestor columns (and clamped columns that
    are ancestors) filled; each row is an independent marginal sample from
    the node-wise posterior predictive.
    """
    anc = set(g.ancestors(target))
    rows = np.zeros((n_rows, g.d))
    for node in topological_order(g):
        if node not in anc:
            continue
        if node in clamp:
            rows[:, node] = clamp[node]
            continue
        parents = g.parents(node)
        st = states.state(node, parents)
        if not parents:
            dof, loc, scale = roots.predictive_t_params(st)
            rows[:, node] = loc + scale * rng.standard_t(dof, size=n_rows)
        else:
            mean, var = st.predictive_diag(rows[:, list(parents)], include_noise=True)
            rows[:, node] = mean + np.sqrt(var) * rng.standard_normal(n_rows)
    return rows


def do_marginal_logpdf(
    g: Dag,
    states: NodeStates,
    target: int,
    clamp: dict[int, float],
    y_values: np.ndarray,
    n_anc: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """log p^do(y | do(clamp), g, data) per entry of y_values.

    The interventional marginal is a mixture over ancestor draws of the
    target's conditional predictive; root targets need no ancestor draws.
    """
    y = np.asarray(y_values, dtype=float).reshape(-1)
    parents = g.parents(target)
    st = states.state(target, parents)
    if not parents:
        return roots.predictive_logpdf(st, y)
    rows = ancestral_rows(g, states, target, clamp, n_anc, rng)
    mean, var = st.predictive_diag(rows[:, list(parents)], include_noise=True)
    lp = -0.5 * (
        np.log(2.0 * math.pi * var)[:, None] + (y[None, :] - mean[:, None]) ** 2 / var[:, None]
    )
    return logsumexp(lp, axis=0) - math.log(n_anc)


def sample_do_outcomes(
    g: Dag,
    states: NodeStates,
    target: int,
    clamp: dict[int, float],
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """n independent draws of the target under do(clamp) from the predictive."""
    parents = g.parents(target)
    st = states.state(target, parents)
    if not parents:
        dof, loc, scale = roots.predictive_t_params(st)
        return loc + scale * rng.standard_t(dof, size=n)
    rows = ancestral_rows(g, states, target, clamp, n, rng)
    mean, var = st.predictive_diag(rows[:, list(parents)], include_noise=True)
    return mean + np.sqrt(var) * rng.standard_normal(n)


class UtilityEvaluator:
    """Evaluates the three utilities against one frozen sample set."""

    def __init__(
        self,
        cache: MechanismCache,
        data: Dataset,
        frozen: FrozenSamples,
        budget: McBudget,
        query: QuerySpec | None = None,
    ):
        self.cache = cache
        self.data = data
        self.frozen = frozen
        self.budget = budget
        self.query = query
        self.states = NodeStates(cache, data, data)
        self._inner_uniq, self._inner_counts = _dedup_graphs(frozen.inner)
        self._h_y: tuple[float, float] | None = None

    # -- shared pieces ------------------------------------------------------

    def _inner_log_mix(self, spec: InterventionSpec, batches: np.ndarray) -> np.ndarray:
        """log E_G' p(X | G', data) for each batch, via the frozen inner draws."""
        lls = np.stack(
            [
                self.cache.predictive_logdens_batches(g, spec, batches, self.data)
                for g in self._inner_uniq
            ]
        )
        logc = np.log(self._inner_counts)[:, None]
        return logsumexp(lls + logc, axis=0) - math.log(len(self.frozen.inner))

    def _inner_scores(self, spec: InterventionSpec, batches: np.ndarray) -> np.ndarray:
        return np.stack(
            [
                self.cache.predictive_logdens_batches(g, spec, batches, self.data)
                for g in self._inner_uniq
            ]
        )

    def _model_entropy(self, g: Dag, spec: InterventionSpec, batch_size: int) -> float:
        """Closed-form E_X[-log p(X | M)] for unintervened nodes under g."""
        total = 0.0
        intervened = set(spec.target_nodes)
        for j in range(g.d):
            if j in intervened:
                continue
            parents = g.parents(j)
            st = self.states.state(j, parents)
            if not parents:
                e_log_var = roots.expected_log_variance(st)
            else:
                e_log_var = math.log(st.hp.noise)
            total += (batch_size / 2.0) * (math.log(2.0 * math.pi * math.e) + e_log_var)
        return total

    # -- utilities ----------------------------------------------------------

    def utility_cd(self, spec: InterventionSpec, batch_size: int) -> UtilityValue:
        """Expected information gain of the outcome batch about the graph."""
        rng_out = np.random.default_rng(self.frozen.outcome_seed)
        samples: list[np.ndarray] = []
        for g in self.frozen.outer:
            x = simulate_outcomes(
                g, spec, self.budget.n_outcomes, batch_size, self.states, rng_out
            )
            ll_self = self.cache.predictive_logdens_batches(g, spec, x, self.data)
            samples.append(ll_self - self._inner_log_mix(spec, x))
        return _summarize(np.concatenate(samples))

    def utility_cml(self, spec: InterventionSpec, batch_size: int) -> UtilityValue:
        """Expected information gain about the full model (graph + mechanisms)."""
        rng_out = np.random.default_rng(self.frozen.outcome_seed)
        samples: list[np.ndarray] = []
        for g in self.frozen.outer:
            x = simulate_outcomes(
                g, spec, self.budget.n_outcomes, batch_size, self.states, rng_out
            )
            ent = self._model_entropy(g, spec, batch_size)
            samples.append(-ent - self._inner_log_mix(spec, x))
        return _summarize(np.concatenate(samples))

    def utility_cr(self, spec: InterventionSpec, batch_size: int) -> UtilityValue:
        """Expected information gain of the outcome batch about the query Y."""
        if self.query is None:
            raise ValueError("utility_cr requires a QuerySpec")
        q = self.query
        b = self.budget
        rng_out = np.random.default_rng(self.frozen.outcome_seed)
        rng_y = np.random.default_rng(self.frozen.y_seed)
        rng_anc = np.random.default_rng(self.frozen.anc_seed)
        log_k = math.log(len(self.frozen.inner))
        logc = np.log(self._inner_counts)
        samples: list[float] = []
        for g in self.frozen.outer:
            x = simulate_outcomes(g, spec, b.n_outcomes, batch_size, self.states, rng_out)
            scores = self._inner_scores(spec, x)  # (K_u, B)
            log_mix_x = logsumexp(scores + logc[:, None], axis=0) - log_k
            for i in range(b.n_outcomes):
                aug = self.data.with_batch(Batch(spec=spec, data=x[i]))
                aug_states = NodeStates(self.cache, self.data, aug)
                t2_parts = []
                for psi in self.frozen.psi:
                    clamp = {q.treatment: float(psi)}
                    ys = sample_do_outcomes(g, aug_states, q.outcome, clamp, b.n_y, rng_y)
                    lp = np.stack(
                        [
                            do_marginal_logpdf(
                                gi, aug_states, q.outcome, clamp, ys, b.n_anc, rng_anc
                            )
                            for gi in self._inner_uniq
                        ]
                    )  # (K_u, n_y)
                    joint = lp + scores[:, i : i + 1] + logc[:, None]
                    t2_parts.append(logsumexp(joint, axis=0) - log_k)
                term2 = float(np.mean(np.concatenate(t2_parts)))
                samples.append(-float(log_mix_x[i]) + term2)
        h_y, h_se = self.outcome_entropy()
        out = _summarize(np.array(samples), shift=h_y)
        # the entropy shift is itself a Monte Carlo estimate; fold its error in
        return replace(out, std_error=math.hypot(out.std_error, h_se))

    def outcome_entropy(self) -> tuple[float, float]:
        """(H(Y | data), standard error): query-outcome entropy pre-experiment.

        An additive constant across candidates; computed once per design
        phase from the frozen samples so that utility_cr estimates the
        mutual information between the outcome batch and the query. Uses a
        larger draw count than the per-candidate estimators since it is
        evaluated only once.
        """
        if self._h_y is not None:
            return self._h_y
        if self.query is None:
            raise ValueError("outcome entropy requires a QuerySpec")
        q = self.query
        b = self.budget
        n_y = max(b.n_y, 200)
        rng_y = np.random.default_rng(self.frozen.y_seed + 1)
        rng_anc = np.random.default_rng(self.frozen.anc_seed + 1)
        logc = np.log(self._inner_counts)
        log_k = math.log(len(self.frozen.inner))
        vals = []
        for g in self.frozen.outer:
            for psi in self.frozen.psi:
                clamp = {q.treatment: float(psi)}
                ys = sample_do_outcomes(g, self.states, q.outcome, clamp, n_y, rng_y)
                lp = np.stack(
                    [
                        do_marginal_logpdf(
                            gi, self.states, q.outcome, clamp, ys, b.n_anc, rng_anc
                        )
                        for gi in self._inner_uniq
                    ]
                )
                vals.append(logsumexp(lp + logc[:, None], axis=0) - log_k)
        flat = -np.concatenate(vals)
        self._h_y = (float(flat.mean()), float(flat.std(ddof=1) / math.sqrt(flat.size)))
        return self._h_y

    def evaluate(self, kind: str, spec: InterventionSpec, batch_size: int) -> UtilityValue:
        if kind == "U_CD":
            return self.utility_cd(spec, batch_size)
        if kind == "U_CML":
            return self.utility_cml(spec, batch_size)
        if kind == "U_CR":
            return self.utility_cr(spec, batch_size)
        raise ValueError(f"unknown utility kind {kind!r}")
