"""Evaluation metrics against a known ground-truth SCM.

All expectations over the ground truth use a fixture of samples frozen once
per run, so metric trajectories are comparable across strategies; posterior
expectations reuse the weighted-graph approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import roots
from .dibs import GraphPosterior, weighted_expectation
from .graphs import Dag, shd
from .likelihood import MechanismCache
from .scm import Dataset, GroundTruthScm, InterventionSpec, sample_batch
from .utilities import NodeStates, QuerySpec, do_marginal_logpdf


@dataclass(frozen=True)
class MetricConfig:
    n_psi_query: int = 5
    n_y_query: int = 20
    n_psi_ikld: int = 4
    n_x_ikld: int = 25
    n_anc: int = 200
    ikld_low: float = -7.0
    ikld_high: float = 7.0

    def reduced(self) -> "MetricConfig":
        h = lambda v: max(1, v // 2)
        return MetricConfig(
            n_psi_query=h(self.n_psi_query),
            n_y_query=h(self.n_y_query),
            n_psi_ikld=h(self.n_psi_ikld),
            n_x_ikld=h(self.n_x_ikld),
            n_anc=h(self.n_anc),
            ikld_low=self.ikld_low,
            ikld_high=self.ikld_high,
        )


@dataclass
class EvalFixture:
    """Frozen ground-truth samples shared by every metric evaluation of a run."""

    query: QuerySpec | None
    psi_query: np.ndarray  # (n_psi,)
    y_query: np.ndarray  # (n_psi, n_y) draws of Y | do(treatment = psi), M*
    logp_true_y: np.ndarray  # (n_psi, n_y) true do-marginal log-density at y
    psi_ikld: np.ndarray  # (d, n_psi_i)
    x_ikld: np.ndarray  # (d, n_psi_i, n_x, d) draws of X | do(X_i = psi), M*
    logp_true_x: np.ndarray  # (d, n_psi_i, n_x) true joint log-density
    anc_seed: int
    cfg: MetricConfig


def _true_do_marginal_logpdf(
    scm_star: GroundTruthScm,
    target: int,
    spec: InterventionSpec,
    y: np.ndarray,
    n_anc: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """log p*(y | do(spec)) under the ground truth, via ancestral Monte Carlo."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if target in scm_star.root_params:
        mean, var = scm_star.root_params[target]
        return -0.5 * (np.log(2.0 * math.pi * var) + (y - mean) ** 2 / var)
    rows = sample_batch(scm_star, spec, n_anc, rng).data
    pa = list(scm_star.graph.parents(target))
    mu = scm_star.mechanism_value(target, rows[:, pa], rng)
    var = scm_star.noise_vars[target]
    lp = -0.5 * (
        math.log(2.0 * math.pi * var) + (y[None, :] - mu[:, None]) ** 2 / var
    )
    return logsumexp(lp, axis=0) - math.log(n_anc)


def build_fixture(
    scm_star: GroundTruthScm,
    query: QuerySpec | None,
    cfg: MetricConfig,
    rng: np.random.Generator,
) -> EvalFixture:
    d = scm_star.d
    if query is not None:
        psi_q = rng.uniform(query.psi_low, query.psi_high, size=cfg.n_psi_query)
        y_q = np.zeros((cfg.n_psi_query, cfg.n_y_query))
        lp_q = np.zeros_like(y_q)
        for j, psi in enumerate(psi_q):
            spec = InterventionSpec.single(query.treatment, float(psi))
            y_q[j] = sample_batch(scm_star, spec, cfg.n_y_query, rng).data[:, query.outcome]
            lp_q[j] = _true_do_marginal_logpdf(
                scm_star, query.outcome, spec, y_q[j], cfg.n_anc, rng
            )
    else:
        psi_q = np.zeros(0)
        y_q = np.zeros((0, 0))
        lp_q = np.zeros((0, 0))
    psi_i = rng.uniform(cfg.ikld_low, cfg.ikld_high, size=(d, cfg.n_psi_ikld))
    x_i = np.zeros((d, cfg.n_psi_ikld, cfg.n_x_ikld, d))
    lp_i = np.zeros((d, cfg.n_psi_ikld, cfg.n_x_ikld))
    for i in range(d):
        for j in range(cfg.n_psi_ikld):
            spec = InterventionSpec.single(i, float(psi_i[i, j]))
            rows = sample_batch(scm_star, spec, cfg.n_x_ikld, rng).data
            x_i[i, j] = rows
            total = np.zeros(cfg.n_x_ikld)
            for node in range(d):
                if node == i:
                    continue
                total += scm_star.node_conditional_logpdf(node, rows, rng)
            lp_i[i, j] = total
    return EvalFixture(
        query=query,
        psi_query=psi_q,
        y_query=y_q,
        logp_true_y=lp_q,
        psi_ikld=psi_i,
        x_ikld=x_i,
        logp_true_x=lp_i,
        anc_seed=int(rng.integers(0, 2**63)),
        cfg=cfg,
    )


def _joint_conditional_logpdf(
    g: Dag, states: NodeStates, rows: np.ndarray, intervened: int
) -> np.ndarray:
    """Per-row log p^do(x | g, data) via the truncated factorization.

    Every unintervened node contributes its pointwise predictive density at
    the observed parent values.
    """
    total = np.zeros(rows.shape[0])
    for node in range(g.d):
        if node == intervened:
            continue
        parents = g.parents(node)
        st = states.state(node, parents)
        x = rows[:, node]
        if not parents:
            total += roots.predictive_logpdf(st, x)
        else:
            mean, var = st.predictive_diag(rows[:, list(parents)], include_noise=True)
            total += -0.5 * (np.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)
    return total


def eshd(posterior: GraphPosterior, g_star: Dag) -> float:
    """Posterior expectation of the structural Hamming distance to the truth."""
    return float(weighted_expectation(lambda g: shd(g, g_star), posterior))


def auprc(posterior: GraphPosterior, g_star: Dag) -> float:
    """Area under the precision-recall curve of edge prediction.

    Edges are ranked by posterior marginal probability; ties are grouped so
    equal scores enter the curve as one point (non-interpolated area).
    """
    d = g_star.d
    probs = posterior.expected_adjacency()
    mask = ~np.eye(d, dtype=bool)
    scores = probs[mask]
    labels = g_star.adjacency[mask].astype(int)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AUPRC is undefined for a ground-truth graph with no edges")
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    area = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        tp += int(labels[i:j].sum())
        fp += int(j - i - labels[i:j].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return float(area)


def query_kld(
    posterior: GraphPosterior,
    cache: MechanismCache,
    data: Dataset,
    fixture: EvalFixture,
) -> float:
    """KL(p(Y | M*) || p(Y | data)) for the query interventional variable."""
    if fixture.query is None:
        raise ValueError("fixture was built without a query")
    q = fixture.query
    rng = np.random.default_rng(fixture.anc_seed)
    states = NodeStates(cache, data, data)
    support = posterior.support()
    with np.errstate(divide="ignore"):  # zero-weight graphs drop out of the mix
        log_w = np.log(np.array([w for _, w in support]))
    vals = []
    for j, psi in enumerate(fixture.psi_query):
        clamp = {q.treatment: float(psi)}
        lp = np.stack(
            [
                do_marginal_logpdf(
                    g, states, q.outcome, clamp, fixture.y_query[j], fixture.cfg.n_anc, rng
                )
                for g, _ in support
            ]
        )  # (n_support, n_y)
        log_mix = logsumexp(lp + log_w[:, None], axis=0)
        vals.append(fixture.logp_true_y[j] - log_mix)
    return float(np.mean(np.concatenate(vals)))


def avg_ikld(
    posterior: GraphPosterior,
    cache: MechanismCache,
    data: Dataset,
    fixture: EvalFixture,
) -> float:
    """Average KLD of single-node interventional distributions."""
    d = fixture.x_ikld.shape[0]
    states = NodeStates(cache, data, data)
    support = posterior.support()
    with np.errstate(divide="ignore"):  # zero-weight graphs drop out of the mix
        log_w = np.log(np.array([w for _, w in support]))
    node_klds = np.zeros(d)
    for i in range(d):
        vals = []
        for j in range(fixture.psi_ikld.shape[1]):
            rows = fixture.x_ikld[i, j]
            lp = np.stack(
                [_joint_conditional_logpdf(g, states, rows, i) for g, _ in support]
            )
            log_mix = logsumexp(lp + log_w[:, None], axis=0)
            vals.append(fixture.logp_true_x[i, j] - log_mix)
        node_klds[i] = float(np.mean(np.concatenate(vals)))
    return float(node_klds.mean())


@dataclass(frozen=True)
class MetricRow:
    eshd: float
    auprc: float
    avg_ikld: float
    query_kld: float


def compute_metrics(
    posterior: GraphPosterior,
    cache: MechanismCache,
    data: Dataset,
    g_star: Dag,
    fixture: EvalFixture,
) -> MetricRow:
    qk = (
        query_kld(posterior, cache, data, fixture)
        if fixture.query is not None
        else float("nan")
    )
    return MetricRow(
        eshd=eshd(posterior, g_star),
        auprc=auprc(posterior, g_star),
        avg_ikld=avg_ikld(posterior, cache, data, fixture),
        query_kld=qk,
    )
