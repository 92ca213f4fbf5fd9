"""Particle-based posterior over causal graphs.

Each particle is a latent z in R^{d x d x 2}; edge i -> j is Bernoulli with
probability sigmoid(u_i . v_j) where U = z[:, :, 0] and V = z[:, :, 1]. The
latent prior combines independent standard normals with a soft acyclicity
penalty exp(-beta * h(S)), h(S) = trace(expm(S)) - d on the edge-probability
matrix. Particles are transported by SVGD on the latent posterior; graph
expectations are then estimated from Bernoulli samples per particle (cyclic
samples rejected), softmax-weighted by their data marginal likelihoods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import expit, logsumexp, softmax

from .graphs import Dag, acyclic_mask
from .likelihood import MechanismCache
from .scm import Dataset


@dataclass(frozen=True)
class DibsConfig:
    d: int
    n_particles: int = 5
    n_graph_samples: int = 40
    max_iters: int = 300
    tol: float = 1e-3
    beta: float = 100.0
    step: float = 0.05
    init_scale: float = 1.0
    resample_keep_frac: float = 0.25
    resample_weight_floor: float = 0.01

    def __post_init__(self):
        if self.d < 2 or self.n_particles < 1 or self.n_graph_samples < 1:
            raise ValueError("invalid DiBS configuration")


def init_particles(cfg: DibsConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw M latent particles from the standard-normal base, shape (M, d, d, 2)."""
    return cfg.init_scale * rng.standard_normal((cfg.n_particles, cfg.d, cfg.d, 2))


def edge_probs(z: np.ndarray) -> np.ndarray:
    """Edge probability matrix sigmoid(U V^T) with a zero diagonal.

    Accepts a single particle (d, d, 2) or a stack (M, d, d, 2).
    """
    u, v = z[..., 0], z[..., 1]
    s = expit(u @ np.swapaxes(v, -1, -2))
    d = z.shape[-2]
    idx = np.arange(d)
    s[..., idx, idx] = 0.0
    return s


def sample_graphs(z: np.ndarray, k: int, rng: np.random.Generator):
    """Sample k Bernoulli graphs from one particle; drop cyclic draws.

    Returns (accepted adjacency stack (k_acc, d, d), number rejected).
    """
    probs = edge_probs(z)
    draws = (rng.random((k,) + probs.shape) < probs).astype(np.int8)
    accepted = draws[acyclic_mask(draws)]
    return accepted, k - accepted.shape[0]


def grad_log_graph_prob(adjs: np.ndarray, z: np.ndarray) -> np.ndarray:
    """d/dz of log p(G | z) for a stack of adjacencies (K, d, d).

    Returns a stack (K, d, d, 2). The diagonal carries no probability mass
    and contributes zero gradient.
    """
    probs = edge_probs(z)
    u, v = z[..., 0], z[..., 1]
    e = adjs - probs
    idx = np.arange(z.shape[0])
    e[:, idx, idx] = 0.0
    grad_u = e @ v
    grad_v = np.swapaxes(e, 1, 2) @ u
    return np.stack([grad_u, grad_v], axis=-1)


def acyclicity(probs: np.ndarray) -> float:
    """NOTEARS-style constraint value h(S) = trace(expm(S)) - d; 0 iff DAG-like."""
    return float(np.trace(expm(probs)) - probs.shape[0])


def grad_log_particle_prior(z: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """(log p~(z), d/dz log p~(z)) for one particle under the soft-DAG prior."""
    probs = edge_probs(z)
    h = acyclicity(probs)
    logp = -beta * h - 0.5 * float(np.sum(z * z)) - 0.5 * z.size * math.log(2.0 * math.pi)
    # dh/dS_ij = expm(S)[j, i]; chain through sigmoid and the bilinear logits
    dh_ds = expm(probs).T * probs * (1.0 - probs)
    idx = np.arange(z.shape[0])
    dh_ds[idx, idx] = 0.0
    u, v = z[..., 0], z[..., 1]
    grad_h = np.stack([dh_ds @ v, dh_ds.T @ u], axis=-1)
    return logp, -beta * grad_h - z


class _GraphScoreTable:
    """Memo of graph log-marginals keyed by adjacency bytes (per dataset horizon)."""

    def __init__(self, cache: MechanismCache, data: Dataset):
        self.cache = cache
        self.data = data
        self._memo: dict[bytes, float] = {}

    def score(self, adj: np.ndarray) -> float:
        key = adj.tobytes()
        if key not in self._memo:
            self._memo[key] = self.cache.graph_log_marginal(Dag(adj), self.data)
        return self._memo[key]

    def scores(self, adjs: np.ndarray) -> np.ndarray:
        return np.array([self.score(a) for a in adjs])


@dataclass
class SvgdResult:
    z: np.ndarray  # (M, d, d, 2)
    n_iters: int
    n_cyclic_rejections: int


def _rbf_kernel_terms(flat: np.ndarray):
    """SVGD kernel matrix and pairwise differences with median-heuristic bandwidth."""
    m = flat.shape[0]
    diff = flat[:, None, :] - flat[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    if m > 1:
        med = np.median(sq[np.triu_indices(m, k=1)])
        bw = med / math.log(m + 1.0)
        bw = max(bw, 1e-8)
    else:
        bw = 1.0
    kmat = np.exp(-sq / bw)
    return kmat, diff, bw


def _posterior_grad(
    z: np.ndarray,
    table: _GraphScoreTable,
    cfg: DibsConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Estimate d/dz log p(z | data) for one particle.

    Uses the self-normalized score-function form: with weights
    w_k = softmax(log p(D | G_k)), the likelihood gradient is
    sum_k (w_k - 1/K) d/dz log p(G_k | z).
    """
    adjs, n_rej = sample_graphs(z, cfg.n_graph_samples, rng)
    _, grad = grad_log_particle_prior(z, cfg.beta)
    if adjs.shape[0] == 0:
        return grad, n_rej
    lls = table.scores(adjs)
    w = softmax(lls)
    score = grad_log_graph_prob(adjs, z)
    grad = grad + np.tensordot(w - 1.0 / adjs.shape[0], score, axes=1)
    return grad, n_rej


def svgd_fit(
    z0: np.ndarray,
    cache: MechanismCache,
    data: Dataset,
    cfg: DibsConfig,
    rng: np.random.Generator,
) -> SvgdResult:
    """Transport particles toward the latent posterior with SVGD.

    Uses Adam on the Stein variational direction; stops when the mean
    absolute parameter update falls below ``cfg.tol``.
    """
    z = z0.copy()
    m_particles = z.shape[0]
    table = _GraphScoreTable(cache, data)
    adam_m = np.zeros_like(z)
    adam_v = np.zeros_like(z)
    b1, b2, eps = 0.9, 0.999, 1e-8
    n_rej_total = 0
    n_iters = 0
    for it in range(1, cfg.max_iters + 1):
        n_iters = it
        grads = np.empty_like(z)
        for i in range(m_particles):
            grads[i], n_rej = _posterior_grad(z[i], table, cfg, rng)
            n_rej_total += n_rej
        flat = z.reshape(m_particles, -1)
        kmat, diff, bw = _rbf_kernel_terms(flat)
        gflat = grads.reshape(m_particles, -1)
        drive = kmat @ gflat
        # grad of exp(-||z_l - z_m||^2 / bw) w.r.t. z_l points along z_m - z_l
        repulse = -(2.0 / bw) * np.einsum("lm,lmp->mp", kmat, diff)
        phi = ((drive + repulse) / m_particles).reshape(z.shape)
        adam_m = b1 * adam_m + (1.0 - b1) * phi
        adam_v = b2 * adam_v + (1.0 - b2) * phi * phi
        mhat = adam_m / (1.0 - b1**it)
        vhat = adam_v / (1.0 - b2**it)
        update = cfg.step * mhat / (np.sqrt(vhat) + eps)
        z = z + update
        if float(np.mean(np.abs(update))) < cfg.tol:
            break
    return SvgdResult(z=z, n_iters=n_iters, n_cyclic_rejections=n_rej_total)


@dataclass
class GraphPosterior:
    """A finite weighted-graph approximation of p(G | data).

    ``particles[m]`` lists the distinct accepted graphs of particle m with
    within-particle weights summing to one; ``particle_weights`` sums to one
    across particles. ``support()`` yields each distinct graph once with its
    combined weight.
    """

    particles: list[list[tuple[Dag, float]]]
    particle_weights: np.ndarray
    n_cyclic_rejections: int = 0

    def support(self) -> list[tuple[Dag, float]]:
        acc: dict[bytes, tuple[Dag, float]] = {}
        for pw, glist in zip(self.particle_weights, self.particles):
            for g, w in glist:
                key = g.key()
                prev = acc.get(key)
                acc[key] = (g, (prev[1] if prev else 0.0) + pw * w)
        return list(acc.values())

    def map_graph(self) -> Dag:
        return max(self.support(), key=lambda gw: gw[1])[0]

    def expected_adjacency(self) -> np.ndarray:
        out = None
        for g, w in self.support():
            a = w * g.adjacency.astype(float)
            out = a if out is None else out + a
        return out


def sample_posterior(
    z: np.ndarray,
    cache: MechanismCache,
    data: Dataset,
    k: int,
    rng: np.random.Generator,
) -> GraphPosterior:
    """Build the weighted-graph estimator from the particle stack.

    Per particle, k Bernoulli graphs are drawn and cyclic ones rejected;
    within-particle weights are softmax of the graph marginal likelihoods,
    and particle weights are softmax of log-mean-exp of those likelihoods.
    """
    table = _GraphScoreTable(cache, data)
    particles: list[list[tuple[Dag, float]]] = []
    log_pw = np.full(z.shape[0], -np.inf)
    n_rej_total = 0
    for i in range(z.shape[0]):
        adjs, n_rej = sample_graphs(z[i], k, rng)
        n_rej_total += n_rej
        if adjs.shape[0] == 0:
            particles.append([])
            continue
        # deduplicate draws; a graph drawn r times gets multiplicity r
        uniq: dict[bytes, tuple[np.ndarray, int]] = {}
        for a in adjs:
            key = a.tobytes()
            prev = uniq.get(key)
            uniq[key] = (a, (prev[1] if prev else 0) + 1)
        mats = [a for a, _ in uniq.values()]
        counts = np.array([c for _, c in uniq.values()], dtype=float)
        lls = np.array([table.score(a) for a in mats])
        logw = lls + np.log(counts)
        w = softmax(logw)
        particles.append([(Dag(a), float(wi)) for a, wi in zip(mats, w)])
        log_pw[i] = logsumexp(lls, b=counts / adjs.shape[0])
    if np.all(np.isneginf(log_pw)):
        pw = np.full(z.shape[0], 1.0 / z.shape[0])
    else:
        pw = softmax(np.where(np.isneginf(log_pw), -1e300, log_pw))
    return GraphPosterior(
        particles=particles, particle_weights=pw, n_cyclic_rejections=n_rej_total
    )


def weighted_expectation(phi, posterior: GraphPosterior):
    """E[phi(G)] under the weighted-graph posterior approximation."""
    total = None
    for g, w in posterior.support():
        val = w * np.asarray(phi(g), dtype=float)
        total = val if total is None else total + val
    if total is None:
        raise ValueError("posterior has empty support")
    return total if total.ndim else float(total)


def resample_particles(
    z: np.ndarray,
    cache: MechanismCache,
    data: Dataset,
    cfg: DibsConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Keep only high-weight particles; redraw the rest from the latent base.

    Particle weights are proportional to p(data | z) * p~(z); at most
    ceil(M / 4) particles with normalized weight above the floor survive.
    """
    m = z.shape[0]
    log_w = np.empty(m)
    table = _GraphScoreTable(cache, data)
    for i in range(m):
        adjs, _ = sample_graphs(z[i], cfg.n_graph_samples, rng)
        if adjs.shape[0] == 0:
            log_like = -np.inf
        else:
            log_like = logsumexp(table.scores(adjs)) - math.log(adjs.shape[0])
        log_prior, _ = grad_log_particle_prior(z[i], cfg.beta)
        log_w[i] = log_like + log_prior
    w = softmax(np.where(np.isneginf(log_w), -1e300, log_w))
    n_keep_max = math.ceil(m * cfg.resample_keep_frac)
    order = np.argsort(w)[::-1]
    keep = [i for i in order[:n_keep_max] if w[i] > cfg.resample_weight_floor]
    out = cfg.init_scale * rng.standard_normal(z.shape)
    for i in keep:
        out[i] = z[i]
    return out


def resample_round(t: int) -> bool:
    """Whether particles are redrawn before inference at experiment round t."""
    return t in (1, 2, 3, 4, 5, 6, 9) or (t > 0 and t % 5 == 0)
