"""Directed acyclic graph primitives: representation, generators, distances."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import networkx as nx
import numpy as np


class CycleError(ValueError):
    """Raised when an adjacency matrix that must be a DAG contains a cycle."""


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over d nodes.

    ``adjacency[i, j] == 1`` encodes the edge i -> j. Instances are treated
    as immutable; the adjacency array must not be mutated after construction.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.int8)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        if np.any((adj != 0) & (adj != 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(adj)):
            raise ValueError("self-loops are not allowed")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def parents(self, j: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.adjacency[:, j]))

    def children(self, i: int) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.adjacency[i, :]))

    def roots(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.adjacency.sum(axis=0) == 0))

    def ancestors(self, j: int) -> tuple[int, ...]:
        """All nodes with a directed path to j, in ascending index order."""
        seen: set[int] = set()
        stack = list(self.parents(j))
        while stack:
            i = stack.pop()
            if i not in seen:
                seen.add(i)
                stack.extend(self.parents(i))
        return tuple(sorted(seen))

    def key(self) -> bytes:
        """Hashable identity of the edge set (used for deduplication)."""
        return self.adjacency.tobytes()

    def to_flat(self) -> list[int]:
        """Row-major 0/1 edge list used in persisted run state and CSV dumps."""
        return [int(v) for v in self.adjacency.reshape(-1)]

    @staticmethod
    def from_flat(flat, d: int) -> "Dag":
        adj = np.asarray(flat, dtype=np.int8).reshape(d, d)
        g = Dag(adj)
        topological_order(g)  # validates acyclicity
        return g

    @staticmethod
    def from_edges(d: int, edges) -> "Dag":
        adj = np.zeros((d, d), dtype=np.int8)
        for i, j in edges:
            adj[i, j] = 1
        g = Dag(adj)
        topological_order(g)
        return g


@dataclass(frozen=True)
class GraphGenConfig:
    """Configuration for the random graph generators.

    ``er_edge_prob`` defaults to 4/(d-1), which gives expected degree 2;
    ``sf_attach`` is the per-node attachment count of the preferential
    attachment process.
    """

    kind: str  # "scale-free" | "erdos-renyi"
    d: int
    er_edge_prob: float | None = None
    sf_attach: int = 2

    def __post_init__(self):
        if self.kind not in ("scale-free", "erdos-renyi"):
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.sf_attach < 1:
            raise ValueError("sf_attach must be >= 1")
        p = self.edge_prob if self.kind == "erdos-renyi" else None
        if p is not None and not (0.0 <= p <= 1.0):
            raise ValueError(f"er_edge_prob must lie in [0, 1], got {p}")

    @property
    def edge_prob(self) -> float:
        if self.er_edge_prob is not None:
            return self.er_edge_prob
        return min(1.0, 4.0 / (self.d - 1))


def topological_order(g: Dag) -> list[int]:
    """Topological order of g, ties broken by ascending node index.

    Raises CycleError if the adjacency contains a cycle (corrupted input).
    """
    indeg = g.adjacency.sum(axis=0).astype(int).tolist()
    ready = [i for i in range(g.d) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in g.children(i):
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != g.d:
        raise CycleError("adjacency matrix contains a cycle")
    return order


def acyclic_mask(adjacencies: np.ndarray) -> np.ndarray:
    """Vectorized cycle check on a stack of 0/1 matrices (..., d, d).

    A graph is acyclic iff its adjacency matrix is nilpotent: repeated
    boolean squaring yields walks of exact length 2^k >= d, which exist
    iff some cycle exists.
    """
    p = np.asarray(adjacencies, dtype=np.float32)
    d = p.shape[-1]
    length = 1
    while length < d:
        p = (p @ p > 0).astype(np.float32)
        length *= 2
    return ~p.any(axis=(-2, -1))


def is_acyclic(adjacency: np.ndarray) -> bool:
    """Cycle check on a single raw 0/1 matrix."""
    return bool(acyclic_mask(np.asarray(adjacency)[None])[0])


def sample_scale_free(cfg: GraphGenConfig, rng: np.random.Generator) -> Dag:
    """Scale-free DAG via preferential attachment.

    The undirected attachment graph is oriented low-index -> high-index, so
    the first two nodes are roots and every later node has in-degree
    ``sf_attach``; node labels are then permuted uniformly at random.
    """
    if cfg.kind != "scale-free":
        raise ValueError("cfg.kind must be 'scale-free'")
    if cfg.d < 3:
        raise ValueError("scale-free generator requires d >= 3")
    seed = int(rng.integers(0, 2**32))
    und = nx.barabasi_albert_graph(cfg.d, cfg.sf_attach, seed=seed)
    adj = np.zeros((cfg.d, cfg.d), dtype=np.int8)
    for a, b in und.edges():
        i, j = (a, b) if a < b else (b, a)
        adj[i, j] = 1
    perm = rng.permutation(cfg.d)
    out = np.zeros_like(adj)
    out[np.ix_(perm, perm)] = adj
    return Dag(out)


def sample_erdos_renyi(cfg: GraphGenConfig, rng: np.random.Generator) -> Dag:
    """Erdos-Renyi DAG: independent edges, oriented by a random node order."""
    if cfg.kind != "erdos-renyi":
        raise ValueError("cfg.kind must be 'erdos-renyi'")
    p = cfg.edge_prob
    order = rng.permutation(cfg.d)
    pos = np.empty(cfg.d, dtype=int)
    pos[order] = np.arange(cfg.d)
    draws = rng.random((cfg.d, cfg.d)) < p
    adj = np.zeros((cfg.d, cfg.d), dtype=np.int8)
    for i in range(cfg.d):
        for j in range(cfg.d):
            if i != j and pos[i] < pos[j] and draws[i, j]:
                adj[i, j] = 1
    return Dag(adj)


def sample_graph(cfg: GraphGenConfig, rng: np.random.Generator) -> Dag:
    if cfg.kind == "scale-free":
        return sample_scale_free(cfg, rng)
    return sample_erdos_renyi(cfg, rng)


def shd(g: Dag, g_star: Dag) -> int:
    """Structural Hamming distance: size of the symmetric difference of the
    directed edge sets. A reversed edge counts 2 (one extra plus one missing).
    """
    if g.d != g_star.d:
        raise ValueError(f"dimension mismatch: {g.d} vs {g_star.d}")
    return int(np.sum(g.adjacency != g_star.adjacency))


def enumerate_dags(d: int) -> list[Dag]:
    """All DAGs on d nodes (exhaustive; intended for d <= 4 test oracles)."""
    n_off = d * (d - 1)
    offdiag = [(i, j) for i in range(d) for j in range(d) if i != j]
    out = []
    for mask in range(2**n_off):
        adj = np.zeros((d, d), dtype=np.int8)
        for b, (i, j) in enumerate(offdiag):
            if mask >> b & 1:
                adj[i, j] = 1
        if is_acyclic(adj):
            out.append(Dag(adj))
    return out
