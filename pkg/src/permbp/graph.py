"""Comparison graphs, edge-list I/O, and random instance generators.

An edge ``(i, j)`` always means ``i`` precedes ``j`` (``x_i < x_j`` is the
satisfied configuration).  Repeated comparisons are kept as parallel edges.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

PRED, SUCC = -1, +1


class GraphFormatError(ValueError):
    """Raised for malformed edge-list or CSV input."""


@dataclass(frozen=True, eq=False)
class ComparisonGraph:
    n: int
    edges: np.ndarray
    labels: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 0:
            raise ValueError("node count must be non-negative")
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        if self.labels is not None and len(self.labels) != self.n:
            raise ValueError("label count does not match n")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], labels=None) -> "ComparisonGraph":
        return cls(n, np.array(list(edges), dtype=np.int64).reshape(-1, 2), labels)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int, int]]]:
        """Per node: ``(neighbor, direction, edge_id)``; direction PRED means
        the neighbor precedes the node."""
        adj: list[list[tuple[int, int, int]]] = [[] for _ in range(self.n)]
        for eid, (i, j) in enumerate(self.edges.tolist()):
            adj[i].append((j, SUCC, eid))
            adj[j].append((i, PRED, eid))
        return adj

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)

    def reversed(self) -> "ComparisonGraph":
        return ComparisonGraph(self.n, self.edges[:, ::-1], self.labels)

    def relabel(self, perm: Sequence[int]) -> "ComparisonGraph":
        """Node ``i`` becomes ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return ComparisonGraph(self.n, perm[self.edges])

    def without_edges(self, edge_ids: Iterable[int]) -> "ComparisonGraph":
        keep = np.ones(self.num_edges, dtype=bool)
        keep[list(edge_ids)] = False
        return ComparisonGraph(self.n, self.edges[keep], self.labels)

    def __repr__(self):
        return f"ComparisonGraph(n={self.n}, edges={self.num_edges})"


@dataclass(frozen=True)
class GroundTruth:
    """``permutation[i]`` is the 1-based position of node i."""

    permutation: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.permutation, dtype=np.int64)
        if sorted(p.tolist()) != list(range(1, p.size + 1)):
            raise ValueError("ground truth must be a bijection onto 1..n")
        object.__setattr__(self, "permutation", p)

    def order(self) -> np.ndarray:
        """Nodes sorted by position."""
        return np.argsort(self.permutation, kind="stable")


def _strong_components(g: ComparisonGraph):
    A = csr_matrix(
        (np.ones(g.num_edges), (g.edges[:, 0], g.edges[:, 1])), shape=(g.n, g.n)
    )
    return connected_components(A, directed=True, connection="strong")


def is_dag(g: ComparisonGraph) -> bool:
    if g.num_edges == 0:
        return True
    ncomp, _ = _strong_components(g)
    return ncomp == g.n


def cyclic_edges(g: ComparisonGraph) -> np.ndarray:
    """Boolean mask of edges lying inside a non-trivial strong component."""
    if g.num_edges == 0:
        return np.zeros(0, dtype=bool)
    _, comp = _strong_components(g)
    return comp[g.edges[:, 0]] == comp[g.edges[:, 1]]


def topological_order(g: ComparisonGraph, priority: Sequence[float] | None = None) -> list[int]:
    """Kahn's algorithm; among available nodes the lowest priority goes first
    (ties by node id).  Raises ValueError on a cycle."""
    if priority is None:
        priority = np.zeros(g.n)
    indeg = np.bincount(g.edges[:, 1], minlength=g.n).tolist()
    succ: list[list[int]] = [[] for _ in range(g.n)]
    for i, j in g.edges.tolist():
        succ[i].append(j)
    heap = [(float(priority[i]), i) for i in range(g.n) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, i = heapq.heappop(heap)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(heap, (float(priority[j]), j))
    if len(order) != g.n:
        raise ValueError("graph has a directed cycle")
    return order


def weak_components(g: ComparisonGraph) -> np.ndarray:
    A = csr_matrix(
        (np.ones(g.num_edges), (g.edges[:, 0], g.edges[:, 1])), shape=(g.n, g.n)
    )
    return connected_components(A, directed=True, connection="weak")[1]


# ---------------------------------------------------------------------------
# I/O

def parse_edge_list(text: str | Iterable[str]) -> ComparisonGraph:
    """Parse ``u v`` lines (u precedes v).  Labels are mapped to 0..n-1 in
    order of first appearance; ``#`` comments and blank lines are skipped."""
    lines = text.splitlines() if isinstance(text, str) else text
    ids: dict[str, int] = {}
    edges = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != 2:
            raise GraphFormatError(f"line {lineno}: expected two node tokens, got {len(tok)}")
        u, v = tok
        if u == v:
            raise GraphFormatError(f"line {lineno}: self-loop on {u!r}")
        for t in tok:
            ids.setdefault(t, len(ids))
        edges.append((ids[u], ids[v]))
    if not ids:
        raise GraphFormatError("edge list is empty")
    return ComparisonGraph.from_edges(len(ids), edges, tuple(ids))


def read_comparisons_csv(text: str) -> ComparisonGraph:
    """CSV with a header containing ``winner`` and ``loser`` columns."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"winner", "loser"} <= set(reader.fieldnames):
        raise GraphFormatError("CSV needs a header with 'winner' and 'loser' columns")
    lines = []
    for row in reader:
        w, l = (row["winner"] or "").strip(), (row["loser"] or "").strip()
        if not w or not l or any(c.isspace() for c in w + l):
            raise GraphFormatError(f"bad CSV row {row!r}")
        lines.append(f"{w} {l}")
    return parse_edge_list(lines)


def format_edge_list(g: ComparisonGraph) -> str:
    return "".join(f"{g.label(i)} {g.label(j)}\n" for i, j in g.edges.tolist())


def load_graph(path: str) -> ComparisonGraph:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.lower().endswith(".csv"):
        return read_comparisons_csv(text)
    return parse_edge_list(text)


# ---------------------------------------------------------------------------
# Generators

def _check_density(n: int, lam: float) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if lam < 0:
        raise ValueError("mean degree must be >= 0")
    p = lam / n
    if p > 1:
        raise ValueError("mean degree too large: lambda / n must be <= 1")
    return p


def _sample_pairs(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Each unordered pair independently with probability p; rows have i < j."""
    total = n * (n - 1) // 2
    if total == 0 or p == 0:
        return np.zeros((0, 2), dtype=np.int64)
    m = rng.binomial(total, p)
    k = np.sort(rng.choice(total, size=m, replace=False)).astype(np.int64)
    # row i holds pairs with linear index in [S(i), S(i+1)), S(i) = i n - i (i+1) / 2
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(b * b - 8.0 * k)) / 2).astype(np.int64)
    start = i * n - i * (i + 1) // 2
    i = np.where(start > k, i - 1, i)
    start = i * n - i * (i + 1) // 2
    nxt = (i + 1) * n - (i + 1) * (i + 2) // 2
    i = np.where(nxt <= k, i + 1, i)
    start = i * n - i * (i + 1) // 2
    j = k - start + i + 1
    return np.column_stack([i, j])


def gen_random_partial_order(n: int, lam: float, seed: int):
    """Erdos-Renyi pairs oriented by a uniformly random ground truth."""
    p = _check_density(n, lam)
    rng = np.random.default_rng(seed)
    pos = rng.permutation(n) + 1
    pairs = _sample_pairs(n, p, rng)
    flip = pos[pairs[:, 0]] > pos[pairs[:, 1]]
    pairs[flip] = pairs[flip][:, ::-1]
    return ComparisonGraph(n, pairs), GroundTruth(pos)


def gen_grown_network(n: int, lam_out: float, seed: int):
    """Node t (arrival order) attaches to k ~ Poisson(lam_out) earlier nodes,
    clamped to [1, t-1]; each attachment u gives edge (u, t)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not lam_out > 0:
        raise ValueError("lam_out must be > 0")
    rng = np.random.default_rng(seed)
    edges = []
    for t in range(1, n):
        k = min(max(int(rng.poisson(lam_out)), 1), t)
        for u in rng.choice(t, size=k, replace=False).tolist():
            edges.append((u, t))
    return ComparisonGraph.from_edges(n, edges), GroundTruth(np.arange(1, n + 1))


def gen_random_directed(n: int, lam: float, seed: int) -> ComparisonGraph:
    """Erdos-Renyi pairs with fair-coin orientations."""
    if n < 2:
        raise ValueError("n must be >= 2")
    p = _check_density(n, lam)
    rng = np.random.default_rng(seed)
    pairs = _sample_pairs(n, p, rng)
    flip = rng.random(len(pairs)) < 0.5
    pairs[flip] = pairs[flip][:, ::-1]
    return ComparisonGraph(n, pairs)


def gen_step_comparisons(n: int, lam: float, beta: float, seed: int):
    """Erdos-Renyi pairs; each comparison agrees with the ground truth with
    probability 1 / (1 + e^-beta)."""
    p = _check_density(n, lam)
    rng = np.random.default_rng(seed)
    pos = rng.permutation(n) + 1
    pairs = _sample_pairs(n, p, rng)
    upset = 1.0 / (1.0 + math.exp(beta))
    wrong = pos[pairs[:, 0]] > pos[pairs[:, 1]]
    wrong ^= rng.random(len(pairs)) < upset
    pairs[wrong] = pairs[wrong][:, ::-1]
    return ComparisonGraph(n, pairs), GroundTruth(pos)


def gen_btl_comparisons(n: int, lam: float, beta: float, seed: int):
    """Erdos-Renyi pairs with latent positions u ~ U[0, 1]; i precedes j with
    probability sigmoid(2 beta (u_j - u_i)).  Returns the graph and u."""
    p = _check_density(n, lam)
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    pairs = _sample_pairs(n, p, rng)
    z = 2.0 * beta * (u[pairs[:, 1]] - u[pairs[:, 0]])
    first_wins = rng.random(len(pairs)) < 1.0 / (1.0 + np.exp(-z))
    pairs[~first_wins] = pairs[~first_wins][:, ::-1]
    return ComparisonGraph(n, pairs), u
