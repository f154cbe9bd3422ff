"""Rankings from marginals, violation counts, and greedy BP decimation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bp import BPResult, edge_violation_probabilities, run_bp
from .graph import ComparisonGraph, cyclic_edges, topological_order
from .kernels import Kernel

log = logging.getLogger(__name__)

DECIMATION_BETA = 10 * math.log(2)  # e^-beta = 2^-10


@dataclass
class RankingResult:
    order: list[int]
    violations: int
    removed_edges: list[tuple[int, int]] = field(default_factory=list)
    unconverged_rounds: int = 0

    @property
    def flagged(self) -> bool:
        return self.unconverged_rounds > 0


def positions(order) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    pos = np.full(order.size, -1, dtype=np.int64)
    pos[order] = np.arange(order.size)
    return pos


def violations(g: ComparisonGraph, order) -> int:
    """Number of edges (i, j) with i placed at or after j."""
    order = np.asarray(order, dtype=np.int64)
    if order.size != g.n or sorted(order.tolist()) != list(range(g.n)):
        raise ValueError("order must be a permutation of the nodes")
    pos = positions(order)
    return int(np.sum(pos[g.edges[:, 0]] >= pos[g.edges[:, 1]]))


def rank_by_marginals(result: BPResult) -> RankingResult:
    means = result.means
    order = np.lexsort((np.arange(means.size), means)).tolist()
    return RankingResult(order, violations(result.graph, order))


def indegree_order(g: ComparisonGraph) -> list[int]:
    """Baseline: fewest incoming edges (times beaten) first, ties by id."""
    indeg = np.bincount(g.edges[:, 1], minlength=g.n)
    return np.lexsort((np.arange(g.n), indeg)).tolist()


def random_order(g: ComparisonGraph, seed: int = 0) -> list[int]:
    return np.random.default_rng(seed).permutation(g.n).tolist()


def greedy_decimation(
    g: ComparisonGraph,
    beta: float = DECIMATION_BETA,
    d: int = 32,
    tol: float = 1e-8,
    seed: int = 0,
    max_sweeps: int = 200,
    round_sweeps: int = 5,
    damping: float = 0.5,
    schedule: str = "parallel",
) -> RankingResult:
    """Remove the edge most likely to be violated, one per round, until the
    residual graph is acyclic.

    Only edges inside a strongly connected component are candidates; the
    first BP run gets ``max_sweeps`` and later rounds warm-start from the
    surviving messages with ``round_sweeps``.  Rounds that end unconverged
    still remove the current argmax and are counted in the result.
    """
    if not beta > 0:
        raise ValueError("beta must be > 0")
    kernel = Kernel.step(beta)
    ids = np.arange(g.num_edges)
    residual = g
    msgs = None
    removed: list[int] = []
    unconverged = 0
    while True:
        cyc = cyclic_edges(residual)
        if not cyc.any():
            break
        res = run_bp(residual, kernel, d=d, tol=tol, damping=damping, seed=seed, schedule=schedule,
                     max_sweeps=max_sweeps if msgs is None else round_sweeps, init=msgs)
        unconverged += not res.converged
        p = edge_violation_probabilities(res)
        e = int(np.flatnonzero(cyc)[np.argmax(p[cyc])])
        removed.append(int(ids[e]))
        keep = np.ones(residual.num_edges, dtype=bool)
        keep[e] = False
        ids = ids[keep]
        residual = ComparisonGraph(g.n, residual.edges[keep])
        msgs = res.messages.keep_edges(keep)

    final = run_bp(residual, kernel, d=d, tol=tol, damping=damping, seed=seed, schedule=schedule,
                   max_sweeps=max_sweeps, init=msgs)
    order = topological_order(residual, priority=final.means)
    if unconverged:
        log.info("decimation: %d of %d rounds ended unconverged", unconverged, len(removed))
    return RankingResult(
        order,
        violations(g, order),
        [tuple(map(int, g.edges[e])) for e in removed],
        unconverged,
    )
