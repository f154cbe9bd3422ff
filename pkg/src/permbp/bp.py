"""Belief propagation on comparison graphs.

Message ``2e`` travels along edge ``e = (i, j)`` from ``i`` to ``j`` (the
sender precedes the receiver); message ``2e + 1`` travels from ``j`` back to
``i``.  Every message is a density on [0, 1] stored as Chebyshev
coefficients, and the factor it induces at its receiver is a fixed linear
map of those coefficients (see :mod:`permbp.kernels`), so an update is:
evaluate the incoming factors on the extrema grid, multiply all of them but
the reverse one, interpolate back to ``d`` coefficients, normalize.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix

from . import cheb
from .cheb import ChebSeries
from .graph import ComparisonGraph, is_dag
from .kernels import Kernel

log = logging.getLogger(__name__)

NORM_FLOOR = 1e-300
LOG_TINY = 1e-300
SCHEDULES = ("serial", "parallel")


class BPNormalizationError(ArithmeticError):
    """A product of incoming factors has (numerically) zero mass."""


@dataclass
class MessageSet:
    coeffs: np.ndarray

    @classmethod
    def uniform(cls, num_edges: int, d: int) -> "MessageSet":
        c = np.zeros((2 * num_edges, d))
        c[:, 0] = 1.0
        return cls(c)

    @property
    def d(self) -> int:
        return self.coeffs.shape[1]

    def __len__(self):
        return self.coeffs.shape[0]

    def message(self, edge: int, forward: bool = True) -> ChebSeries:
        """``forward`` is the message from the edge's predecessor endpoint."""
        return ChebSeries(self.coeffs[2 * edge + (0 if forward else 1)].copy())

    def keep_edges(self, keep: np.ndarray) -> "MessageSet":
        rows = np.repeat(np.asarray(keep, dtype=bool), 2)
        return MessageSet(self.coeffs[rows].copy())

    def resized(self, d: int) -> "MessageSet":
        c = self.coeffs
        if c.shape[1] >= d:
            return MessageSet(c[:, :d].copy())
        return MessageSet(np.pad(c, ((0, 0), (0, d - c.shape[1]))))


class _Plan:
    """Index arrays describing who sends what to whom."""

    def __init__(self, g: ComparisonGraph):
        E = g.num_edges
        src, dst = g.edges[:, 0], g.edges[:, 1]
        self.n = g.n
        self.sender = np.empty(2 * E, dtype=np.int64)
        self.receiver = np.empty(2 * E, dtype=np.int64)
        self.sender[0::2], self.sender[1::2] = src, dst
        self.receiver[0::2], self.receiver[1::2] = dst, src
        self.pred = np.zeros(2 * E, dtype=bool)
        self.pred[0::2] = True
        self.reverse = np.arange(2 * E) ^ 1
        self.into = csr_matrix(
            (np.ones(2 * E), (self.receiver, np.arange(2 * E))), shape=(g.n, 2 * E)
        )

    @cached_property
    def incoming(self) -> list[np.ndarray]:
        order = np.argsort(self.receiver, kind="stable")
        bounds = np.searchsorted(self.receiver[order], np.arange(self.n + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.n)]


def factor_values(kernel: Kernel, coeffs: np.ndarray, pred: np.ndarray | None, xs) -> np.ndarray:
    """Receiver-side factor of every message evaluated at xs.

    ``pred=None`` means the standard layout (even rows forward).  Truncated
    messages can dip below zero, so the values are clipped to the range of
    the kernel itself.
    """
    d = coeffs.shape[1]
    Pp = kernel.factor_matrix("pred", d, xs)
    Ps = kernel.factor_matrix("succ", d, xs)
    out = np.empty((coeffs.shape[0], len(xs)))
    if pred is None:
        out[0::2] = coeffs[0::2] @ Pp.T
        out[1::2] = coeffs[1::2] @ Ps.T
    else:
        out[pred] = coeffs[pred] @ Pp.T
        out[~pred] = coeffs[~pred] @ Ps.T
    return np.clip(out, *kernel.factor_bounds, out=out)


def _log_factors(F: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(F, LOG_TINY, out=F), out=F)


def _swap_pairs(A: np.ndarray) -> np.ndarray:
    """Row 2e <-> row 2e+1 (message to its reverse)."""
    return A.reshape(-1, 2, A.shape[-1])[:, ::-1].reshape(A.shape)


def _exp_scaled(L: np.ndarray) -> np.ndarray:
    """Rows of exp(L - rowmax), floored well above the subnormal range."""
    L = L - np.max(L, axis=-1, keepdims=True)
    np.maximum(L, -600.0, out=L)
    return np.exp(L, out=L)


def _normalized(vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = cheb.fit_values(vals)
    z = c @ cheb.integral_weights(c.shape[-1])
    bad = ~np.isfinite(z) | (z <= NORM_FLOOR)
    if np.any(bad):
        raise BPNormalizationError(
            f"{int(np.sum(bad))} update(s) with vanishing normalization; "
            "contradictory hard constraints?"
        )
    return c / z[..., None], vals / z[..., None]


def cavity_values(g: ComparisonGraph, m: MessageSet, kernel: Kernel, plan: _Plan | None = None):
    """Unnormalized values of every outgoing message on the extrema grid."""
    plan = plan or _Plan(g)
    xs = cheb.grid(m.d)
    lf = _log_factors(factor_values(kernel, m.coeffs, None, xs))
    tot = plan.into @ lf
    L = tot[plan.sender]
    L -= _swap_pairs(lf)
    return _exp_scaled(L)


def update_message(g: ComparisonGraph, m: MessageSet, sender: int, receiver: int,
                   kernel: Kernel, edge: int | None = None) -> ChebSeries:
    """New normalized message from ``sender`` to ``receiver`` along ``edge``
    (defaults to the first edge joining them)."""
    if edge is None:
        hits = [e for nb, _, e in g.adjacency[sender] if nb == receiver]
        if not hits:
            raise ValueError(f"nodes {sender} and {receiver} are not adjacent")
        edge = hits[0]
    i, j = g.edges[edge]
    if {int(i), int(j)} != {sender, receiver}:
        raise ValueError("edge does not join sender and receiver")
    msg = 2 * edge + (0 if sender == i else 1)
    plan = _Plan(g)
    xs = cheb.grid(m.d)
    inc = plan.incoming[sender]
    inc = inc[inc != (msg ^ 1)]
    vals = np.ones(m.d)
    if inc.size:
        F = factor_values(kernel, m.coeffs[inc], plan.pred[inc], xs)
        vals = _exp_scaled(_log_factors(F).sum(axis=0))
    return ChebSeries(_normalized(vals[None, :])[0][0])


def marginal_coeffs(g: ComparisonGraph, m: MessageSet, kernel: Kernel,
                    plan: _Plan | None = None) -> np.ndarray:
    """Normalized node marginals (rows) from all incoming factors."""
    plan = plan or _Plan(g)
    d = m.d
    if g.num_edges == 0:
        out = np.zeros((g.n, d))
        out[:, 0] = 1.0
        return out
    lf = _log_factors(factor_values(kernel, m.coeffs, None, cheb.grid(d)))
    return _normalized(_exp_scaled(plan.into @ lf))[0]


def node_marginal(g: ComparisonGraph, m: MessageSet, i: int, kernel: Kernel) -> ChebSeries:
    plan = _Plan(g)
    inc = plan.incoming[i]
    if inc.size == 0:
        return ChebSeries.constant(1.0, m.d)
    F = factor_values(kernel, m.coeffs[inc], plan.pred[inc], cheb.grid(m.d))
    vals = _exp_scaled(_log_factors(F).sum(axis=0))
    return ChebSeries(_normalized(vals[None, :])[0][0])


@dataclass
class BPResult:
    graph: ComparisonGraph
    kernel: Kernel
    messages: MessageSet
    node_marginals: np.ndarray
    converged: bool
    sweeps_used: int
    residual: float
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def d(self) -> int:
        return self.messages.d

    def marginal(self, i: int) -> ChebSeries:
        return ChebSeries(self.node_marginals[i].copy())

    @cached_property
    def means(self) -> np.ndarray:
        return np.asarray(cheb.mean_position(self.node_marginals), dtype=float).reshape(-1)


def _initial(g: ComparisonGraph, d: int, init) -> MessageSet:
    if init is None:
        return MessageSet.uniform(g.num_edges, d)
    m = init if isinstance(init, MessageSet) else MessageSet(np.asarray(init, dtype=float))
    if len(m) != 2 * g.num_edges:
        raise ValueError("initial messages do not match the graph")
    m = m.resized(d)
    c = m.coeffs / (m.coeffs @ cheb.integral_weights(d))[:, None]
    return MessageSet(c)


def run_bp(
    g: ComparisonGraph,
    kernel: Kernel,
    d: int = 32,
    max_sweeps: int = 1000,
    tol: float = 1e-8,
    damping: float = 0.0,
    seed: int = 0,
    schedule: str = "serial",
    init: MessageSet | np.ndarray | None = None,
) -> BPResult:
    """Iterate the message updates from uniform (or ``init``) messages.

    ``serial`` updates messages in place in a seeded random order;
    ``parallel`` recomputes every message from the previous sweep at once,
    which is much faster on large graphs.  The residual is the largest
    change of any message value on the extrema grid.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    if schedule not in SCHEDULES:
        raise ValueError(f"schedule must be one of {SCHEDULES}")

    m = _initial(g, d, init)
    plan = _Plan(g)
    history: list[float] = []
    converged = False
    sweeps = 0
    residual = 0.0
    if g.num_edges == 0:
        converged, sweeps = True, 1
    elif schedule == "parallel":
        vals = cheb.to_values(m.coeffs)
        for sweeps in range(1, max_sweeps + 1):
            c_new, v_new = _normalized(cavity_values(g, m, kernel, plan))
            if damping:
                c_new = (1 - damping) * c_new + damping * m.coeffs
                v_new = (1 - damping) * v_new + damping * vals
            residual = float(np.max(np.abs(v_new - vals)))
            m, vals = MessageSet(c_new), v_new
            history.append(residual)
            if residual < tol:
                converged = True
                break
    else:
        converged, sweeps, residual = _serial_sweeps(m, plan, kernel, max_sweeps, tol, damping, seed, history)

    marg = marginal_coeffs(g, m, kernel, plan)
    if not converged:
        log.info("BP did not converge: residual %.3g after %d sweeps", residual, sweeps)
    return BPResult(g, kernel, m, marg, converged, sweeps, residual, history)


def _serial_sweeps(m: MessageSet, plan: _Plan, kernel: Kernel, max_sweeps: int,
                   tol: float, damping: float, seed: int, history: list[float]):
    d = m.d
    xs = cheb.grid(d)
    C = m.coeffs
    V = cheb.to_values(C)
    Ppred = kernel.factor_matrix("pred", d, xs)
    Psucc = kernel.factor_matrix("succ", d, xs)
    F = factor_values(kernel, C, plan.pred, xs)
    bounds = kernel.factor_bounds
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(C))
    incoming = plan.incoming
    residual = np.inf
    for sweep in range(1, max_sweeps + 1):
        residual = 0.0
        for msg in order.tolist():
            inc = incoming[plan.sender[msg]]
            inc = inc[inc != (msg ^ 1)]
            if inc.size:
                prod = np.prod(F[inc], axis=0)
                top = np.max(np.abs(prod))
                vals = prod / top if top > 0 else prod
            else:
                vals = np.ones(d)
            c_new, v_new = _normalized(vals[None, :])
            c_new, v_new = c_new[0], v_new[0]
            if damping:
                c_new = (1 - damping) * c_new + damping * C[msg]
                v_new = (1 - damping) * v_new + damping * V[msg]
            residual = max(residual, float(np.max(np.abs(v_new - V[msg]))))
            C[msg], V[msg] = c_new, v_new
            F[msg] = np.clip((Ppred if plan.pred[msg] else Psucc) @ c_new, *bounds)
        history.append(residual)
        if residual < tol:
            return True, sweep, residual
    return False, max_sweeps, residual


def edge_violation_probabilities(res: BPResult) -> np.ndarray:
    """P(x_i > x_j) for every edge (i, j) under the two-point marginals."""
    g, kernel, C = res.graph, res.kernel, res.messages.coeffs
    if g.num_edges == 0:
        return np.zeros(0)
    d = C.shape[1]
    xs, w = cheb.refined_grid(d)
    B = cheb.basis_matrix(d, xs)
    fwd, back = C[0::2], C[1::2]
    mu = fwd @ B.T
    z = np.einsum("ex,ex,x->e", mu, back @ kernel.factor_matrix("succ", d, xs).T, w)
    viol = np.einsum("ex,ex,x->e", mu, back @ kernel.violation_matrix(d, xs).T, w)
    return np.clip(viol / z, 0.0, 1.0)


def edge_violation_probability(g: ComparisonGraph, m: MessageSet, edge: int, kernel: Kernel) -> float:
    sub = ComparisonGraph(g.n, g.edges[edge:edge + 1])
    one = BPResult(sub, kernel, MessageSet(m.coeffs[2 * edge:2 * edge + 2]), np.zeros((0, m.d)), True, 0, 0.0)
    return float(edge_violation_probabilities(one)[0])


@dataclass
class ArrivalTimes:
    densities: np.ndarray
    means: np.ndarray
    result: BPResult

    def density(self, i: int) -> ChebSeries:
        return ChebSeries(self.densities[i].copy())


def posterior_arrival_times(g: ComparisonGraph, d: int = 32, **bp_kwargs) -> ArrivalTimes:
    """Zero-temperature marginals read as arrival-time densities on [0, 1]."""
    if not is_dag(g):
        raise ValueError("arrival times need a DAG")
    res = run_bp(g, Kernel.zero_temp(), d=d, **bp_kwargs)
    return ArrivalTimes(res.node_marginals, res.means, res)
