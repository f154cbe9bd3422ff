"""Exact small-instance answers: linear extensions, rank distributions,
exact marginal densities and finite-temperature partition functions."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls
from scipy.special import gammaln, logsumexp

from . import cheb
from .cheb import ChebSeries
from .graph import ComparisonGraph, is_dag, topological_order
from .kernels import Kernel

MAX_RANK_NODES = 20
MAX_PERM_NODES = 9


class OracleLimitError(ValueError):
    """Instance too large for exact computation."""


def _require_dag(g: ComparisonGraph):
    if not is_dag(g):
        raise ValueError("exact counting needs a DAG")


def _masks(g: ComparisonGraph):
    pred = [0] * g.n
    nbr = [0] * g.n
    for i, j in g.edges.tolist():
        pred[j] |= 1 << i
        nbr[i] |= 1 << j
        nbr[j] |= 1 << i
    return pred, nbr


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _reduced_edges(g: ComparisonGraph) -> set[tuple[int, int]]:
    """Cover relations (transitive reduction, duplicates dropped)."""
    succ = [0] * g.n
    for i, j in g.edges.tolist():
        succ[i] |= 1 << j
    desc = [0] * g.n
    for v in reversed(topological_order(g)):
        for u in _bits(succ[v]):
            desc[v] |= desc[u] | (1 << u)
    out = set()
    for i in range(g.n):
        implied = 0
        for k in _bits(succ[i]):
            implied |= desc[k]
        out.update((i, j) for j in _bits(succ[i] & ~implied))
    return out


class _ScaledBernstein:
    """Integer polynomials in the basis x^k (1-x)^(m-k) / (k! (m-k)!).

    Products stay integral, and integrals from 0 or to 1 are prefix or
    suffix sums that raise the degree by one.
    """

    def __init__(self, n: int):
        self.binom = [[math.comb(a, b) for b in range(a + 1)] for a in range(n + 2)]

    def mul(self, a: list[int], b: list[int]) -> list[int]:
        if len(a) == 1:
            return [a[0] * x for x in b]
        if len(b) == 1:
            return [b[0] * x for x in a]
        m1, M = len(a) - 1, len(a) + len(b) - 2
        C = self.binom
        c = [0] * (M + 1)
        for i, ai in enumerate(a):
            if ai:
                for j, bj in enumerate(b):
                    if bj:
                        k = i + j
                        c[k] += ai * bj * C[k][i] * C[M - k][m1 - i]
        return c

    @staticmethod
    def below(c: list[int]) -> list[int]:
        """int_0^y."""
        out, s = [0], 0
        for x in c:
            s += x
            out.append(s)
        return out

    @staticmethod
    def above(c: list[int]) -> list[int]:
        """int_y^1."""
        out, s = [0] * (len(c) + 1), 0
        for k in range(len(c) - 1, -1, -1):
            s += c[k]
            out[k] = s
        return out


def count_le_exact(g: ComparisonGraph, max_states: int = 5_000_000) -> int:
    """Exact number of linear extensions.

    Works on the order-polytope volume with exact integer polynomials.
    Pendant trees of the cover graph are integrated out leaf by leaf into
    polynomial weights on their attachment nodes.  What remains (the
    2-core) is handled by memoized recursion over upsets: H_U(y) is the
    weighted volume of U placed above y, a sum over minimal elements, and a
    product over weakly connected pieces.  ``max_states`` bounds the memo.
    """
    _require_dag(g)
    n = g.n
    if n == 0:
        return 1
    up = _reduced_edges(g)
    nbr: list[set[int]] = [set() for _ in range(n)]
    for i, j in up:
        nbr[i].add(j)
        nbr[j].add(i)
    P = _ScaledBernstein(n)
    w = [[1] for _ in range(n)]
    alive = [True] * n
    pieces = []          # (S, m): an independent factor S / m! of the volume

    queue = deque(v for v in range(n) if len(nbr[v]) <= 1)
    while queue:
        v = queue.popleft()
        if not alive[v] or len(nbr[v]) > 1:
            continue
        alive[v] = False
        if not nbr[v]:
            pieces.append((sum(w[v]), len(w[v])))
            continue
        p = nbr[v].pop()
        nbr[p].discard(v)
        w[p] = P.mul(w[p], P.below(w[v]) if (v, p) in up else P.above(w[v]))
        if len(nbr[p]) <= 1:
            queue.append(p)

    states = 0
    seen = [not a for a in alive]
    for start in range(n):
        if seen[start]:
            continue
        comp, stack = [], [start]
        seen[start] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in nbr[v]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
        idx = {v: k for k, v in enumerate(comp)}
        cpred, cnbr = [0] * len(comp), [0] * len(comp)
        for v in comp:
            for u in nbr[v]:
                cnbr[idx[v]] |= 1 << idx[u]
                if (u, v) in up:
                    cpred[idx[v]] |= 1 << idx[u]
        cw = [w[v] for v in comp]
        memo: dict[int, list[int]] = {}

        def split(S: int) -> list[int]:
            out = []
            while S:
                c = frontier = S & -S
                while frontier:
                    grow = 0
                    for v in _bits(frontier):
                        grow |= cnbr[v]
                    frontier = grow & S & ~c
                    c |= frontier
                out.append(c)
                S &= ~c
            return out

        def H(S: int) -> list[int]:
            hit = memo.get(S)
            if hit is not None:
                return hit
            if states + len(memo) >= max_states:
                raise OracleLimitError(f"more than {max_states} states; instance too large")
            parts = split(S)
            if len(parts) > 1:
                r = H(parts[0])
                for part in parts[1:]:
                    r = P.mul(r, H(part))
            else:
                r = None
                for v in _bits(S):
                    if cpred[v] & S == 0:
                        rest = S & ~(1 << v)
                        t = P.above(P.mul(cw[v], H(rest) if rest else [1]))
                        r = t if r is None else [a + b for a, b in zip(r, t)]
            memo[S] = r
            return r

        h = H((1 << len(comp)) - 1)
        states += len(memo)
        pieces.append((h[0], len(h) - 1))   # H(0) = c_0 / m!

    total, left = 1, n
    for S, m in pieces:
        total *= S * math.comb(left, m)
        left -= m
    return total


def count_le_bruteforce(g: ComparisonGraph) -> int:
    """Enumerate all n! orders (tests only)."""
    if g.n > MAX_PERM_NODES:
        raise OracleLimitError("brute force limited to n <= 9")
    e = g.edges
    total = 0
    for perm in itertools.permutations(range(g.n)):
        pos = np.empty(g.n, dtype=int)
        pos[list(perm)] = np.arange(g.n)
        total += bool(np.all(pos[e[:, 0]] < pos[e[:, 1]])) if len(e) else 1
    return total


@dataclass
class RankDistribution:
    node: int
    probs: np.ndarray

    def mean_rank(self) -> float:
        return float(np.arange(1, self.probs.size + 1) @ self.probs)


def rank_matrix_exact(g: ComparisonGraph) -> np.ndarray:
    """``R[v, t]`` = P(node v has rank t+1) over uniform linear extensions,
    by forward/backward counting over the lattice of downsets."""
    _require_dag(g)
    n = g.n
    if n > MAX_RANK_NODES:
        raise OracleLimitError(f"rank distributions limited to n <= {MAX_RANK_NODES}")
    pred, _ = _masks(g)
    full = (1 << n) - 1
    levels = [{0: 1}]
    for _ in range(n):
        nxt: dict[int, int] = {}
        for D, ways in levels[-1].items():
            for v in _bits(full & ~D):
                if pred[v] & ~D == 0:
                    E = D | (1 << v)
                    nxt[E] = nxt.get(E, 0) + ways
        levels.append(nxt)
    back = {full: 1}
    for t in range(n - 1, -1, -1):
        for D in levels[t]:
            s = 0
            for v in _bits(full & ~D):
                if pred[v] & ~D == 0:
                    s += back[D | (1 << v)]
            back[D] = s
    total = back[0]
    counts = np.zeros((n, n), dtype=object)
    for t in range(n):
        for D, ways in levels[t].items():
            for v in _bits(full & ~D):
                if pred[v] & ~D == 0:
                    counts[v, t] += ways * back[D | (1 << v)]
    return np.array([[c / total for c in row] for row in counts.tolist()], dtype=float)


def rank_distribution_exact(g: ComparisonGraph, node: int) -> RankDistribution:
    return RankDistribution(node, rank_matrix_exact(g)[node])


def bernstein_densities(n: int, xs) -> np.ndarray:
    """``B[t, m]``: density of the (t+1)-th smallest of n uniforms at xs[m]."""
    xs = np.asarray(xs, dtype=float)
    t = np.arange(n)[:, None]
    logc = gammaln(n + 1) - gammaln(t + 1) - gammaln(n - t)
    with np.errstate(divide="ignore", invalid="ignore"):
        lx, l1x = np.log(xs)[None, :], np.log1p(-xs)[None, :]
        a = np.where(t > 0, t * lx, 0.0)
        b = np.where(n - 1 - t > 0, (n - 1 - t) * l1x, 0.0)
    return np.exp(logc + a + b)


def mixture_density(probs, d: int | None = None) -> ChebSeries:
    """Bernstein mixture sum_t probs[t] B_t as a Chebyshev series."""
    probs = np.asarray(probs, dtype=float)
    n = probs.size
    d = max(d or n, 2)
    return ChebSeries(cheb.from_values(probs @ bernstein_densities(n, cheb.grid(d))))


def marginal_density_exact(g: ComparisonGraph, node: int) -> ChebSeries:
    return mixture_density(rank_matrix_exact(g)[node])


def project_to_ranks(density, n: int) -> np.ndarray:
    """Rank distribution whose Bernstein mixture is L2-closest to a density.

    The fit is over the simplex (nonnegative weights summing to one), since
    the unconstrained Bernstein fit is badly conditioned for densities that
    are not exactly mixtures.  Exact when the density already is one.
    """
    xs, w = np.polynomial.legendre.leggauss(max(2 * n + 8, 64))
    xs, w = (xs + 1) / 2, w / 2
    B = bernstein_densities(n, xs)
    y = cheb.evaluate(density, xs)
    sw = np.sqrt(w)
    A, b = (B * sw).T, y * sw
    big = 1e3 * max(1.0, float(np.abs(A).max()))   # sum-to-one row
    p, _ = nnls(np.vstack([A, big * np.ones(n)]), np.append(b, big))
    return p / p.sum()


@dataclass
class PartitionEstimate:
    value: float
    stderr: float = 0.0
    log_value: float | None = None


def _all_positions(n: int) -> np.ndarray:
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)
    pos = np.empty_like(perms)
    rows = np.arange(perms.shape[0])[:, None]
    pos[rows, perms] = np.arange(n)[None, :]
    return pos


def violation_counts(g: ComparisonGraph) -> np.ndarray:
    """H(pi) for every permutation of the nodes."""
    if g.n > MAX_PERM_NODES:
        raise OracleLimitError(f"permutation sums limited to n <= {MAX_PERM_NODES}")
    pos = _all_positions(g.n)
    if g.num_edges == 0:
        return np.zeros(pos.shape[0], dtype=np.int64)
    return np.sum(pos[:, g.edges[:, 0]] >= pos[:, g.edges[:, 1]], axis=1)


def partition_function_exact(g: ComparisonGraph, kernel: Kernel, samples: int = 1_000_000,
                             seed: int = 0) -> PartitionEstimate:
    """Z = int over the unit cube of prod f~.

    Step family: exact sum over the n! orderings.  BTL: plain Monte Carlo
    over the cube with a standard error.
    """
    if g.n > MAX_PERM_NODES:
        raise OracleLimitError(f"exact partition functions limited to n <= {MAX_PERM_NODES}")
    if g.num_edges == 0:
        return PartitionEstimate(1.0, 0.0, 0.0)
    if kernel.is_step_family:
        H = violation_counts(g)
        lognorm = float(gammaln(g.n + 1)) + g.num_edges * math.log1p(kernel.upset_weight)
        if kernel.family == "zero":
            k = int(np.sum(H == 0))
            lz = math.log(k) - float(gammaln(g.n + 1)) if k else -math.inf
        else:
            lz = float(logsumexp(-kernel.beta * H)) - lognorm
        return PartitionEstimate(math.exp(lz), 0.0, lz)
    rng = np.random.default_rng(seed)
    batch = 100_000
    acc, acc2, done = 0.0, 0.0, 0
    while done < samples:
        m = min(batch, samples - done)
        x = rng.random((m, g.n))
        logw = kernel.log_pair_factor(x[:, g.edges[:, 0]], x[:, g.edges[:, 1]]).sum(axis=1)
        wts = np.exp(logw)
        acc += wts.sum()
        acc2 += (wts ** 2).sum()
        done += m
    mean = acc / done
    var = max(acc2 / done - mean * mean, 0.0)
    return PartitionEstimate(mean, math.sqrt(var / done), math.log(mean))


def violation_probabilities_exact(g: ComparisonGraph, kernel: Kernel) -> np.ndarray:
    """Exact P(edge violated) under the step-family Gibbs measure."""
    if not kernel.is_step_family:
        raise ValueError("only the step family has an exact permutation sum")
    pos = _all_positions(g.n)
    bad = pos[:, g.edges[:, 0]] >= pos[:, g.edges[:, 1]]
    H = bad.sum(axis=1)
    if kernel.family == "zero":
        wts = (H == 0).astype(float)
    else:
        wts = np.exp(-kernel.beta * (H - H.min()))
    return (wts @ bad) / wts.sum()


def mean_energy_exact(g: ComparisonGraph, kernel: Kernel) -> float:
    """<H> + |E| ln(1 + e^-beta) = -<sum ln f~> for the step family."""
    H = violation_counts(g)
    wts = np.exp(-kernel.beta * (H - H.min()))
    return float(kernel.beta * (wts @ H) / wts.sum() + g.num_edges * math.log1p(kernel.upset_weight))
