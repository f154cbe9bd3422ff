"""Bethe free entropy, entropy and energy; annealed entropy; beta fitting.

Two routes to ln Z are computed from the same messages:

* normalizers: ``ln Z = sum_i ln Z_i - sum_(ij) ln Z_ij`` with
  ``Z_i = int prod_k phi_k->i`` and ``Z_ij = int mu_i->j phi_j->i``;
* entropy minus energy: ``S_Bethe - U`` with edge and node entropies.

They agree at a fixed point, which makes the second a check on the first.
All integrals use the oversampled Clenshaw-Curtis grid of :mod:`cheb`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from . import cheb
from .bp import BPResult, MessageSet, _Plan, factor_values, run_bp
from .graph import ComparisonGraph, is_dag
from .kernels import Kernel

log = logging.getLogger(__name__)


class ThermoError(ArithmeticError):
    pass


@dataclass
class BetheTerms:
    log_z: float
    entropy: float
    energy: float
    log_z_nodes: np.ndarray
    log_z_edges: np.ndarray
    violation: np.ndarray


def bethe_terms(g: ComparisonGraph, m: MessageSet, kernel: Kernel) -> BetheTerms:
    n, E = g.n, g.num_edges
    if E == 0:
        return BetheTerms(0.0, 0.0, 0.0, np.zeros(n), np.zeros(0), np.zeros(0))
    C = m.coeffs
    d = C.shape[1]
    xs, w = cheb.refined_grid(d)
    plan = _Plan(g)

    F = factor_values(kernel, C, None, xs)
    logF = np.log(np.maximum(F, 1e-300))
    node_log = plan.into @ logF
    top = node_log.max(axis=1)
    z_scaled = np.exp(node_log - top[:, None]) @ w
    if np.any(~(z_scaled > 0)):
        raise ThermoError("node normalizer vanished; contradictory instance?")
    ln_zi = top + np.log(z_scaled)

    # low-degree truncations can dip below zero; densities are clipped like the factors
    mu = np.maximum(C @ cheb.basis_matrix(d, xs).T, 0.0)
    ln_mu = np.log(np.maximum(mu, cheb.LOG_FLOOR))
    wf_i = mu[0::2] * F[1::2] * w       # x_i-marginal of the edge, unnormalized
    wf_j = mu[1::2] * F[0::2] * w
    z_i, z_j = wf_i.sum(axis=1), wf_j.sum(axis=1)
    if np.any(~(z_i > 0)) or np.any(~(z_j > 0)):
        raise ThermoError("edge normalizer vanished; contradictory instance?")
    ln_zij = 0.5 * (np.log(z_i) + np.log(z_j))

    log_mu_i = (wf_i * ln_mu[0::2]).sum(axis=1) / z_i
    log_mu_j = (wf_j * ln_mu[1::2]).sum(axis=1) / z_j
    back = C[1::2]
    viol = ((mu[0::2] * w) * (back @ kernel.violation_matrix(d, xs).T)).sum(axis=1) / z_i
    if kernel.family == "zero":
        log_f = np.zeros(E)
    elif kernel.family == "step":
        log_f = -kernel.beta * viol - math.log1p(kernel.upset_weight)
    else:
        G = kernel.log_factor_matrix("succ", d, xs)
        log_f = ((mu[0::2] * w) * (back @ G.T)).sum(axis=1) / z_i

    mu_node = np.exp(node_log - ln_zi[:, None])
    s_node = -((mu_node * (node_log - ln_zi[:, None])) @ w)
    s_edge = ln_zij - log_f - log_mu_i - log_mu_j
    entropy = float(s_edge.sum() - ((g.degrees - 1) * s_node).sum())
    energy = float(-log_f.sum())
    return BetheTerms(float(ln_zi.sum() - ln_zij.sum()), entropy, energy, ln_zi, ln_zij, np.clip(viol, 0, 1))


def bethe_log_z(g: ComparisonGraph, m: MessageSet, kernel: Kernel) -> float:
    return bethe_terms(g, m, kernel).log_z


def bethe_entropy(g: ComparisonGraph, m: MessageSet, kernel: Kernel) -> float:
    return bethe_terms(g, m, kernel).entropy


def bethe_energy(g: ComparisonGraph, m: MessageSet, kernel: Kernel) -> float:
    return bethe_terms(g, m, kernel).energy


@dataclass
class ThermoReport:
    log_z: float
    entropy: float
    energy: float
    n: int
    beta: float
    family: str
    converged: bool = True
    sweeps: int = 0

    @property
    def log_z_per_site(self) -> float:
        return self.log_z / self.n if self.n else 0.0

    @property
    def entropy_per_site(self) -> float:
        return self.entropy / self.n if self.n else 0.0

    @property
    def energy_per_site(self) -> float:
        return self.energy / self.n if self.n else 0.0

    @property
    def route_gap(self) -> float:
        """Relative disagreement of the two ln Z routes."""
        return abs(self.log_z - (self.entropy - self.energy)) / max(1.0, abs(self.log_z))


def thermo_report(res: BPResult) -> ThermoReport:
    t = bethe_terms(res.graph, res.messages, res.kernel)
    return ThermoReport(t.log_z, t.entropy, t.energy, res.graph.n, res.kernel.beta,
                        res.kernel.family, res.converged, res.sweeps_used)


def _default_schedule(g: ComparisonGraph) -> str:
    return "serial" if g.num_edges <= 500 else "parallel"


def evaluate_kernel(g: ComparisonGraph, kernel: Kernel, d: int = 32, **bp_kwargs):
    """Run BP and return ``(ThermoReport, BPResult)``."""
    bp_kwargs.setdefault("schedule", _default_schedule(g))
    res = run_bp(g, kernel, d=d, **bp_kwargs)
    return thermo_report(res), res


def log_likelihood(g: ComparisonGraph, kernel: Kernel, d: int = 32, **bp_kwargs) -> float:
    """Bethe estimate of ln P(G) = ln Z(beta)."""
    report, _ = evaluate_kernel(g, kernel, d, **bp_kwargs)
    if not report.converged:
        log.warning("log_likelihood: BP unconverged at %s beta=%g", kernel.family, kernel.beta)
    return report.log_z


@dataclass
class LinearExtensionCount:
    log_count: float
    count: int | None
    report: ThermoReport
    result: BPResult = field(repr=False)


def count_linear_extensions(g: ComparisonGraph, d: int = 32, tol: float = 1e-8,
                            **bp_kwargs) -> LinearExtensionCount:
    """ln(#linear extensions) = ln Z + ln n!; an integer is reported when
    n <= 20 and the estimate sits within 1e-3 (relative) of one."""
    if not is_dag(g):
        raise ValueError("linear extensions need a DAG")
    report, res = evaluate_kernel(g, Kernel.zero_temp(), d, tol=tol, **bp_kwargs)
    log_count = report.log_z + float(gammaln(g.n + 1))
    count = None
    if g.n <= 20:
        est = math.exp(log_count)
        r = round(est)
        if r >= 1 and abs(est - r) <= 1e-3 * r:
            count = int(r)
    return LinearExtensionCount(log_count, count, report, res)


def annealed_entropy(lam: float) -> float:
    """Annealed entropy per site of the sparse random partial order.

    ``1 - ln lam + int_0^1 ln(1 - e^{-lam x}) dx`` is rewritten as
    ``int_0^1 ln((1 - e^{-z}) / z) dx`` with ``z = lam x``, which has no
    endpoint singularity.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")

    def integrand(x):
        z = lam * x
        if z < 1e-4:
            return -z / 2 + z * z / 24
        return math.log(-math.expm1(-z) / z)

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


@dataclass
class EnsembleEstimate:
    s_bethe: float
    s_bethe_se: float
    s_ann: float
    s_ann_se: float
    samples: int


def ensemble_entropies(log_zs, n: int) -> EnsembleEstimate:
    """Quenched and annealed entropy per site from ln Z over many instances,
    assuming ln Z is normal: s_ann = (mean + var / 2) / n."""
    x = np.asarray(log_zs, dtype=float)
    N = x.size
    if N < 2:
        raise ValueError("need at least two samples")
    mu, var = x.mean(), x.var(ddof=1)
    se_mu = math.sqrt(var / N)
    se_ann = math.sqrt(var / N + var * var / (2 * (N - 1)))
    return EnsembleEstimate(mu / n, se_mu / n, (mu + var / 2) / n, se_ann / n, N)


# ---------------------------------------------------------------------------
# Parameter estimation

@dataclass
class FitResult:
    family: str
    beta: float
    log_z: float
    at_boundary: bool = False
    multimodal: bool = False
    degenerate: bool = False
    evaluations: int = 0
    unconverged: int = 0
    scan: list[tuple[float, float]] = field(default_factory=list, repr=False)

    @property
    def flags(self) -> list[str]:
        return [name for name in ("at_boundary", "multimodal", "degenerate") if getattr(self, name)]


_GOLDEN = (math.sqrt(5) - 1) / 2
FIT_MAX_SWEEPS = 200


def fit_beta(
    g: ComparisonGraph,
    family: str,
    beta_range: tuple[float, float] = (0.0, 10.0),
    d: int = 32,
    grid_points: int = 16,
    xtol: float = 1e-3,
    **bp_kwargs,
) -> FitResult:
    """Maximize the Bethe likelihood over beta.

    A coarse scan of ``grid_points`` values brackets the maximum, then
    golden-section search refines it.  BP is warm-started from the messages
    of the nearest beta already evaluated.
    """
    lo, hi = map(float, beta_range)
    if not 0 <= lo < hi:
        raise ValueError("beta_range must satisfy 0 <= lo < hi")
    if family == "zero":
        raise ValueError("fit_beta needs a finite-temperature family")
    if g.num_edges == 0:
        return FitResult(family, lo, 0.0, degenerate=True)

    bp_kwargs.setdefault("schedule", _default_schedule(g))
    # far from the optimum, frustrated data often never converges; cap the cost
    bp_kwargs.setdefault("max_sweeps", FIT_MAX_SWEEPS)
    cache: dict[float, tuple[float, MessageSet]] = {}
    unconverged = 0

    def f(beta: float) -> float:
        nonlocal unconverged
        if beta in cache:
            return cache[beta][0]
        init = None
        if cache:
            init = cache[min(cache, key=lambda b: abs(b - beta))][1]
        report, res = evaluate_kernel(g, Kernel(family, beta), d, init=init, **bp_kwargs)
        unconverged += not report.converged
        cache[beta] = (report.log_z, res.messages)
        return report.log_z

    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([f(float(b)) for b in grid])
    k = int(np.argmax(vals))
    a, b = float(grid[max(k - 1, 0)]), float(grid[min(k + 1, grid_points - 1)])
    c1, c2 = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    f1, f2 = f(c1), f(c2)
    while b - a > xtol:
        if f1 >= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - _GOLDEN * (b - a)
            f1 = f(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + _GOLDEN * (b - a)
            f2 = f(c2)
    beta_star = max(cache, key=lambda t: cache[t][0])
    best = cache[beta_star][0]

    slack = 1e-9 * max(1.0, abs(best))
    interior = vals[1:-1]
    peaks = np.sum((interior > vals[:-2] + slack) & (interior > vals[2:] + slack))
    peaks += (vals[0] > vals[1] + slack) + (vals[-1] > vals[-2] + slack)
    return FitResult(
        family,
        beta_star,
        best,
        at_boundary=min(beta_star - lo, hi - beta_star) <= xtol,
        multimodal=bool(peaks > 1),
        evaluations=len(cache),
        unconverged=unconverged,
        scan=[(float(b), float(v)) for b, v in zip(grid, vals)],
    )


@dataclass
class ModelSelection:
    fits: dict[str, FitResult]
    best: str

    @property
    def flags(self) -> dict[str, list[str]]:
        return {k: v.flags for k, v in self.fits.items() if v.flags}


def model_select(g: ComparisonGraph, families=("step", "btl"),
                 beta_range: tuple[float, float] = (0.0, 10.0), d: int = 32,
                 **fit_kwargs) -> ModelSelection:
    """Prefer the family with the largest maximized likelihood."""
    families = list(families)
    if len(families) < 2:
        raise ValueError("model selection needs at least two families")
    fits = {fam: fit_beta(g, fam, beta_range, d, **fit_kwargs) for fam in families}
    best = max(families, key=lambda fam: fits[fam].log_z)
    return ModelSelection(fits, best)
