"""Comparison kernels.

An edge ``(i, j)`` asserts ``i`` precedes ``j``: the favoured configuration
is ``x_i < x_j``.  Every kernel exposes the resolved edge factor
``f~(x_pred, x_succ)`` and, for BP, the linear maps taking the Chebyshev
coefficients of a message density to the values of the factor it induces
on its receiver,

    phi(x) = int_0^1 f~(y, x) mu(y) dy      (sender precedes receiver)
    phi(x) = int_0^1 f~(x, y) mu(y) dy      (sender succeeds receiver)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import cheb

FAMILIES = ("zero", "step", "btl")
ROLES = ("pred", "succ")
_QUAD_MIN = 257


@dataclass(frozen=True)
class Kernel:
    """Edge factor family plus inverse temperature.

    ``zero`` is the hard constraint ``Theta(x_succ - x_pred)``; ``step``
    charges ``exp(-beta)`` for a violated edge and is normalized by
    ``1 + exp(-beta)``; ``btl`` is the logistic factor
    ``sigmoid(2 beta (x_succ - x_pred))``.
    """

    family: str
    beta: float = math.inf

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "zero":
            object.__setattr__(self, "beta", math.inf)
        elif not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        elif self.family == "btl" and math.isinf(self.beta):
            raise ValueError("btl needs a finite beta")

    @classmethod
    def zero_temp(cls) -> "Kernel":
        return cls("zero")

    @classmethod
    def step(cls, beta: float) -> "Kernel":
        return cls("step", float(beta))

    @classmethod
    def btl(cls, beta: float) -> "Kernel":
        return cls("btl", float(beta))

    @property
    def is_step_family(self) -> bool:
        return self.family in ("zero", "step")

    @property
    def upset_weight(self) -> float:
        """exp(-beta) for the step family; 0 at zero temperature."""
        return 0.0 if math.isinf(self.beta) else math.exp(-self.beta)

    @property
    def factor_bounds(self) -> tuple[float, float]:
        """Range of f~; any induced factor is an average of f~ values."""
        if self.family == "btl":
            lo = float(_sigmoid(-2.0 * self.beta))
            return lo, 1.0 - lo
        eps = self.upset_weight
        return eps / (1.0 + eps), 1.0 / (1.0 + eps)

    def pair_factor(self, x_pred, x_succ):
        x_pred = np.asarray(x_pred, dtype=float)
        x_succ = np.asarray(x_succ, dtype=float)
        if self.family == "btl":
            return _sigmoid(2.0 * self.beta * (x_succ - x_pred))
        eps = self.upset_weight
        return np.where(x_pred < x_succ, 1.0, eps) / (1.0 + eps)

    def log_pair_factor(self, x_pred, x_succ):
        x_pred = np.asarray(x_pred, dtype=float)
        x_succ = np.asarray(x_succ, dtype=float)
        if self.family == "btl":
            return -np.logaddexp(0.0, -2.0 * self.beta * (x_succ - x_pred))
        eps = self.upset_weight
        bad = -self.beta if eps > 0 else -np.inf
        return np.where(x_pred < x_succ, 0.0, bad) - math.log1p(eps)

    def factor_matrix(self, role: str, d: int, xs) -> np.ndarray:
        """Matrix mapping message coefficients to factor values at ``xs``."""
        return _factor_matrix(self, role, d, tuple(np.asarray(xs, dtype=float).tolist()))

    def log_factor_matrix(self, role: str, d: int, xs) -> np.ndarray:
        """Like :meth:`factor_matrix` for the integrand ``f~ ln f~``."""
        if self.is_step_family:
            raise ValueError("step-family energies use the closed form")
        return _flogf_matrix(self, role, d, tuple(np.asarray(xs, dtype=float).tolist()))

    def violation_matrix(self, d: int, xs) -> np.ndarray:
        """Maps the successor's message to ``x -> int_0^x f~(x, y) mu(y) dy``.

        Integrating this against the predecessor's message gives the weight
        of configurations with ``x_pred > x_succ``.
        """
        return _violation_matrix(self, d, tuple(np.asarray(xs, dtype=float).tolist()))


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


@lru_cache(maxsize=256)
def _factor_matrix(kernel: Kernel, role: str, d: int, xs_key: tuple) -> np.ndarray:
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}")
    xs = np.asarray(xs_key)
    if kernel.is_step_family:
        eps = kernel.upset_weight
        total = np.broadcast_to(cheb.integral_weights(d), (xs.size, d))
        M = cheb.cdf_matrix(d, xs)
        if role == "pred":
            V = (eps * total + (1.0 - eps) * M) / (1.0 + eps)
        else:
            V = (total - (1.0 - eps) * M) / (1.0 + eps)
    else:
        V = quadrature_factor_matrix(kernel.pair_factor, role, d, xs)
    V = np.ascontiguousarray(V)
    V.setflags(write=False)
    return V


@lru_cache(maxsize=64)
def _flogf_matrix(kernel: Kernel, role: str, d: int, xs_key: tuple) -> np.ndarray:
    def g(xp, xq):
        return kernel.pair_factor(xp, xq) * kernel.log_pair_factor(xp, xq)

    V = quadrature_factor_matrix(g, role, d, np.asarray(xs_key))
    V.setflags(write=False)
    return V


def quadrature_factor_matrix(f, role: str, d: int, xs) -> np.ndarray:
    """Build a factor matrix for a smooth kernel by Clenshaw-Curtis in y."""
    xs = np.asarray(xs, dtype=float)
    q = max(_QUAD_MIN, 16 * d + 1)
    ys = cheb.grid(q)
    w = cheb.quadrature_weights(q)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    F = f(Y, X) if role == "pred" else f(X, Y)
    F = np.broadcast_to(np.asarray(F, dtype=float), X.shape)
    return F @ (cheb.basis_matrix(d, ys) * w[:, None])


@lru_cache(maxsize=64)
def _violation_matrix(kernel: Kernel, d: int, xs_key: tuple) -> np.ndarray:
    xs = np.asarray(xs_key)
    if kernel.is_step_family:
        eps = kernel.upset_weight
        V = eps / (1.0 + eps) * cheb.cdf_matrix(d, xs)
    else:
        # y runs over [0, x] on a per-row mapped grid
        q = max(_QUAD_MIN, 16 * d + 1)
        t = cheb.grid(q)
        w = cheb.quadrature_weights(q)
        V = np.empty((xs.size, d))
        for m, x in enumerate(xs):
            ys = x * t
            vals = kernel.pair_factor(x, ys) * w * x
            V[m] = vals @ cheb.basis(d, ys)
    V.setflags(write=False)
    return V
