"""Functions on [0, 1] in the shifted Chebyshev basis.

A series with coefficients ``c[0..d-1]`` represents

    f(x) = sum_k c[k] T_k(x),   T_k(x) = cos(k theta),   x = (1 + cos theta) / 2.

Values live on the Chebyshev extrema grid ``x_m = (1 + cos(m pi / (d-1))) / 2``
(so ``x_0 = 1`` and ``x_{d-1} = 0``), and the two representations are related
by a type-I discrete cosine transform.  Every array function here works on the
last axis, so a stack of series (one per BP message) is transformed at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.fft import dct

LOG_FLOOR = 1e-30
REFINE = 4


@dataclass(frozen=True)
class ChebSeries:
    """A function on [0, 1] given by its shifted-Chebyshev coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("ChebSeries needs a non-empty 1-D coefficient vector")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, value: float = 1.0, d: int = 1) -> "ChebSeries":
        c = np.zeros(d)
        c[0] = value
        return cls(c)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], d: int) -> "ChebSeries":
        """Interpolate ``fn`` at the d-point extrema grid."""
        return cls(from_values(fn(grid(d))))

    @property
    def d(self) -> int:
        return self.coeffs.size

    def __call__(self, x):
        return evaluate(self, x)

    def __len__(self):
        return self.coeffs.size

    def mean(self) -> float:
        """First moment of the series viewed as a density."""
        return float(mean_position(self.coeffs))


def _coeffs(s) -> np.ndarray:
    if isinstance(s, ChebSeries):
        return s.coeffs
    return np.asarray(s, dtype=float)


@lru_cache(maxsize=None)
def _grid(d: int) -> np.ndarray:
    if d < 2:
        raise ValueError("the extrema grid needs d >= 2")
    g = 0.5 * (1.0 + np.cos(np.pi * np.arange(d) / (d - 1)))
    g.setflags(write=False)
    return g


def grid(d: int) -> np.ndarray:
    """Chebyshev extrema points on [0, 1], descending from 1 to 0."""
    return _grid(d)


def to_values(s) -> np.ndarray:
    """Values of the series on its own d-point extrema grid."""
    c = np.array(_coeffs(s), dtype=float)
    d = c.shape[-1]
    if d < 2:
        raise ValueError("to_values needs d >= 2")
    c[..., 0] *= 2.0
    c[..., -1] *= 2.0
    return dct(c, type=1, axis=-1) / 2.0


def from_values(v) -> np.ndarray:
    """Coefficients of the degree d-1 interpolant through values on the grid."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    if d < 2:
        raise ValueError("from_values needs d >= 2")
    c = dct(v, type=1, axis=-1) / (d - 1)
    c[..., 0] /= 2.0
    c[..., -1] /= 2.0
    return c


@lru_cache(maxsize=None)
def _transform_matrix(d: int) -> np.ndarray:
    W = from_values(np.eye(d)).T.copy()
    W.setflags(write=False)
    return W


def fit_values(v) -> np.ndarray:
    """Same as :func:`from_values`; a dense matrix product beats the DCT on
    large stacks of short series, so it is used for d <= 64."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    if d > 64:
        return from_values(v)
    return v @ _transform_matrix(d)


def evaluate(s, x):
    """Clenshaw summation of the series at points x in [0, 1].  A stack of
    coefficient rows gives one row of values per series."""
    c = _coeffs(s)
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("evaluate is only defined on [0, 1]")
    if c.ndim > 1:
        return (c @ basis(c.shape[-1], x.ravel()).T).reshape(c.shape[:-1] + x.shape)
    t2 = 2.0 * (2.0 * x - 1.0)
    b1 = np.zeros_like(x)
    b2 = np.zeros_like(x)
    for ck in c[:0:-1]:
        b1, b2 = ck + t2 * b1 - b2, b1
    out = c[0] + 0.5 * t2 * b1 - b2
    return float(out) if out.ndim == 0 else out


def basis(d: int, xs) -> np.ndarray:
    """Matrix ``B[m, k] = T_k(xs[m])``."""
    theta = np.arccos(np.clip(2.0 * np.asarray(xs, dtype=float) - 1.0, -1.0, 1.0))
    return np.cos(np.outer(theta, np.arange(d)))


@lru_cache(maxsize=256)
def _basis_at(d: int, xs_key: tuple) -> np.ndarray:
    B = basis(d, np.asarray(xs_key))
    B.setflags(write=False)
    return B


def basis_matrix(d: int, xs: np.ndarray) -> np.ndarray:
    """Cached :func:`basis` for grids that are reused."""
    return _basis_at(d, tuple(np.asarray(xs, dtype=float).tolist()))


@lru_cache(maxsize=None)
def integral_weights(d: int) -> np.ndarray:
    """Vector I with ``I @ c`` equal to the integral over [0, 1]."""
    k = np.arange(d)
    w = np.zeros(d)
    even = k % 2 == 0
    w[even] = 1.0 / (1.0 - k[even] ** 2)
    w.setflags(write=False)
    return w


def definite_integral(s) -> float | np.ndarray:
    c = _coeffs(s)
    out = c @ integral_weights(c.shape[-1])
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def quadrature_weights(npts: int) -> np.ndarray:
    """Clenshaw-Curtis weights for the npts-point extrema grid on [0, 1]."""
    w = from_values(np.eye(npts)) @ integral_weights(npts)
    w.setflags(write=False)
    return w


def refined_grid(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Oversampled quadrature grid used for non-polynomial integrands."""
    npts = max(REFINE * (d - 1) + 1, 65)
    return grid(npts), quadrature_weights(npts)


def antiderivative(s) -> np.ndarray | ChebSeries:
    """Antiderivative F with F(0) = 0, returned with d+1 coefficients.

    On [0, 1] we have dx = dt/2 with t = 2x - 1, which halves the usual
    [-1, 1] recurrence.
    """
    wrap = isinstance(s, ChebSeries)
    c = _coeffs(s)
    d = c.shape[-1]
    pad = np.zeros(c.shape[:-1] + (d + 2,))
    pad[..., :d] = c
    b = np.zeros(c.shape[:-1] + (d + 1,))
    b[..., 1] = (2.0 * pad[..., 0] - pad[..., 2]) / 2.0
    if d >= 2:
        k = np.arange(2, d + 1)
        b[..., 2:] = (pad[..., k - 1] - pad[..., k + 1]) / (2.0 * k)
    b *= 0.5
    alt = (-1.0) ** np.arange(d + 1)
    b[..., 0] = -(b[..., 1:] @ alt[1:])
    return ChebSeries(b) if wrap else b


@lru_cache(maxsize=256)
def _cdf_at(d: int, xs_key: tuple) -> np.ndarray:
    """Matrix mapping d coefficients to values of their antiderivative at xs."""
    A = antiderivative(np.eye(d))
    M = A @ basis_matrix(d + 1, np.asarray(xs_key)).T
    M = M.T.copy()
    M.setflags(write=False)
    return M


def cdf_matrix(d: int, xs: np.ndarray) -> np.ndarray:
    return _cdf_at(d, tuple(np.asarray(xs, dtype=float).tolist()))


def _values_on(c: np.ndarray, d: int) -> np.ndarray:
    if c.size == d:
        return to_values(c)
    if c.size < d:
        return to_values(np.pad(c, (0, d - c.size)))
    return evaluate(c, grid(d))


def product_truncated(factors: Sequence, d: int) -> ChebSeries:
    """Pointwise product of the factors, interpolated back to d coefficients."""
    if not factors:
        raise ValueError("product_truncated needs at least one factor")
    if d < 2:
        raise ValueError("product_truncated needs d >= 2")
    vals = np.ones(d)
    for f in factors:
        vals = vals * _values_on(_coeffs(f), d)
    return ChebSeries(from_values(vals))


def normalize(s) -> ChebSeries:
    c = _coeffs(s)
    z = definite_integral(c)
    if not np.isfinite(z) or z <= 0:
        raise ValueError("cannot normalize a series with non-positive integral")
    return ChebSeries(c / z)


def neg_entropy_integral(p) -> float:
    """-int p ln p over [0, 1] by oversampled Clenshaw-Curtis quadrature."""
    c = _coeffs(p)
    if abs(definite_integral(c) - 1.0) > 1e-3:
        raise ValueError("neg_entropy_integral expects a normalized density")
    d = max(c.size, 2)
    xs, w = refined_grid(d)
    v = evaluate(c, xs)
    return float(-(w @ (v * np.log(np.maximum(v, LOG_FLOOR)))))


def mean_position(c) -> float | np.ndarray:
    """int x p(x) dx; uses x T_k = (T_k + (T_{k+1} + T_{|k-1|}) / 2) / 2."""
    c = np.asarray(c, dtype=float)
    d = c.shape[-1]
    I = integral_weights(d + 1)
    w = 0.5 * I[:d].copy()
    k = np.arange(d)
    w += 0.25 * (I[k + 1] + I[np.abs(k - 1)])
    return c @ w


def kernel_matrix(f, direction: int, d: int) -> np.ndarray:
    """Coefficient map of the integral operator of an edge factor.

    ``f`` is either a kernel object from :mod:`permbp.kernels` or a plain
    callable ``f(x_pred, x_succ)``.  ``direction=+1`` means the integrated
    variable belongs to the predecessor, ``-1`` to the successor.  Column l
    holds the coefficients of ``x -> int_0^1 f~(x, y) T_l(y) dy``.
    """
    from .kernels import Kernel, quadrature_factor_matrix

    if isinstance(f, Kernel):
        V = f.factor_matrix("pred" if direction > 0 else "succ", d, grid(d))
    else:
        V = quadrature_factor_matrix(f, "pred" if direction > 0 else "succ", d, grid(d))
    return from_values(V.T).T
