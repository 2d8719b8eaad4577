"""Deterministic numerical kernels: Gaussian quadrature rules, symmetric
eigensolves, finite-difference stencils and monotone cubic interpolation.

Every Gaussian integral in the package goes through a :class:`QuadratureRule`,
whose weights are normalised against the standard Gaussian weight
``exp(-x**2/2)/sqrt(2*pi)`` (probabilists' convention), so that
``sum(weights) == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.linalg import null_space

from .errors import DegenerateDirectionsError, InvalidMatrixError, MonotonicityError, ResourceLimitError

MAX_GH_ORDER = 512


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Tensor-product rule ``sum_i w_i f(x_i) ~ int f dgamma_n``.

    ``axes_nodes[d]`` and ``axes_weights[d]`` hold the one-dimensional rule
    used along axis ``d``; flattened points are ordered C-style (last axis
    fastest), matching ``np.meshgrid(..., indexing="ij")``.
    """

    axes_nodes: tuple
    axes_weights: tuple
    kind: str = "gauss-hermite"

    @property
    def dimension(self) -> int:
        return len(self.axes_nodes)

    @property
    def order(self) -> tuple:
        return tuple(len(n) for n in self.axes_nodes)

    @property
    def shape(self) -> tuple:
        return self.order

    @cached_property
    def points(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes_nodes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.axes_weights[0]
        for wd in self.axes_weights[1:]:
            w = np.multiply.outer(w, wd)
        return np.asarray(w).ravel()

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Apply the rule to ``f``, which maps an ``(M, n)`` array to ``(M, ...)``."""
        vals = np.asarray(f(self.points))
        return np.tensordot(self.weights, vals, axes=(0, 0))


def gauss_hermite(order: int, dimension: int = 1) -> QuadratureRule:
    """Probabilists' Gauss-Hermite rule of ``order`` nodes per axis.

    Parameters
    ----------
    order : int
        Nodes per axis, at least 2. The 1D rule is exact for polynomials of
        degree ``2*order - 1``.
    dimension : int
        Number of tensorised axes.

    Raises
    ------
    ResourceLimitError
        If ``order`` exceeds 512.
    """
    if order < 2:
        raise ValueError("Gauss-Hermite order must be at least 2")
    if order > MAX_GH_ORDER:
        raise ResourceLimitError(f"order {order} exceeds the limit {MAX_GH_ORDER}")
    if dimension < 1:
        raise ValueError("dimension must be positive")
    x, w = hermegauss(order)
    w = w / w.sum()
    return QuadratureRule(tuple(x.copy() for _ in range(dimension)),
                          tuple(w.copy() for _ in range(dimension)))


def gaussian_trapezoid(axes: Sequence[np.ndarray]) -> QuadratureRule:
    """Trapezoid rule on uniform axes, weighted by the Gaussian density.

    For the smooth, rapidly decaying integrands met here the trapezoid rule
    converges geometrically, so this is the natural rule on transport grids.
    """
    nodes, weights = [], []
    for x in axes:
        x = np.asarray(x, dtype=float)
        w = np.exp(-0.5 * x**2)
        w[0] *= 0.5
        w[-1] *= 0.5
        nodes.append(x)
        weights.append(w / w.sum())
    return QuadratureRule(tuple(nodes), tuple(weights), kind="gaussian-trapezoid")


def composite_legendre(a: float, b: float, cells: int, order: int = 8):
    """Nodes ``(cells, order)`` and Lebesgue weights of a composite Gauss-Legendre rule."""
    t, w = leggauss(order)
    edges = np.linspace(a, b, cells + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = mid[:, None] + half[:, None] * t[None, :]
    weights = half[:, None] * w[None, :]
    return edges, nodes, weights


# ---------------------------------------------------------------------------
# symmetric eigensolves


@dataclass(frozen=True)
class SymmetricSpectrum:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns are eigenvectors

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def _check_symmetric(A: np.ndarray, tol: float) -> None:
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    asym = np.max(np.abs(A - np.swapaxes(A, -1, -2))) if A.size else 0.0
    if asym > tol * scale:
        raise InvalidMatrixError(f"matrix is not symmetric (max |A - A^T| = {asym:.3g})")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every eigenvector is made positive
    idx = np.argmax(np.abs(vectors), axis=-2)
    picked = np.take_along_axis(vectors, idx[..., None, :], axis=-2)
    signs = np.where(picked < 0, -1.0, 1.0)
    return vectors * signs


def sym_eigen(A, tol: float = 1e-10) -> SymmetricSpectrum:
    """Ascending eigen-decomposition of a symmetric matrix with fixed signs."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidMatrixError("expected a square matrix")
    if A.shape[0] > 64:
        raise ResourceLimitError("sym_eigen is limited to dimension 64")
    _check_symmetric(A, tol)
    vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    return SymmetricSpectrum(vals, _fix_signs(vecs))


def sym_eigen_stack(A, tol: float = 1e-10, vectors: bool = True):
    """Batched :func:`sym_eigen` over leading axes of ``A`` (shape ``(..., n, n)``)."""
    A = np.asarray(A, dtype=float)
    _check_symmetric(A, tol)
    S = 0.5 * (A + np.swapaxes(A, -1, -2))
    if not vectors:
        return np.linalg.eigvalsh(S), None
    vals, vecs = np.linalg.eigh(S)
    return vals, _fix_signs(vecs)


# ---------------------------------------------------------------------------
# finite differences


def fd_gradient(f: Callable, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function at points ``x`` (shape ``(M, n)``)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    out = np.empty_like(x)
    for d in range(n):
        e = np.zeros(n)
        e[d] = h
        out[:, d] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return out


def fd_jacobian(F: Callable, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference Jacobian ``J[m, i, j] = dF_i/dx_j`` of a vector field."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    cols = []
    for d in range(n):
        e = np.zeros(n)
        e[d] = h
        cols.append((np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# monotone interpolation


@dataclass(frozen=True, eq=False)
class MonotoneCubic:
    """Piecewise cubic Hermite interpolant with Fritsch-Carlson limited slopes.

    Nondecreasing data give a nondecreasing interpolant with nonnegative
    derivative; outside the knot range it is extended linearly.
    """

    xs: np.ndarray
    ys: np.ndarray
    slopes: np.ndarray = field(repr=False)

    def _locate(self, x):
        k = np.searchsorted(self.xs, x, side="right") - 1
        return np.clip(k, 0, len(self.xs) - 2)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xs, ys, m = self.xs, self.ys, self.slopes
        k = self._locate(x)
        h = xs[k + 1] - xs[k]
        t = (x - xs[k]) / h
        t2, t3 = t * t, t * t * t
        val = ((2 * t3 - 3 * t2 + 1) * ys[k] + (t3 - 2 * t2 + t) * h * m[k]
               + (-2 * t3 + 3 * t2) * ys[k + 1] + (t3 - t2) * h * m[k + 1])
        lo, hi = x < xs[0], x > xs[-1]
        val = np.where(lo, ys[0] + m[0] * (x - xs[0]), val)
        val = np.where(hi, ys[-1] + m[-1] * (x - xs[-1]), val)
        return val

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        xs, ys, m = self.xs, self.ys, self.slopes
        k = self._locate(x)
        h = xs[k + 1] - xs[k]
        t = (x - xs[k]) / h
        t2 = t * t
        d = ((6 * t2 - 6 * t) * (ys[k] - ys[k + 1]) / h
             + (3 * t2 - 4 * t + 1) * m[k] + (3 * t2 - 2 * t) * m[k + 1])
        d = np.where(x < xs[0], m[0], d)
        d = np.where(x > xs[-1], m[-1], d)
        return d

    def inverse(self, y, iterations: int = 80):
        """Smallest ``x`` with ``self(x) == y`` (bisection inside the bracketing cell)."""
        y = np.asarray(y, dtype=float)
        xs, ys, m = self.xs, self.ys, self.slopes
        k = np.clip(np.searchsorted(ys, y, side="left") - 1, 0, len(xs) - 2)
        a, b = xs[k].copy(), xs[k + 1].copy()
        a, b = np.broadcast_to(a, y.shape).copy(), np.broadcast_to(b, y.shape).copy()
        for _ in range(iterations):
            mid = 0.5 * (a + b)
            below = self(mid) < y
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
        out = 0.5 * (a + b)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(y < ys[0], xs[0] + (y - ys[0]) / m[0], out)
            out = np.where(y > ys[-1], xs[-1] + (y - ys[-1]) / m[-1], out)
        return out


def monotone_interp(xs, ys, slopes=None, slack: float = 1e-12) -> MonotoneCubic:
    """Build a :class:`MonotoneCubic` through ``(xs, ys)``.

    ``slopes`` may carry known derivatives at the knots; they are limited in
    the same way as the default three-point estimates.

    Raises
    ------
    MonotonicityError
        If ``ys`` decreases by more than ``slack`` anywhere.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 2:
        raise ValueError("xs and ys must be 1D arrays of equal length >= 2")
    h = np.diff(xs)
    if np.any(h <= 0):
        raise ValueError("xs must be strictly increasing")
    dy = np.diff(ys)
    if np.any(dy < -slack):
        raise MonotonicityError(f"ys decreases by {-dy.min():.3g}")
    ys = np.maximum.accumulate(ys)
    delta = np.diff(ys) / h
    if slopes is None:
        m = np.empty_like(ys)
        m[1:-1] = 0.5 * (delta[:-1] + delta[1:])
        m[0], m[-1] = delta[0], delta[-1]
    else:
        m = np.array(slopes, dtype=float)
    m = np.maximum(m, 0.0)
    for k in range(len(delta)):
        if delta[k] == 0.0:
            m[k] = m[k + 1] = 0.0
            continue
        a, b = m[k] / delta[k], m[k + 1] / delta[k]
        r = a * a + b * b
        if r > 9.0:
            tau = 3.0 / np.sqrt(r)
            m[k], m[k + 1] = tau * a * delta[k], tau * b * delta[k]
    return MonotoneCubic(xs, ys, m)


# ---------------------------------------------------------------------------
# frames


def orthonormal_frame(directions, min_ratio: float = 1e-4) -> np.ndarray:
    """Orthogonal ``R`` whose first rows are the polar factor of ``directions`` (k x n).

    ``R @ d_i`` is then close to ``e_i``. The complement rows get the sign
    convention of :func:`sym_eigen` and, when there is room, ``det R = +1``.

    Raises
    ------
    DegenerateDirectionsError
        If the singular values of ``directions`` spread by more than ``1/min_ratio``.
    """
    V = np.atleast_2d(np.asarray(directions, dtype=float))
    k, n = V.shape
    if k > n or k == 0:
        raise ValueError(f"need 1 <= k <= n directions, got {k} in dimension {n}")
    U, s, Wt = np.linalg.svd(V, full_matrices=False)
    if s[-1] <= min_ratio * s[0]:
        raise DegenerateDirectionsError(f"direction matrix is rank deficient (singular values {s})")
    Q = U @ Wt
    if k == n:
        return Q
    N = _fix_signs(null_space(Q))
    R = np.vstack([Q, N.T])
    if np.linalg.det(R) < 0:
        R[-1] *= -1
    return R
