"""W1 distances: exact 1D formula, exact discrete LP with a certificate, and the map bound."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq
from scipy.spatial.distance import cdist
from scipy.special import ndtr

from .errors import DimensionError, ResourceLimitError, SolverError
from .measures import R_TRUNC, GaussianMeasure, GridDensity, LogConcaveMeasure, cdf_1d
from .quadrature import QuadratureRule

MAX_ATOMS = 4096


def _ot():
    # keep POT from importing every array backend it can find
    for name in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{name}", "1")
    import ot

    return ot


@dataclass(frozen=True, eq=False)
class DiscreteCloud:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        if len(pts) != len(w):
            raise ValueError("points and weights differ in length")
        if len(w) > MAX_ATOMS:
            raise ResourceLimitError(f"{len(w)} atoms exceed the limit {MAX_ATOMS}")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum():.15g}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, points, weights) -> "DiscreteCloud":
        w = np.asarray(weights, dtype=float)
        return cls(points, w / w.sum())

    @classmethod
    def uniform(cls, points) -> "DiscreteCloud":
        pts = np.asarray(points, dtype=float)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)

    def project(self, coords) -> "DiscreteCloud":
        return DiscreteCloud(self.points[:, list(coords)], self.weights)

    def product(self, other: "DiscreteCloud") -> "DiscreteCloud":
        pts = np.concatenate([np.repeat(self.points, len(other), axis=0),
                              np.tile(other.points, (len(self), 1))], axis=1)
        return DiscreteCloud.normalized(pts, np.outer(self.weights, other.weights).ravel())


@dataclass(frozen=True, eq=False)
class CouplingPlan:
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    shape: tuple
    row_residual: float
    col_residual: float
    dual_residual: float = 0.0
    duality_gap: float = 0.0

    @property
    def support_size(self) -> int:
        return len(self.values)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.values
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "sigma"])
            for i, j, v in zip(self.rows, self.cols, self.values):
                w.writerow([int(i), int(j), repr(float(v))])


def w1_discrete(a: DiscreteCloud, b: DiscreteCloud, max_iter: int = 10_000_000,
                dual_tol: float = 1e-9) -> tuple:
    """Exact W1 between two clouds (Euclidean cost) by network simplex.

    The returned plan carries its marginal residuals, the dual feasibility
    residual ``max (u_i + v_j - C_ij)_+`` and the duality gap.

    Raises
    ------
    SolverError
        If the solver stops before optimality or the duals fail the
        certificate; ``bounds`` holds the (dual, primal) value pair.
    """
    if a.dimension != b.dimension:
        raise DimensionError("clouds differ in dimension")
    ot = _ot()
    C = cdist(a.points, b.points)
    wa = a.weights / a.weights.sum()
    wb = b.weights / b.weights.sum()
    G, log = ot.emd(wa, wb, C, numItermax=max_iter, log=True)
    primal = float(np.sum(G * C))
    u, v = np.asarray(log["u"]), np.asarray(log["v"])
    dual = float(wa @ u + wb @ v)
    if log.get("result_code", 1) != 1:
        raise SolverError(f"network simplex stopped: {log.get('warning')}", bounds=(dual, primal))
    slack = u[:, None] + v[None, :] - C
    active = (wa > 0)[:, None] & (wb > 0)[None, :]
    dual_res = float(max(0.0, np.max(np.where(active, slack, -np.inf))))
    gap = abs(primal - dual)
    if dual_res > dual_tol * max(1.0, float(C.max())) or gap > 1e-9 * max(1.0, primal):
        raise SolverError(f"optimality certificate failed (dual residual {dual_res:.3g}, gap {gap:.3g})",
                          bounds=(dual, primal))
    rows, cols = np.nonzero(G > 0)
    plan = CouplingPlan(rows, cols, G[rows, cols], G.shape,
                        float(np.abs(G.sum(axis=1) - wa).sum()), float(np.abs(G.sum(axis=0) - wb).sum()),
                        dual_res, gap)
    return primal, plan


# ---------------------------------------------------------------------------
# 1D


def _cdf_and_window(m, radius):
    if isinstance(m, GridDensity):
        if m.dimension != 1:
            raise DimensionError("w1_exact_1d needs one-dimensional inputs")
        return (lambda x: cdf_1d(m, x)), (m.axes[0][0], m.axes[0][-1])
    if m.dimension != 1:
        raise DimensionError("w1_exact_1d needs one-dimensional inputs")
    c = float(m.barycenter[0]) if isinstance(m, GaussianMeasure) else float(m.center[0])
    return (lambda x: cdf_1d(m, x)), (c - radius, c + radius)


def w1_exact_1d(a, b, radius: float = R_TRUNC, cells: int = 1024, order: int = 8) -> float:
    """``int |F_a(x) - F_b(x)| dx`` over the union of both truncation windows.

    Cells where ``F_a - F_b`` changes sign are split at the root so that
    Gauss-Legendre sees a smooth integrand on every piece.
    """
    Fa, wa = _cdf_and_window(a, radius)
    Fb, wb = _cdf_and_window(b, radius)
    lo, hi = min(wa[0], wb[0]), max(wa[1], wb[1])
    edges = np.linspace(lo, hi, cells + 1)
    diff = Fa(edges) - Fb(edges)
    pieces = []
    for k in range(cells):
        x0, x1 = edges[k], edges[k + 1]
        if diff[k] * diff[k + 1] < 0:
            r = brentq(lambda x: float(Fa(x) - Fb(x)), x0, x1, xtol=1e-15)
            pieces += [(x0, r), (r, x1)]
        else:
            pieces.append((x0, x1))
    pieces = np.array(pieces)
    t, w = leggauss(order)
    half = 0.5 * (pieces[:, 1] - pieces[:, 0])
    mid = 0.5 * (pieces[:, 1] + pieces[:, 0])
    x = mid[:, None] + half[:, None] * t
    vals = np.abs(Fa(x) - Fb(x))
    return float(np.sum(half[:, None] * w * vals))


def quantile_cloud(measure, atoms: int = 512) -> DiscreteCloud:
    """Equal-weight atoms at the mid-quantiles ``F^{-1}((i + 1/2) / N)``."""
    u = (np.arange(atoms) + 0.5) / atoms
    if isinstance(measure, GaussianMeasure):
        x = measure.quantile(u)
    else:
        x = measure.quantile_pair(u, 1.0 - u)
    return DiscreteCloud.uniform(np.asarray(x)[:, None])


def rule_cloud(measure: LogConcaveMeasure) -> DiscreteCloud:
    pts, w = measure.rule()
    keep = w > 1e-300
    return DiscreteCloud.normalized(pts[keep], w[keep])


# ---------------------------------------------------------------------------
# map bound


def _map_bound_1d(tmap, radius: float, cells: int = 1024, order: int = 8) -> float:
    edges = np.linspace(-radius, radius, cells + 1)
    gap = tmap(edges) - edges
    pieces = []
    for k in range(cells):
        x0, x1 = edges[k], edges[k + 1]
        if gap[k] * gap[k + 1] < 0:
            r = brentq(lambda x: float(tmap(np.array(x)) - x), x0, x1, xtol=1e-15)
            pieces += [(x0, r), (r, x1)]
        else:
            pieces.append((x0, x1))
    pieces = np.array(pieces)
    t, w = leggauss(order)
    half = 0.5 * (pieces[:, 1] - pieces[:, 0])
    mid = 0.5 * (pieces[:, 1] + pieces[:, 0])
    x = mid[:, None] + half[:, None] * t
    dens = np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
    inner = float(np.sum(half[:, None] * w * dens * np.abs(tmap(x) - x)))
    # beyond the window T is affine; bound |T(x) - x| there by Gaussian tail moments
    m0 = ndtr(-radius)
    m1 = np.exp(-0.5 * radius**2) / np.sqrt(2 * np.pi)
    tail = 0.0
    for x0 in (-radius, radius):
        t0, s = float(tmap(np.array(x0))), float(tmap.derivative(np.array(x0)))
        tail += abs(t0 - x0) * m0 + abs(s - 1) * m1
    return inner + tail


def w1_from_map(tmap, quad: QuadratureRule | None = None) -> float:
    """``int |x - T(x)| dgamma_n``, an upper bound for ``W1(T_# gamma_n, gamma_n)``.

    In 1D without an explicit rule the integrand's kinks (fixed points of T)
    are located and the pieces integrated by Gauss-Legendre.
    """
    n = tmap.dimension
    if quad is None:
        if n == 1:
            return _map_bound_1d(tmap, getattr(tmap, "radius", R_TRUNC))
        quad = tmap.source_rule()
    x = quad.points
    Tx = np.asarray(tmap(x[:, 0] if n == 1 else x)).reshape(x.shape)
    return float(quad.weights @ np.linalg.norm(x - Tx, axis=1))
