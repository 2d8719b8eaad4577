"""1-log-concave probability measures ``mu = exp(-V) dx / Z`` with ``D^2 V >= Id``.

Potentials are supplied unnormalised; :func:`normalize` computes ``log Z``.
All evaluations are vectorised over leading axes: ``x`` has shape ``(..., n)``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.special import log_ndtr, ndtr, ndtri

from .errors import (
    DegenerateDensityError,
    DimensionError,
    HypothesisWarning,
    InvalidMatrixError,
    InvalidPotentialError,
    NumericalDomainError,
    UnderflowError,
)
from .quadrature import QuadratureRule, composite_legendre, gauss_hermite, sym_eigen_stack

R_TRUNC = 8.0
LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
FAMILIES = ("gaussian-scaled", "gaussian-shifted", "quartic", "product",
            "rotated-product", "ridge-perturbation", "custom")


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise DimensionError(f"expected points of dimension {n}, got shape {x.shape}")
    return x


class Potential:
    """A convex potential ``V`` on R^n with gradient and Hessian oracles."""

    def __init__(self, dimension: int, value: Callable, grad: Callable, hess: Callable,
                 family: str = "custom", params: dict | None = None):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        self.dimension = int(dimension)
        self._value, self._grad, self._hess = value, grad, hess
        self.family = family
        self.params = dict(params or {})

    def __repr__(self):
        return f"Potential({self.family}, n={self.dimension}, {self.params})"

    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        return self._value(_as_points(x, self.dimension))

    def grad(self, x):
        return self._grad(_as_points(x, self.dimension))

    def hess(self, x):
        return self._hess(_as_points(x, self.dimension))

    def rotated(self, rotation) -> "Potential":
        """Potential of ``R_# mu``, i.e. ``x -> V(R^T x)``."""
        R = np.asarray(rotation, dtype=float)
        base = self

        def value(x):
            return base._value(x @ R)

        def grad(x):
            return base._grad(x @ R) @ R.T

        def hess(x):
            return R @ base._hess(x @ R) @ R.T

        family = "rotated-product" if self.family in ("product", "rotated-product") else self.family
        params = dict(self.params)
        params["rotation"] = (R @ np.asarray(params["rotation"])).tolist() if "rotation" in params else R.tolist()
        return Potential(self.dimension, value, grad, hess, family, params)


# ---------------------------------------------------------------------------
# built-in families


def gaussian_scaled(sigma=1.0, dimension: int = 1) -> Potential:
    """``V = sum_i sigma_i^2 x_i^2 / 2``: the centred Gaussian with variance ``1/sigma^2``."""
    s2 = np.broadcast_to(np.asarray(sigma, dtype=float) ** 2, (dimension,)).copy()
    return Potential(
        dimension,
        lambda x: 0.5 * np.sum(s2 * x * x, axis=-1),
        lambda x: s2 * x,
        lambda x: np.broadcast_to(np.diag(s2), x.shape[:-1] + (dimension, dimension)).copy(),
        "gaussian-scaled",
        {"sigma": np.sqrt(s2).tolist() if dimension > 1 else float(np.sqrt(s2[0]))},
    )


def gaussian_shifted(p) -> Potential:
    """``V = |x - p|^2 / 2``, the law ``gamma_{p,n}``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    n = len(p)
    eye = np.eye(n)
    return Potential(
        n,
        lambda x: 0.5 * np.sum((x - p) ** 2, axis=-1),
        lambda x: x - p,
        lambda x: np.broadcast_to(eye, x.shape[:-1] + (n, n)).copy(),
        "gaussian-shifted",
        {"p": p.tolist()},
    )


def quartic(t: float = 1.0, linear: float = 0.0, dimension: int = 1) -> Potential:
    """``V = |x|^2/2 + t |x|^4/4 + linear * sum_i x_i`` (radial quartic)."""
    if t < 0:
        raise InvalidPotentialError("quartic coefficient must be nonnegative")
    n = dimension
    eye = np.eye(n)

    def value(x):
        r2 = np.sum(x * x, axis=-1)
        return 0.5 * r2 + 0.25 * t * r2 * r2 + linear * np.sum(x, axis=-1)

    def grad(x):
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return x * (1.0 + t * r2) + linear

    def hess(x):
        r2 = np.sum(x * x, axis=-1)[..., None, None]
        return eye * (1.0 + t * r2) + 2.0 * t * x[..., :, None] * x[..., None, :]

    return Potential(n, value, grad, hess, "quartic", {"t": float(t), "linear": float(linear)})


def product(*factors: Potential) -> Potential:
    """Block-separable potential ``V(x) = sum_b V_b(x_b)``."""
    if len(factors) == 1 and not isinstance(factors[0], Potential):
        factors = tuple(factors[0])
    dims = [f.dimension for f in factors]
    cuts = np.cumsum([0] + dims)
    n = int(cuts[-1])

    def value(x):
        return sum(f._value(x[..., a:b]) for f, a, b in zip(factors, cuts[:-1], cuts[1:]))

    def grad(x):
        return np.concatenate([f._grad(x[..., a:b]) for f, a, b in zip(factors, cuts[:-1], cuts[1:])], axis=-1)

    def hess(x):
        H = np.zeros(x.shape[:-1] + (n, n))
        for f, a, b in zip(factors, cuts[:-1], cuts[1:]):
            H[..., a:b, a:b] = f._hess(x[..., a:b])
        return H

    params = {"factors": [{"family": f.family, "dimension": f.dimension, "params": f.params} for f in factors]}
    return Potential(n, value, grad, hess, "product", params)


def rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotated_product(factors: Sequence[Potential], rotation) -> Potential:
    R = np.asarray(rotation, dtype=float)
    if R.ndim == 0:
        R = rotation_2d(float(R))
    return product(*factors).rotated(R)


def ridge(t: float, direction=None, profile: str = "quartic", dimension: int = 2) -> Potential:
    """``V = |x|^2/2 + t g(<a, x>)`` with ``g(s) = s^2/2`` or ``s^4/4``.

    The default direction is the last coordinate axis.
    """
    if t < 0:
        raise InvalidPotentialError("ridge coefficient must be nonnegative")
    a = np.zeros(dimension)
    a[-1] = 1.0
    if direction is not None:
        a = np.asarray(direction, dtype=float)
        a = a / np.linalg.norm(a)
        dimension = len(a)
    if profile == "quartic":
        g, dg, d2g = (lambda s: s**4 / 4), (lambda s: s**3), (lambda s: 3 * s**2)
    elif profile == "quadratic":
        g, dg, d2g = (lambda s: s**2 / 2), (lambda s: s), (lambda s: np.ones_like(s))
    else:
        raise ValueError(f"unknown ridge profile {profile!r}")
    eye = np.eye(dimension)
    aa = np.outer(a, a)

    def value(x):
        return 0.5 * np.sum(x * x, axis=-1) + t * g(x @ a)

    def grad(x):
        return x + t * dg(x @ a)[..., None] * a

    def hess(x):
        return eye + t * d2g(x @ a)[..., None, None] * aa

    return Potential(dimension, value, grad, hess, "ridge-perturbation",
                     {"t": float(t), "direction": a.tolist(), "profile": profile})


def potential_from_spec(spec: dict) -> Potential:
    """Build a potential from ``{"family": ..., "dimension": ..., "params": {...}}``."""
    family = spec["family"]
    dim = int(spec.get("dimension", 1))
    p = dict(spec.get("params", {}))
    if family == "gaussian-scaled":
        return gaussian_scaled(p.get("sigma", 1.0), dim)
    if family == "gaussian-shifted":
        pv = p.get("p", [0.0] * dim)
        return gaussian_shifted(np.broadcast_to(np.asarray(pv, dtype=float), (dim,)))
    if family == "quartic":
        return quartic(p.get("t", 1.0), p.get("linear", 0.0), dim)
    if family in ("product", "rotated-product"):
        factors = [potential_from_spec(f) for f in p["factors"]]
        if family == "product":
            return product(*factors)
        rot = p.get("rotation", p.get("angle", 0.0))
        return rotated_product(factors, rot)
    if family == "ridge-perturbation":
        return ridge(p.get("t", 0.0), p.get("direction"), p.get("profile", "quartic"), dim)
    raise ValueError(f"family {family!r} cannot be built from a spec")


# ---------------------------------------------------------------------------
# normalisation and audits


def _mode(potential: Potential, start=None, iters: int = 100) -> np.ndarray:
    x = np.zeros(potential.dimension) if start is None else np.array(start, dtype=float)
    v = potential.value(x)
    for _ in range(iters):
        g = potential.grad(x)
        if np.linalg.norm(g) < 1e-13:
            break
        step = np.linalg.solve(potential.hess(x), g)
        lam = 1.0
        while lam > 1e-8:
            xn = x - lam * step
            vn = potential.value(xn)
            if vn <= v + 1e-14 * abs(v):
                break
            lam *= 0.5
        x, v = xn, vn
    return x


def _sqrt_inv(H):
    w, Q = np.linalg.eigh(0.5 * (H + H.T))
    return (Q / np.sqrt(np.maximum(w, 1e-12))) @ Q.T


class _ScaledRule:
    """Gauss-Hermite rule mapped through ``x = c + S y`` to integrate against ``exp(-V)``.

    The scale is picked among a few shrink factors of the Laplace scale by an
    embedded comparison with the half-order rule.
    """

    SHRINK = (1.0, 0.85, 0.7, 0.6, 0.5)

    def __init__(self, potential: Potential, center, order: int, rule: QuadratureRule | None = None):
        n = potential.dimension
        self.center = np.asarray(center, dtype=float)
        base = _sqrt_inv(potential.hess(self.center))
        rule = rule or gauss_hermite(order, n)
        half = gauss_hermite(max(2, rule.order[0] // 2), n)
        best = None
        for s in self.SHRINK:
            S = s * base
            full = self._log_terms(potential, S, rule)
            lo = self._log_terms(potential, S, half)
            err = abs(self._lse(*full) - self._lse(*lo))
            if best is None or err < best[0]:
                best = (err, S, full)
        self.error_estimate, self.S, (self.points, self.log_w) = best
        self.log_mass = self._lse(self.points, self.log_w)

    def _log_terms(self, potential, S, rule):
        y = rule.points
        x = self.center + y @ S.T
        V = potential.value(x)
        if not np.all(np.isfinite(V)):
            raise NumericalDomainError("potential is not finite at a quadrature node")
        _, logdet = np.linalg.slogdet(S)
        with np.errstate(divide="ignore"):
            log_w = np.log(rule.weights) - V + 0.5 * np.sum(y * y, axis=-1)
        log_w += logdet + potential.dimension * LOG_SQRT_2PI
        return x, log_w

    @staticmethod
    def _lse(points, log_w):
        m = np.max(log_w)
        return m + np.log(np.sum(np.exp(log_w - m)))

    def normalized_weights(self):
        return np.exp(self.log_w - self.log_mass)


def normalize(potential: Potential, quad: QuadratureRule | None = None, order: int | None = None,
              center=None) -> float:
    """``log int exp(-V(x)) dx`` by reweighted Gauss-Hermite quadrature.

    Raises
    ------
    NumericalDomainError
        If ``V`` is not finite at a node.
    UnderflowError
        If the total mass is below 1e-300.
    """
    n = potential.dimension
    order = order or (quad.order[0] if quad is not None else _default_gh_order(n))
    c = _mode(potential) if center is None else center
    rule = _ScaledRule(potential, c, order, quad)
    if rule.log_mass < np.log(1e-300):
        raise UnderflowError(f"total mass exp({rule.log_mass:.4g}) underflows")
    return float(rule.log_mass)


def _default_gh_order(n: int) -> int:
    return {1: 64, 2: 48, 3: 20, 4: 12}.get(n, 8)


def audit_nodes(center, dimension: int, radius: float = R_TRUNC) -> np.ndarray:
    m = {1: 65, 2: 21, 3: 9, 4: 7}.get(dimension, 5)
    axis = np.linspace(-radius, radius, m)
    grids = np.meshgrid(*([axis] * dimension), indexing="ij")
    pts = np.asarray(center) + np.stack([g.ravel() for g in grids], axis=-1)
    # the origin is where the built-in families attain their convexity minimum
    return np.vstack([pts, np.zeros((1, dimension))])


def check_one_log_concavity(measure, nodes=None, warn: bool = True) -> float:
    """``min_x lambda_1(D^2 V(x)) - 1`` over ``nodes``; negative means ``D^2 V >= Id`` fails.

    A failure is reported through :class:`HypothesisWarning`, not raised.
    """
    potential = measure.potential if hasattr(measure, "potential") else measure
    if nodes is None:
        center = getattr(measure, "center", np.zeros(potential.dimension))
        nodes = audit_nodes(center, potential.dimension)
    nodes = _as_points(nodes, potential.dimension).reshape(-1, potential.dimension)
    if len(nodes) == 0:
        raise ValueError("no audit nodes")
    H = potential.hess(nodes)
    try:
        vals, _ = sym_eigen_stack(H, tol=1e-12, vectors=False)
    except InvalidMatrixError as exc:
        raise InvalidPotentialError(f"Hessian of {potential!r} is not symmetric") from exc
    margin = float(np.min(vals[:, 0]) - 1.0)
    if warn and margin < -1e-9:
        warnings.warn(f"D^2 V >= Id fails (margin {margin:.3g}) for {potential!r}", HypothesisWarning,
                      stacklevel=2)
    return margin


# ---------------------------------------------------------------------------
# measures


class LogConcaveMeasure:
    """``mu = exp(-V - log_z) dx`` with cached normalisation and convexity audit."""

    def __init__(self, potential: Potential, radius: float = R_TRUNC, order: int | None = None,
                 audit: bool = True):
        self.potential = potential
        self.dimension = potential.dimension
        self.radius = float(radius)
        self.center = _mode(potential)
        self._rule = _ScaledRule(potential, self.center, order or _default_gh_order(self.dimension))
        if self._rule.log_mass < np.log(1e-300):
            raise UnderflowError("total mass underflows")
        self.log_z = float(self._rule.log_mass)
        self.convexity_margin = check_one_log_concavity(self) if audit else float("nan")

    def __repr__(self):
        return f"LogConcaveMeasure({self.potential!r})"

    @classmethod
    def from_spec(cls, spec: dict, **kw) -> "LogConcaveMeasure":
        return cls(potential_from_spec(spec), **kw)

    @property
    def family(self) -> str:
        return self.potential.family

    def log_density(self, x):
        return -self.potential.value(x) - self.log_z

    def density(self, x):
        return np.exp(self.log_density(x))

    def rule(self):
        """Points and normalised weights of the reweighted rule for ``int f dmu``."""
        return self._rule.points, self._rule.normalized_weights()

    def expect(self, f):
        pts, w = self.rule()
        return np.tensordot(w, np.asarray(f(pts)), axes=(0, 0))

    def rotated(self, rotation) -> "LogConcaveMeasure":
        return LogConcaveMeasure(self.potential.rotated(rotation), self.radius)

    def axes(self, nodes: int, radius: float | None = None, center=None):
        r = self.radius if radius is None else radius
        c = self.center if center is None else np.asarray(center)
        return tuple(ci + np.linspace(-r, r, nodes) for ci in np.broadcast_to(c, (self.dimension,)))

    def grid(self, nodes: int | None = None, radius: float | None = None, center=None) -> "GridDensity":
        """Tabulate the density on a tensor grid centred at ``center`` (default: the mode)."""
        nodes = nodes or default_grid_nodes(self.dimension)
        axes = self.axes(nodes, radius, center)
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        logd = self.log_density(mesh)
        return GridDensity(axes, np.exp(logd - np.max(logd))).normalized()

    @cached_property
    def _line(self) -> "_Line1D":
        if self.dimension != 1:
            raise DimensionError("CDF machinery is one-dimensional")
        return _Line1D(self)

    def cdf(self, x):
        return cdf_1d(self, x)

    def sf(self, x):
        if self.family in ("gaussian-scaled", "gaussian-shifted"):
            p, s = _gaussian_params_1d(self.potential)
            return ndtr(-(np.asarray(x, dtype=float) - p) * s)
        return self._line.sf(np.asarray(x, dtype=float))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self.quantile_pair(u, 1.0 - u)

    def quantile_pair(self, u, s):
        """Quantile from the lower tail ``u`` and upper tail ``s = 1 - u``.

        Whichever tail is smaller is used, so both tails keep full relative precision.
        """
        u = np.asarray(u, dtype=float)
        s = np.asarray(s, dtype=float)
        if self.family in ("gaussian-scaled", "gaussian-shifted"):
            p, sig = _gaussian_params_1d(self.potential)
            return p + np.where(u <= 0.5, ndtri(u), -ndtri(s)) / sig
        return self._line.solve(u, s)

    def window_log_density(self, y):
        """Log-density normalised on the truncation window (1D), consistent with :meth:`cdf`."""
        if self.family in ("gaussian-scaled", "gaussian-shifted"):
            return self.log_density(y)
        return -self.potential.value(np.asarray(y, dtype=float)) - self._line.log_zw


def default_grid_nodes(dimension: int) -> int:
    return 257 if dimension <= 2 else 65


def _gaussian_params_1d(potential):
    if potential.family == "gaussian-scaled":
        return 0.0, float(np.atleast_1d(potential.params["sigma"])[0])
    return float(potential.params["p"][0]), 1.0


class _Line1D:
    """Composite Gauss-Legendre CDF/survival tables on ``[c - R, c + R]``."""

    CELLS = 512
    ORDER = 8

    def __init__(self, mu: LogConcaveMeasure):
        self.mu = mu
        c, R = float(mu.center[0]), mu.radius
        self.lo, self.hi = c - R, c + R
        self.v0 = float(mu.potential.value(np.array([c])))
        edges, nodes, weights = composite_legendre(self.lo, self.hi, self.CELLS, self.ORDER)
        self.edges = edges
        cell = np.sum(weights * self._rho_raw(nodes), axis=1)
        total = cell.sum()
        if not total > 0:
            raise UnderflowError("window mass underflows")
        self.log_zw = np.log(total) - self.v0
        cell = cell / total
        pos = np.flatnonzero(cell > 0)
        if np.any(cell[pos[0]:pos[-1] + 1] == 0):
            raise DegenerateDensityError("density vanishes on an interval inside the window")
        self.left = np.concatenate([[0.0], np.cumsum(cell)])
        self.right = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])
        self._gl = np.polynomial.legendre.leggauss(self.ORDER)

    def _rho_raw(self, x):
        return np.exp(-(self.mu.potential.value(x[..., None]) - self.v0))

    def rho(self, x):
        return np.exp(-self.mu.potential.value(np.asarray(x, dtype=float)[..., None]) - self.log_zw)

    def _partial(self, a, b):
        t, w = self._gl
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        pts = mid[..., None] + half[..., None] * t
        return half * np.sum(w * np.exp(-self.mu.potential.value(pts[..., None]) - self.log_zw), axis=-1)

    def _cell(self, x):
        return np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.CELLS - 1)

    def cdf(self, x):
        xc = np.clip(x, self.lo, self.hi)
        k = self._cell(xc)
        return np.clip(self.left[k] + self._partial(self.edges[k], xc), 0.0, 1.0)

    def sf(self, x):
        xc = np.clip(x, self.lo, self.hi)
        k = self._cell(xc)
        return np.clip(self.right[k + 1] + self._partial(xc, self.edges[k + 1]), 0.0, 1.0)

    def solve(self, u, s, iters: int = 60):
        """Points ``y`` with ``F(y) = u`` where ``u <= 1/2`` and ``S(y) = s`` otherwise.

        Passing both the lower and upper tail probability keeps full relative
        precision in either tail.
        """
        u = np.asarray(u, dtype=float)
        s = np.asarray(s, dtype=float)
        use_left = u <= 0.5
        # monotone initial guess from the cumulative table
        y = np.where(use_left,
                     np.interp(u, self.left, self.edges),
                     np.interp(-s, -self.right, self.edges))
        for _ in range(iters):
            rho = np.maximum(self.rho(y), 1e-300)
            resid = np.where(use_left, self.cdf(y) - u, s - self.sf(y))
            step = resid / rho
            y_new = np.clip(y - step, self.lo, self.hi)
            if np.all(np.abs(y_new - y) <= 1e-15 * (1 + np.abs(y))):
                y = y_new
                break
            y = y_new
        return y


def cdf_1d(measure, x):
    """Cumulative distribution function of a one-dimensional measure.

    Gaussian families use the closed form; other potentials use composite
    Gauss-Legendre tables on the truncation window.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(measure, GaussianMeasure):
        if measure.dimension != 1:
            raise DimensionError("cdf_1d needs a one-dimensional measure")
        return ndtr(x - measure.barycenter[0])
    if isinstance(measure, GridDensity):
        return measure.cdf(x)
    if measure.dimension != 1:
        raise DimensionError("cdf_1d needs a one-dimensional measure")
    if measure.family in ("gaussian-scaled", "gaussian-shifted"):
        p, s = _gaussian_params_1d(measure.potential)
        return ndtr((x - p) * s)
    return measure._line.cdf(x)


def barycenter(measure) -> np.ndarray:
    """``int x dmu(x)``."""
    if isinstance(measure, GaussianMeasure):
        return measure.barycenter.copy()
    if isinstance(measure, GridDensity):
        return measure.mean()
    return np.asarray(measure.expect(lambda x: x), dtype=float)


def marginal(measure, kept_coords, nodes: int | None = None, radius: float | None = None) -> "GridDensity":
    """Density of the projection of ``measure`` on ``kept_coords`` (0-based), tabulated on a grid.

    The complementary coordinates are integrated out with the trapezoid rule
    on the tensor grid of ``measure``.
    """
    if isinstance(measure, GridDensity):
        return measure.marginal(kept_coords)
    n = measure.dimension
    if n < 2:
        raise DimensionError("marginal needs dimension >= 2")
    kept = sorted(int(k) for k in np.atleast_1d(kept_coords))
    if not kept or len(kept) >= n or kept[0] < 0 or kept[-1] >= n:
        raise ValueError(f"invalid kept coordinates {kept_coords!r} for dimension {n}")
    return measure.grid(nodes, radius).marginal(kept)


@dataclass(frozen=True)
class GaussianMeasure:
    """``gamma_{p,k}``: the unit-covariance Gaussian with barycenter ``p``."""

    barycenter: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "barycenter", np.atleast_1d(np.asarray(self.barycenter, dtype=float)))

    @classmethod
    def standard(cls, dimension: int = 1) -> "GaussianMeasure":
        return cls(np.zeros(dimension))

    @property
    def dimension(self) -> int:
        return len(self.barycenter)

    def log_density(self, x):
        x = _as_points(x, self.dimension)
        return -0.5 * np.sum((x - self.barycenter) ** 2, axis=-1) - self.dimension * LOG_SQRT_2PI

    def density(self, x):
        return np.exp(self.log_density(x))

    def cdf(self, x):
        return cdf_1d(self, x)

    def sf(self, x):
        return ndtr(self.barycenter[0] - np.asarray(x, dtype=float))

    def log_cdf(self, x):
        return log_ndtr(np.asarray(x, dtype=float) - self.barycenter[0])

    def quantile(self, u):
        return self.barycenter[0] + ndtri(np.asarray(u, dtype=float))

    def as_log_concave(self) -> LogConcaveMeasure:
        return LogConcaveMeasure(gaussian_shifted(self.barycenter))


# ---------------------------------------------------------------------------
# grid densities


@dataclass(eq=False)
class GridDensity:
    """Density values on a uniform tensor grid with trapezoid mass weights."""

    axes: tuple
    density: np.ndarray

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != tuple(len(a) for a in self.axes):
            raise DimensionError("density shape does not match the axes")
        if np.any(self.density < 0) or not np.all(np.isfinite(self.density)):
            raise NumericalDomainError("density values must be finite and nonnegative")

    @property
    def dimension(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return self.density.shape

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    def _trap(self, d):
        w = np.full(len(self.axes[d]), self.spacing[d])
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @property
    def weights(self) -> np.ndarray:
        w = self.density
        for d in range(self.dimension):
            shape = [1] * self.dimension
            shape[d] = -1
            w = w * self._trap(d).reshape(shape)
        return w

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def normalized(self) -> "GridDensity":
        m = self.mass
        if not m > 1e-300:
            raise UnderflowError("grid mass underflows")
        return GridDensity(self.axes, self.density / m)

    def marginal(self, kept) -> "GridDensity":
        kept = sorted(int(k) for k in np.atleast_1d(kept))
        if self.dimension < 2:
            raise DimensionError("marginal needs dimension >= 2")
        dens = self.density
        for d in reversed(range(self.dimension)):
            if d not in kept:
                dens = np.tensordot(dens, self._trap(d), axes=([d], [0]))
        return GridDensity(tuple(self.axes[k] for k in kept), dens).normalized()

    def mean(self) -> np.ndarray:
        w = self.weights / self.mass
        return np.array([np.sum(w * np.expand_dims(a, tuple(i for i in range(self.dimension) if i != d)))
                         for d, a in enumerate(self.axes)])

    def log_density_at(self, points, floor: float = -745.0) -> np.ndarray:
        """Cubic-spline interpolation of the log-density at arbitrary points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        with np.errstate(divide="ignore"):
            logd = np.maximum(np.log(self.density), floor)
        coords = np.stack([(points[:, d] - a[0]) / (a[1] - a[0]) for d, a in enumerate(self.axes)])
        return map_coordinates(logd, coords, order=3, mode="nearest")

    def density_at(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.ones(len(points), dtype=bool)
        for d, a in enumerate(self.axes):
            inside &= (points[:, d] >= a[0]) & (points[:, d] <= a[-1])
        return np.where(inside, np.exp(self.log_density_at(points)), 0.0)

    def concavity_defect(self, rel_floor: float = 1e-150) -> float:
        """Largest axis-wise second difference of ``log rho + |x|^2/2``.

        A 1-log-concave density gives a value ``<= 0``; positive values measure
        the violation of the discrete surrogate.
        """
        with np.errstate(divide="ignore"):
            logd = np.log(self.density)
        mesh = np.meshgrid(*self.axes, indexing="ij")
        f = logd + 0.5 * sum(m * m for m in mesh)
        ok = self.density > rel_floor * self.density.max()
        worst = -np.inf
        for d in range(self.dimension):
            fm = np.moveaxis(f, d, 0)
            okm = np.moveaxis(ok, d, 0)
            with np.errstate(invalid="ignore"):
                sec = fm[2:] - 2 * fm[1:-1] + fm[:-2]
            valid = okm[2:] & okm[1:-1] & okm[:-2]
            if np.any(valid):
                worst = max(worst, float(np.max(sec[valid])))
        return worst

    def cdf(self, x):
        if self.dimension != 1:
            raise DimensionError("cdf needs a one-dimensional grid")
        return _grid_cdf_interp(self)(np.asarray(x, dtype=float))

    def to_csv(self, path) -> None:
        header = [f"x{d + 1}" for d in range(self.dimension)] + ["density"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for p, v in zip(self.points, self.density.ravel()):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "GridDensity":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        coords, dens = data[:, :-1], data[:, -1]
        axes = tuple(np.unique(coords[:, d]) for d in range(coords.shape[1]))
        return cls(axes, dens.reshape(tuple(len(a) for a in axes)))


def _grid_cdf_interp(grid: GridDensity):
    from scipy.interpolate import PchipInterpolator

    x = grid.axes[0]
    dens = PchipInterpolator(x, grid.density / grid.mass, extrapolate=False)
    anti = dens.antiderivative()
    total = float(anti(x[-1]))

    def F(t):
        t = np.clip(t, x[0], x[-1])
        return np.clip(anti(t) / total, 0.0, 1.0)

    return F
