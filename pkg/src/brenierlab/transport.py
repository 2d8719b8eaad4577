"""Brenier maps ``T = grad(phi)`` pushing the standard Gaussian onto a 1-log-concave measure.

In 1D the map is the monotone rearrangement ``F_mu^{-1} o Phi``, evaluated
exactly. In 2D-4D it is the barycentric projection of an entropic plan between
tensor grids, computed by a log-domain Sinkhorn iteration that exploits the
separability of the quadratic cost.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.ndimage import map_coordinates
from scipy.special import ndtr

from .errors import (
    ContractionViolationError,
    ConvergenceError,
    DimensionError,
    NumericalDomainError,
)
from .measures import (
    LOG_SQRT_2PI,
    R_TRUNC,
    GaussianMeasure,
    GridDensity,
    LogConcaveMeasure,
    barycenter,
)
from .quadrature import QuadratureRule, gauss_hermite, gaussian_trapezoid, monotone_interp, sym_eigen_stack

EXACT_TOL = 1e-8
ENTROPIC_TOL = 5e-2

# transport grids: nodes per axis, half-width and default regularisation
GRID_DEFAULTS = {2: (161, 5.0, 5e-3), 3: (49, 5.0, 4e-2), 4: (21, 4.5, 0.15)}


class TransportMap:
    dimension: int
    provenance: str
    reg: float | None = None

    @property
    def tolerance(self) -> float:
        return EXACT_TOL if self.provenance.startswith("exact") else ENTROPIC_TOL

    def default_rule(self) -> QuadratureRule:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        raise NotImplementedError


class AffineMap(TransportMap):
    """``T(x) = A x + b`` with symmetric ``A``; exact Brenier map between Gaussians."""

    def __init__(self, A, b=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.dimension = self.A.shape[0]
        self.b = np.zeros(self.dimension) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
        self.provenance = "exact-affine"

    @classmethod
    def identity(cls, dimension: int) -> "AffineMap":
        return cls(np.eye(dimension))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            return self.A[0, 0] * x + self.b[0]
        return x @ self.A.T + self.b

    def derivative(self, x):
        return np.full(np.shape(x), self.A[0, 0])

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        m = len(x.reshape(-1, self.dimension))
        return np.broadcast_to(0.5 * (self.A + self.A.T), (m, self.dimension, self.dimension)).copy()

    def default_rule(self) -> QuadratureRule:
        return gauss_hermite({1: 64, 2: 32, 3: 12, 4: 8}[self.dimension], self.dimension)

    source_rule = default_rule


# ---------------------------------------------------------------------------
# 1D


class MonotoneMap1D(TransportMap):
    """Nondecreasing map on the line.

    With ``measure`` given, evaluation is exact: ``T(x)`` solves
    ``F_mu(T) = Phi(x)`` and ``T'`` comes from ``phi_gamma(x) = rho_mu(T(x)) T'(x)``.
    The monotone cubic through the knots is kept as the tabulated representation
    and is what gets evaluated when no measure is attached.
    """

    def __init__(self, xs, ys, slopes, measure: LogConcaveMeasure | None = None,
                 provenance: str = "exact-1d"):
        self.dimension = 1
        self.provenance = provenance
        self.xs = np.asarray(xs, dtype=float)
        self.interpolant = monotone_interp(self.xs, ys, slopes)
        self.measure = measure
        self.radius = float(max(abs(self.xs[0]), abs(self.xs[-1])))

    @classmethod
    def from_samples(cls, xs, ys, slopes=None, provenance: str = "tabulated") -> "MonotoneMap1D":
        return cls(xs, ys, slopes, None, provenance)

    def _exact(self, x):
        mu = self.measure
        xc = np.clip(x, -self.radius, self.radius)
        y = mu.quantile_pair(ndtr(xc), ndtr(-xc))
        logd = -0.5 * xc * xc - LOG_SQRT_2PI - mu.window_log_density(y)
        return y, np.exp(logd)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.measure is None:
            return self.interpolant(x)
        y, d = self._exact(x)
        return y + d * (x - np.clip(x, -self.radius, self.radius))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.measure is None:
            return self.interpolant.derivative(x)
        return self._exact(x)[1]

    def hessian(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return self.derivative(x)[:, None, None]

    def default_rule(self) -> QuadratureRule:
        return gauss_hermite(64)

    source_rule = default_rule

    def to_csv(self, path) -> None:
        _write_map_csv(path, self.xs[:, None], self.interpolant.ys[:, None],
                       self.interpolant.slopes[:, None, None])


def brenier_1d(mu, knots: int = 1025, radius: float = R_TRUNC) -> MonotoneMap1D:
    """Exact monotone transport from ``gamma_1`` to a one-dimensional ``mu``.

    Raises
    ------
    DegenerateDensityError
        If the density of ``mu`` vanishes on an interval inside its window.
    """
    if isinstance(mu, GaussianMeasure):
        mu = mu.as_log_concave()
    if mu.dimension != 1:
        raise DimensionError("brenier_1d needs a one-dimensional measure")
    if mu.family not in ("gaussian-scaled", "gaussian-shifted"):
        mu._line  # builds the CDF tables and runs the degeneracy check
    xs = np.linspace(-radius, radius, knots)
    stub = MonotoneMap1D(xs, xs, np.ones_like(xs))
    stub.measure = mu
    ys, slopes = stub._exact(xs)
    return MonotoneMap1D(xs, ys, slopes, mu)


# ---------------------------------------------------------------------------
# entropic transport on tensor grids


@njit(cache=True)
def _lse_rows(arr, logk, out):
    # out[m, i] = log sum_j exp(arr[m, j] + logk[i, j])
    M, Nj = arr.shape
    Ni = logk.shape[0]
    for m in range(M):
        for i in range(Ni):
            mx = -np.inf
            for j in range(Nj):
                v = arr[m, j] + logk[i, j]
                if v > mx:
                    mx = v
            if mx == -np.inf:
                out[m, i] = -np.inf
                continue
            s = 0.0
            for j in range(Nj):
                v = arr[m, j] + logk[i, j] - mx
                if v > -50.0:
                    s += np.exp(v)
            out[m, i] = mx + np.log(s)


def _apply_log_kernel(arr, kernels):
    """``LSE_j (arr_j + sum_d logk_d[i_d, j_d])`` computed one axis at a time."""
    for d, logk in enumerate(kernels):
        moved = np.ascontiguousarray(np.moveaxis(arr, d, -1))
        shape = moved.shape
        flat = moved.reshape(-1, shape[-1])
        out = np.empty((flat.shape[0], logk.shape[0]))
        _lse_rows(flat, logk, out)
        arr = np.moveaxis(out.reshape(shape[:-1] + (logk.shape[0],)), -1, d)
    return arr


@dataclass
class SinkhornState:
    f: np.ndarray
    g: np.ndarray
    reg: float
    iterations: int
    residual: float


def _log_weights(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def sinkhorn_grid(source: GridDensity, target: GridDensity, reg: float, tol: float = 1e-9,
                  max_iter: int = 50000, init: SinkhornState | None = None,
                  relax: float | None = None) -> SinkhornState:
    """Log-domain Sinkhorn for the cost ``|x - y|^2 / 2`` between two tensor grids.

    Over-relaxed updates with ``omega = 2 / (1 + sqrt(reg))`` are used, falling
    back to plain updates if the marginal residual grows.

    Raises
    ------
    ConvergenceError
        If the L1 marginal residual is still above ``tol`` after ``max_iter`` sweeps.
    NumericalDomainError
        If the dual potentials stop being finite.
    """
    if source.dimension != target.dimension:
        raise DimensionError("source and target grids differ in dimension")
    eps = float(reg)
    a = source.weights / source.mass
    b = target.weights / target.mass
    loga, logb = _log_weights(a), _log_weights(b)
    k_fg = [-(x[:, None] - y[None, :]) ** 2 / (2 * eps) for x, y in zip(source.axes, target.axes)]
    k_gf = [k.T.copy() for k in k_fg]
    f = np.zeros(a.shape) if init is None else init.f.copy()
    g = np.zeros(b.shape) if init is None else init.g.copy()
    omega = 2.0 / (1.0 + np.sqrt(eps)) if relax is None else relax
    best = np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        ft = -eps * _apply_log_kernel(g / eps + logb, k_fg)
        f = f + omega * (ft - f)
        gt = -eps * _apply_log_kernel(f / eps + loga, k_gf)
        with np.errstate(invalid="ignore", over="ignore"):
            row = np.sum(a * np.abs(np.expm1(np.where(a > 0, (f - ft) / eps, 0.0))))
            col = np.sum(b * np.abs(np.expm1(np.where(b > 0, (g - gt) / eps, 0.0))))
        res = row + col
        if not np.isfinite(res):
            if omega != 1.0:
                omega = 1.0
                f, g = np.where(np.isfinite(ft), ft, 0.0), np.zeros(b.shape)
                continue
            raise NumericalDomainError(f"Sinkhorn potentials became non-finite at reg={reg:g}")
        if res <= tol:
            return SinkhornState(f, g, eps, it, float(res))
        best = min(best, res)
        if omega != 1.0 and it > 20 and res > 1e3 * best:
            omega = 1.0
        g = g + omega * (gt - g)
    raise ConvergenceError(f"Sinkhorn did not reach residual {tol:g} in {max_iter} sweeps",
                           residual=float(res), iterations=max_iter)


class BarycentricMap(TransportMap):
    """Barycentric projection ``T(x_i) = sum_j pi_ij y_j / sum_j pi_ij`` on a tensor grid."""

    def __init__(self, axes, values, provenance: str, reg: float | None = None,
                 profile_radius: float = 4.5, translation=None, diagnostics: dict | None = None):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.dimension = len(self.axes)
        self.values = np.asarray(values, dtype=float)  # shape (*grid, n)
        self.provenance = provenance
        self.reg = reg
        self.profile_radius = profile_radius
        self.translation = np.zeros(self.dimension) if translation is None else np.asarray(translation)
        self.diagnostics = dict(diagnostics or {})

    @property
    def tolerance(self) -> float:
        return ENTROPIC_TOL

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    @property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def jacobian_grid(self) -> np.ndarray:
        """Symmetrised central-difference Jacobian ``D^2 phi`` at every grid node."""
        n = self.dimension
        J = np.empty(self.values.shape[:-1] + (n, n))
        for i in range(n):
            grads = np.gradient(self.values[..., i], *self.axes, edge_order=2)
            if n == 1:
                grads = [grads]
            for j in range(n):
                J[..., i, j] = grads[j]
        return J

    def hessian_grid(self) -> np.ndarray:
        if getattr(self, "_hess_grid", None) is None:
            J = self.jacobian_grid()
            self._hess_grid = 0.5 * (J + np.swapaxes(J, -1, -2))
            self.diagnostics["max_asymmetry"] = float(np.max(np.abs(J - np.swapaxes(J, -1, -2))))
        return self._hess_grid

    def _grid_coords(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([(x[:, d] - a[0]) / (a[1] - a[0]) for d, a in enumerate(self.axes)])

    def __call__(self, x):
        c = self._grid_coords(x)
        return np.stack([map_coordinates(self.values[..., d], c, order=1, mode="nearest")
                         for d in range(self.dimension)], axis=-1)

    def hessian(self, x) -> np.ndarray:
        H = self.hessian_grid()
        c = self._grid_coords(x)
        n = self.dimension
        out = np.empty((c.shape[1], n, n))
        for i in range(n):
            for j in range(i, n):
                out[:, i, j] = out[:, j, i] = map_coordinates(H[..., i, j], c, order=1, mode="nearest")
        return out

    def default_rule(self) -> QuadratureRule:
        """Gaussian-weighted trapezoid rule on the grid nodes within ``profile_radius``."""
        axes = [a[np.abs(a) <= self.profile_radius + 1e-12] for a in self.axes]
        return gaussian_trapezoid(axes)

    def source_rule(self) -> QuadratureRule:
        return gaussian_trapezoid(self.axes)

    def to_csv(self, path) -> None:
        n = self.dimension
        _write_map_csv(path, self.nodes.reshape(-1, n), self.values.reshape(-1, n),
                       self.hessian_grid().reshape(-1, n, n))


def standard_gaussian_grid(axes) -> GridDensity:
    mesh = np.meshgrid(*axes, indexing="ij")
    return GridDensity(axes, np.exp(-0.5 * sum(m * m for m in mesh))).normalized()


def _barycentric(source: GridDensity, target: GridDensity, state: SinkhornState) -> np.ndarray:
    eps = state.reg
    b = target.weights / target.mass
    G = state.g / eps + _log_weights(b)
    kernels = [-(x[:, None] - y[None, :]) ** 2 / (2 * eps) for x, y in zip(source.axes, target.axes)]
    den = _apply_log_kernel(G, kernels)
    out = np.empty(source.shape + (source.dimension,))
    for d, y in enumerate(target.axes):
        lo = y[0] - (y[1] - y[0])
        shape = [1] * target.dimension
        shape[d] = -1
        num = _apply_log_kernel(G + np.log(y - lo).reshape(shape), kernels)
        out[..., d] = lo + np.exp(num - den)
    return out


def entropic_transport(mu, reg: float | None = None, nodes: int | None = None, radius: float | None = None,
                       grids: tuple | None = None, tol: float = 1e-9, max_iter: int = 50000,
                       init: SinkhornState | None = None) -> BarycentricMap:
    """Entropic surrogate of the Brenier map from ``gamma_n`` to ``mu`` (n = 2..4).

    The source grid is centred at the origin and the target grid at the
    barycenter of ``mu``; both have the same half-width. ``grids`` may supply
    the (source, target) pair directly.
    """
    n = mu.dimension
    if not 2 <= n <= 4:
        raise DimensionError("entropic transport is available in dimensions 2 to 4")
    d_nodes, d_radius, d_reg = GRID_DEFAULTS[n]
    reg = d_reg if reg is None else float(reg)
    if not 1e-3 <= reg <= 1.0:
        raise ValueError(f"reg={reg:g} outside [1e-3, 1]")
    center = barycenter(mu)
    if grids is None:
        nodes = nodes or d_nodes
        radius = radius or d_radius
        src_axes = tuple(np.linspace(-radius, radius, nodes) for _ in range(n))
        source = standard_gaussian_grid(src_axes)
        target = mu.grid(nodes, radius, center=center)
    else:
        source, target = grids
    state = sinkhorn_grid(source, target, reg, tol, max_iter, init)
    values = _barycentric(source, target, state)
    tmap = BarycentricMap(source.axes, values, f"entropic(reg={reg:g})", reg,
                          profile_radius=min(4.5, 0.9 * float(np.min(np.abs(source.axes[0][[0, -1]])))),
                          translation=center,
                          diagnostics={"iterations": state.iterations, "residual": state.residual})
    tmap.state = state
    tmap.grids = (source, target)
    return tmap


def entropic_pair(mu, reg: float | None = None, **kw) -> tuple:
    """Maps at ``reg`` and ``reg/2``, the second warm-started from the first."""
    m1 = entropic_transport(mu, reg, **kw)
    kw.pop("grids", None)
    m2 = entropic_transport(mu, m1.reg / 2, grids=m1.grids, init=m1.state, **kw)
    return m1, m2


def richardson(coarse: BarycentricMap, fine: BarycentricMap) -> BarycentricMap:
    """First-order extrapolation ``2 T_{reg/2} - T_reg`` of two maps on one grid."""
    if not all(np.array_equal(a, b) for a, b in zip(coarse.axes, fine.axes)):
        raise ValueError("Richardson extrapolation needs maps on the same grid")
    return BarycentricMap(coarse.axes, 2 * fine.values - coarse.values, f"richardson(reg={coarse.reg:g})",
                          coarse.reg, coarse.profile_radius, coarse.translation)


# ---------------------------------------------------------------------------
# eigenvalue profiles


@dataclass
class EigenvalueProfile:
    nodes: np.ndarray
    weights: np.ndarray
    eigenvalues: np.ndarray  # (M, n) ascending, spectra of D^2 phi
    eigenvectors: np.ndarray = field(repr=False)  # (M, n, n), columns
    provenance: str = "exact-1d"
    reg: float | None = None

    @property
    def dimension(self) -> int:
        return self.eigenvalues.shape[1]

    @property
    def m(self) -> np.ndarray:
        """``m[k-1] = int lambda_{n-k+1}(D^2 phi) dgamma`` for ``k = 1..n``."""
        w = self.weights / np.sum(self.weights)
        return (w @ self.eigenvalues)[::-1]

    def m_k(self, k: int) -> float:
        if not 1 <= k <= self.dimension:
            raise ValueError(f"k={k} outside 1..{self.dimension}")
        return float(self.m[k - 1])

    @property
    def psi_eigenvalues(self) -> np.ndarray:
        """Ascending spectra of ``D^2 psi = Id - D^2 phi``."""
        return 1.0 - self.eigenvalues[:, ::-1]

    def psi_average(self, k: int) -> float:
        """``int lambda_k(D^2 psi) dgamma``, the k-th smallest eigenvalue of ``D^2 psi`` averaged."""
        w = self.weights / np.sum(self.weights)
        return float(w @ self.psi_eigenvalues[:, k - 1])

    @property
    def tolerance(self) -> float:
        return EXACT_TOL if self.provenance.startswith("exact") else ENTROPIC_TOL

    def summary(self) -> dict:
        return {"m_k": self.m.tolist(), "defect": list(contraction_defect(self)),
                "provenance": self.provenance, "reg": self.reg}

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, sort_keys=True, indent=2)


def eigen_profile(tmap: TransportMap, quad: QuadratureRule | None = None, strict: bool = True,
                  bounds=(-0.1, 1.1)) -> EigenvalueProfile:
    """Sorted spectra of ``D^2 phi`` at the nodes of ``quad`` and their Gaussian averages.

    Raises
    ------
    ContractionViolationError
        If ``strict`` and some eigenvalue leaves ``bounds``.
    """
    quad = quad or tmap.default_rule()
    if quad.dimension != tmap.dimension:
        raise DimensionError("quadrature and map dimensions differ")
    pts = quad.points
    H = tmap.hessian(pts)
    vals, vecs = sym_eigen_stack(H, tol=1e-8)
    if strict:
        lo, hi = float(vals.min()), float(vals.max())
        if lo < bounds[0] or hi > bounds[1]:
            raise ContractionViolationError(
                f"Hessian eigenvalues span [{lo:.4g}, {hi:.4g}], outside {tuple(bounds)}")
    return EigenvalueProfile(pts, quad.weights.copy(), vals, vecs, tmap.provenance, tmap.reg)


def contraction_defect(profile: EigenvalueProfile) -> tuple:
    """``(max (lambda_n - 1)_+, max (-lambda_1)_+)`` over the profile nodes."""
    ev = profile.eigenvalues
    return float(max(0.0, ev[:, -1].max() - 1.0)), float(max(0.0, -ev[:, 0].min()))


def epsilon_hypothesis(profile: EigenvalueProfile, k: int) -> float:
    """``1 - m_k`` clamped to ``[0, 1]``."""
    return float(np.clip(1.0 - profile.m_k(k), 0.0, 1.0))


def psi_laplacian_by_parts(tmap: TransportMap, quad: QuadratureRule | None = None) -> float:
    """``int Delta psi dgamma`` via Gaussian integration by parts, ``int (x - T(x)).x dgamma``."""
    quad = quad or tmap.default_rule()
    x = quad.points
    Tx = np.asarray(tmap(x if tmap.dimension > 1 else x[:, 0])).reshape(x.shape)
    return float(quad.weights @ np.sum((x - Tx) * x, axis=-1))


# ---------------------------------------------------------------------------
# push-forward checks


def probe_functions(dimension: int, count: int = 20, seed: int = 0) -> list:
    """Monomials of degree 1..4 followed by bounded ridge/bump functions."""
    from itertools import combinations_with_replacement

    funcs = []
    for deg in range(1, 5):
        for combo in combinations_with_replacement(range(dimension), deg):
            funcs.append(lambda x, c=combo: np.prod(x[:, list(c)], axis=1))
    rng = np.random.default_rng(seed)
    while len(funcs) < count:
        a = rng.normal(size=dimension)
        c = rng.normal(scale=0.5)
        if len(funcs) % 2:
            funcs.append(lambda x, a=a, c=c: np.cos(x @ a - c))
        else:
            funcs.append(lambda x, a=a, c=c: np.exp(-0.5 * np.sum((x - c * a) ** 2, axis=1)))
    return funcs[:count]


def push_forward_residual(tmap: TransportMap, mu, count: int = 20, quad: QuadratureRule | None = None) -> float:
    """``max_h |int h(T) dgamma - int h dmu|`` over :func:`probe_functions`."""
    n = tmap.dimension
    if quad is None:
        quad = gauss_hermite(128) if n == 1 else tmap.source_rule()
    x = quad.points
    Tx = np.asarray(tmap(x[:, 0] if n == 1 else x)).reshape(x.shape)
    if isinstance(mu, GaussianMeasure):
        mu = mu.as_log_concave()
    pts, w = mu.rule()
    worst = 0.0
    for h in probe_functions(n, count):
        worst = max(worst, abs(float(quad.weights @ h(Tx)) - float(w @ h(pts))))
    return worst


def monotonicity_defect(tmap: TransportMap, pairs: int = 1000, seed: int = 0, radius: float = 3.0) -> float:
    """``max (-<T(x) - T(y), x - y> / |x - y|^2)_+`` over random node pairs."""
    rng = np.random.default_rng(seed)
    n = tmap.dimension
    x = rng.uniform(-radius, radius, size=(pairs, n))
    y = rng.uniform(-radius, radius, size=(pairs, n))
    if n == 1:
        Tx, Ty = tmap(x[:, 0])[:, None], tmap(y[:, 0])[:, None]
    else:
        Tx, Ty = tmap(x), tmap(y)
    dx = x - y
    ratio = np.sum((Tx - Ty) * dx, axis=1) / np.sum(dx * dx, axis=1)
    return float(max(0.0, -ratio.min()))


def _write_map_csv(path, nodes, mapped, hessians) -> None:
    n = nodes.shape[1]
    header = ([f"x{i + 1}" for i in range(n)] + [f"T{i + 1}" for i in range(n)]
              + [f"H{i + 1}{j + 1}" for i in range(n) for j in range(n)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p, q, H in zip(nodes, mapped, hessians):
            w.writerow([repr(float(v)) for v in np.concatenate([p, q, H.ravel()])])
