"""Gaussian factor detection and split candidates ``nu = gamma_{p,k} (x) mu_2``."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import BrenierLabError, DimensionError
from .measures import LOG_SQRT_2PI, GaussianMeasure, GridDensity, LogConcaveMeasure, barycenter, marginal
from .quadrature import orthonormal_frame, sym_eigen
from .transport import (
    EigenvalueProfile,
    brenier_1d,
    eigen_profile,
    entropic_pair,
    entropic_transport,
    epsilon_hypothesis,
    richardson,
)
from .wasserstein import DiscreteCloud, w1_discrete, w1_exact_1d

CLOUD_ORDER = {2: 40, 3: 14, 4: 8}


def detect_factors(profile: EigenvalueProfile, tol: float | None = None) -> int:
    """Largest ``k`` with ``m_k >= 1 - tol`` (0 when even ``m_1`` falls short)."""
    tol = 2 * profile.tolerance if tol is None else tol
    m = profile.m
    k = 0
    while k < len(m) and m[k] >= 1 - tol:
        k += 1
    return k


def top_frame(profile: EigenvalueProfile, k: int) -> np.ndarray:
    """Top-k eigenvectors of the Gaussian average of the projectors on the top-k eigenspaces."""
    vecs = profile.eigenvectors[:, :, -k:]  # columns for the k largest eigenvalues
    w = profile.weights / profile.weights.sum()
    P = np.einsum("m,mak,mbk->ab", w, vecs, vecs)
    spec = sym_eigen(P, tol=1e-8)
    return spec.vectors[:, ::-1][:, :k].T


def align_rotation(source, k: int | None = None) -> np.ndarray:
    """Orthogonal matrix sending the detected Gaussian directions to ``e_1..e_k``.

    ``source`` is an :class:`EigenvalueProfile` (directions: averaged top-k
    eigenframe of ``D^2 phi``) or a ``k x n`` array of direction vectors
    (for instance the linear parts ``V_i`` of pulled-back near-minimisers).

    Raises
    ------
    DegenerateDirectionsError
        If the directions are (numerically) linearly dependent.
    """
    if isinstance(source, EigenvalueProfile):
        if k is None or not 1 <= k <= source.dimension:
            raise ValueError("align_rotation from a profile needs 1 <= k <= n")
        directions = top_frame(source, k)
    else:
        directions = np.atleast_2d(getattr(source, "vectors", source))
        if k is not None:
            directions = directions[:k]
    return orthonormal_frame(directions)


@dataclass
class SplitCandidate:
    k: int
    rotation: np.ndarray
    p: np.ndarray
    mu2: GridDensity | None
    gap: float
    diagnostics: dict = field(default_factory=dict)

    def log_density(self, y) -> np.ndarray:
        """Log-density of ``nu`` in rotated coordinates."""
        y = np.atleast_2d(y)
        out = -0.5 * np.sum((y[:, : self.k] - self.p) ** 2, axis=1) - self.k * LOG_SQRT_2PI
        if self.mu2 is not None:
            out = out + self.mu2.log_density_at(y[:, self.k:])
        return out

    def to_csv(self, rotation_path, mu2_path=None) -> None:
        with open(rotation_path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = self.rotation.shape[1]
            w.writerow([f"c{j + 1}" for j in range(n)])
            for row in self.rotation:
                w.writerow([repr(float(v)) for v in row])
        if mu2_path is not None and self.mu2 is not None:
            self.mu2.to_csv(mu2_path)


def _clouds(mu_r: LogConcaveMeasure, candidate: SplitCandidate, order: int):
    # shared Gauss-Hermite nodes at unit scale: 1-log-concave laws are no wider than gamma
    n = mu_r.dimension
    y, wy = hermegauss(order)
    mesh = np.meshgrid(*([y] * n), indexing="ij")
    Y = np.stack([m.ravel() for m in mesh], axis=-1)
    logw = np.sum(np.log(np.stack(np.meshgrid(*([wy] * n), indexing="ij"), axis=-1).reshape(-1, n)), axis=1)
    logw += 0.5 * np.sum(Y * Y, axis=1)
    X = mu_r.center + Y
    lw_mu = logw + mu_r.log_density(X)
    lw_nu = logw + candidate.log_density(X)
    out = []
    for lw in (lw_mu, lw_nu):
        w = np.exp(lw - lw.max())
        out.append(DiscreteCloud.normalized(X, w))
    return out


def build_candidate(mu, k: int, rotation=None, cloud_order: int | None = None,
                    grid_nodes: int | None = None) -> SplitCandidate:
    """Rotate ``mu``, split off ``gamma_{p,k}`` with ``p`` the barycenter of the first
    ``k`` rotated coordinates, keep the marginal ``mu_2`` of the rest, and measure
    ``W1(mu, gamma_{p,k} (x) mu_2)``.
    """
    if isinstance(mu, GaussianMeasure):
        mu = mu.as_log_concave()
    n = mu.dimension
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    R = np.eye(n) if rotation is None else np.asarray(rotation, dtype=float)
    if np.max(np.abs(R @ R.T - np.eye(n))) > 1e-12:
        raise ValueError("rotation is not orthogonal to 1e-12")
    if n == 1:
        p = barycenter(mu)
        gap = w1_exact_1d(mu, GaussianMeasure(p))
        return SplitCandidate(1, R, p, None, gap, {"method": "exact-1d"})
    mu_r = mu.rotated(R) if not np.allclose(R, np.eye(n), atol=0, rtol=0) else mu
    p = barycenter(mu_r)[:k]
    mu2 = marginal(mu_r, list(range(k, n)), nodes=grid_nodes) if k < n else None
    cand = SplitCandidate(k, R, p, mu2, float("nan"))
    a, b = _clouds(mu_r, cand, cloud_order or CLOUD_ORDER[n])
    gap, plan = w1_discrete(a, b)
    cand.gap = float(gap)
    cand.diagnostics = {"method": "gauss-hermite clouds", "atoms": len(a),
                        "mu2_concavity_defect": mu2.concavity_defect() if mu2 is not None else None,
                        "plan_residual": plan.row_residual + plan.col_residual}
    return cand


@dataclass
class CurveTable:
    rows: list

    COLUMNS = ("t", "epsilon", "gap", "ratio", "k_detected", "provenance", "error")

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in self.COLUMNS])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def curve_point(mu, k: int, reg: float | None = None, extrapolate: bool = True) -> dict:
    """One stability-curve evaluation: map, profile, ``eps``, detected ``k`` and gap."""
    if mu.dimension == 1:
        tmap = brenier_1d(mu)
        prof = eigen_profile(tmap)
        rot = np.eye(1)
    else:
        if extrapolate:
            coarse, fine = entropic_pair(mu, reg)
            tmap = richardson(coarse, fine)
        else:
            tmap = entropic_transport(mu, reg)
        prof = eigen_profile(tmap)
        rot = align_rotation(prof, k)
    eps = epsilon_hypothesis(prof, k)
    cand = build_candidate(mu, k, rot)
    return {"epsilon": eps, "gap": cand.gap, "ratio": cand.gap / eps if eps > 0 else float("nan"),
            "k_detected": detect_factors(prof), "provenance": tmap.provenance, "candidate": cand,
            "profile": prof}


def stability_curve(family: Callable[[float], LogConcaveMeasure], k: int, params, reg: float | None = None,
                    extrapolate: bool = True) -> CurveTable:
    """Table of ``(t, eps(t), gap(t))`` along a one-parameter family; failures are recorded per row."""
    rows = []
    for t in sorted(float(t) for t in params):
        row = {"t": t, "epsilon": float("nan"), "gap": float("nan"), "ratio": float("nan"),
               "k_detected": -1, "provenance": "", "error": ""}
        try:
            mu = family(t)
            if mu.dimension < k:
                raise DimensionError(f"k={k} exceeds the dimension {mu.dimension}")
            pt = curve_point(mu, k, reg, extrapolate)
            row.update({key: pt[key] for key in ("epsilon", "gap", "ratio", "k_detected", "provenance")})
        except (BrenierLabError, ValueError, ArithmeticError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return CurveTable(rows)
