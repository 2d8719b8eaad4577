import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brenierlab.errors import ContractionViolationError, DimensionError
from brenierlab.measures import (
    GaussianMeasure,
    LogConcaveMeasure,
    gaussian_scaled,
    gaussian_shifted,
    product,
    quartic,
    ridge,
)
from brenierlab.quadrature import gauss_hermite
from brenierlab.transport import (
    AffineMap,
    MonotoneMap1D,
    brenier_1d,
    contraction_defect,
    eigen_profile,
    entropic_pair,
    entropic_transport,
    epsilon_hypothesis,
    monotonicity_defect,
    psi_laplacian_by_parts,
    push_forward_residual,
    richardson,
    sinkhorn_grid,
    standard_gaussian_grid,
)

COARSE = {"nodes": 61, "radius": 5.0}


@pytest.mark.parametrize("sigma", [1.0, 1.3, 2.5])
def test_scaled_gaussian_map_is_linear(sigma):
    tmap = brenier_1d(LogConcaveMeasure(gaussian_scaled(sigma)))
    x = np.linspace(-4, 4, 41)
    assert np.allclose(tmap(x), x / sigma, atol=1e-12)
    assert np.allclose(tmap.derivative(x), 1 / sigma, atol=1e-12)


def test_shifted_gaussian_map_is_translation():
    tmap = brenier_1d(GaussianMeasure(np.array([0.7])))
    x = np.linspace(-4, 4, 41)
    assert np.allclose(tmap(x), x + 0.7, atol=1e-12)
    prof = eigen_profile(tmap)
    assert max(contraction_defect(prof)) <= 1e-12
    assert prof.m_k(1) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("args", [(1.0, 0.0), (0.3, 0.5), (2.0, -1.0)])
def test_quartic_map_pushes_gamma_forward(args):
    mu = LogConcaveMeasure(quartic(*args))
    tmap = brenier_1d(mu)
    assert push_forward_residual(tmap, mu) <= 1e-10
    prof = eigen_profile(tmap)
    upper, lower = contraction_defect(prof)
    assert upper <= 1e-8 and lower == 0.0
    assert monotonicity_defect(tmap) == 0.0


def test_laplacian_two_routes_agree():
    # int Delta psi dgamma from Hessian eigenvalues and from Gaussian integration by parts
    tmap = brenier_1d(LogConcaveMeasure(quartic(1.0)))
    prof = eigen_profile(tmap, gauss_hermite(128))
    by_parts = psi_laplacian_by_parts(tmap, gauss_hermite(128))
    assert prof.psi_average(1) == pytest.approx(by_parts, abs=1e-9)


def test_tabulated_map_matches_exact_map():
    tmap = brenier_1d(LogConcaveMeasure(quartic(1.0)))
    tab = MonotoneMap1D.from_samples(tmap.xs, tmap.interpolant.ys, tmap.interpolant.slopes)
    x = np.linspace(-5, 5, 333)
    assert np.max(np.abs(tab(x) - tmap(x))) <= 1e-8


@given(st.floats(-6, 6), st.floats(-6, 6))
def test_one_dimensional_map_is_monotone_and_contracting(a, b):
    tmap = brenier_1d(LogConcaveMeasure(quartic(1.0, 0.3)))
    ta, tb = tmap(np.array(a)), tmap(np.array(b))
    assert (ta - tb) * (a - b) >= 0
    assert abs(ta - tb) <= abs(a - b) * (1 + 1e-10) + 1e-12


def test_affine_map_profile():
    A = np.diag([1.0, 0.5])
    prof = eigen_profile(AffineMap(A))
    assert np.allclose(prof.m, [1.0, 0.5])
    assert epsilon_hypothesis(prof, 2) == pytest.approx(0.5)
    assert prof.tolerance == 1e-8


def test_strict_profile_rejects_expanding_map():
    with pytest.raises(ContractionViolationError):
        eigen_profile(AffineMap(1.5 * np.eye(2)))
    prof = eigen_profile(AffineMap(1.5 * np.eye(2)), strict=False)
    assert contraction_defect(prof)[0] == pytest.approx(0.5)


def test_sinkhorn_marginals():
    mu = LogConcaveMeasure(ridge(0.3))
    axes = tuple(np.linspace(-5, 5, 41) for _ in range(2))
    src = standard_gaussian_grid(axes)
    tgt = mu.grid(41, 5.0)
    state = sinkhorn_grid(src, tgt, 0.05, tol=1e-10)
    assert state.residual <= 1e-10
    assert state.iterations > 0


def test_entropic_map_for_scaled_gaussian_improves_with_richardson():
    # exact map x -> x / 2; compare on the bulk of the grid
    mu = LogConcaveMeasure(gaussian_scaled(2.0, 2))
    coarse, fine = entropic_pair(mu, 0.02, **COARSE)
    extra = richardson(coarse, fine)
    g = np.linspace(-3, 3, 13)
    x = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    errs = [np.max(np.abs(m(x) - x / 2)) for m in (coarse, fine, extra)]
    assert errs[1] < errs[0]
    assert errs[2] < errs[1]
    assert errs[2] <= 1.5e-2


def test_entropic_map_contracts_on_product():
    mu = LogConcaveMeasure(product(gaussian_scaled(1.0), quartic(1.0)))
    tmap = entropic_transport(mu, 0.02, **COARSE)
    prof = eigen_profile(tmap)
    assert contraction_defect(prof)[0] <= 5e-2
    assert monotonicity_defect(tmap) <= 5e-2
    assert prof.m[0] >= 0.95


def test_entropic_argument_checks():
    with pytest.raises(ValueError):
        entropic_transport(LogConcaveMeasure(ridge(0.3)), 5.0)
    with pytest.raises(DimensionError):
        entropic_transport(LogConcaveMeasure(quartic(1.0)))


def test_map_csv(tmp_path):
    tmap = brenier_1d(LogConcaveMeasure(gaussian_shifted([0.2])))
    path = tmp_path / "map.csv"
    tmap.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,T1,H11"
    x, t, h = map(float, lines[1].split(","))
    assert t == pytest.approx(x + 0.2) and h == pytest.approx(1.0)
