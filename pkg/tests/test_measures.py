import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from brenierlab.errors import DimensionError, HypothesisWarning, InvalidPotentialError, UnderflowError
from brenierlab.measures import (
    GaussianMeasure,
    GridDensity,
    LogConcaveMeasure,
    Potential,
    barycenter,
    check_one_log_concavity,
    gaussian_scaled,
    gaussian_shifted,
    marginal,
    normalize,
    potential_from_spec,
    product,
    quartic,
    ridge,
    rotated_product,
    rotation_2d,
)
from brenierlab.quadrature import fd_gradient, fd_jacobian

# log of int exp(-x^2/2 - t x^4/4 - l x) dx and the barycenter, from 30-digit mpmath quadrature
FROZEN = {
    (1.0, 0.0): (0.66023538985581724, 0.0),
    (0.3, 0.5): (0.87355278267699014, -0.32707370564137115),
    (0.5, 0.0): (0.7428706786403717, 0.0),
}


def builtin_potentials():
    return [
        gaussian_scaled(1.0), gaussian_scaled(1.7), gaussian_shifted([0.4]), quartic(1.0),
        quartic(0.3, 0.5), gaussian_scaled(1.3, 2), gaussian_shifted([0.3, -0.2]),
        product(gaussian_scaled(1.0), quartic(1.0)), ridge(0.4), ridge(0.2, [1.0, 1.0]),
        ridge(0.5, profile="quadratic"), rotated_product([gaussian_scaled(1.0), quartic(0.5)], 0.6),
        product(quartic(0.5), gaussian_scaled(1.2), quartic(1.0)),
    ]


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_normalisation_against_frozen_oracle(key):
    mu = LogConcaveMeasure(quartic(*key))
    log_z, mean = FROZEN[key]
    assert mu.log_z == pytest.approx(log_z, abs=1e-12)
    assert barycenter(mu)[0] == pytest.approx(mean, abs=1e-12)


def test_normalisation_against_adaptive_quadrature():
    pot = quartic(0.7, -0.2)
    z, _ = quad(lambda x: np.exp(-pot.value(np.array([[x]]))[0]), -np.inf, np.inf, epsabs=1e-14)
    assert normalize(pot) == pytest.approx(np.log(z), abs=1e-12)


@pytest.mark.parametrize("sigma", [1.0, 1.5, 3.0])
def test_gaussian_closed_forms(sigma):
    mu = LogConcaveMeasure(gaussian_scaled(sigma, 2))
    assert mu.log_z == pytest.approx(2 * (0.5 * np.log(2 * np.pi) - np.log(sigma)), abs=1e-12)
    second = mu.expect(lambda x: x[:, 0] ** 2)
    assert second == pytest.approx(1 / sigma**2, rel=1e-12)


def test_shifted_gaussian_barycenter():
    p = np.array([0.3, -1.1])
    assert np.allclose(barycenter(LogConcaveMeasure(gaussian_shifted(p))), p, atol=1e-13)


@pytest.mark.parametrize("pot", builtin_potentials(), ids=lambda p: p.family)
def test_gradient_and_hessian_match_finite_differences(pot):
    rng = np.random.default_rng(11)
    n = pot.dimension
    x = rng.uniform(-1, 1, size=(100, n))
    x *= (rng.uniform(0, 8, size=100) / np.maximum(np.linalg.norm(x, axis=1), 1e-12))[:, None]
    g = pot.grad(x)
    H = pot.hess(x)
    g_fd = fd_gradient(pot.value, x, 1e-4)
    H_fd = fd_jacobian(pot.grad, x, 1e-4)
    scale = 1 + np.abs(g)
    assert np.max(np.abs(g - g_fd) / scale) <= 1e-6
    assert np.max(np.abs(H - H_fd) / (1 + np.abs(H))) <= 1e-6


@pytest.mark.parametrize("pot", builtin_potentials(), ids=lambda p: p.family)
def test_builtin_families_are_one_log_concave(pot):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mu = LogConcaveMeasure(pot)
    assert mu.convexity_margin >= -1e-12


def test_hypothesis_violation_warns():
    pot = Potential(1, lambda x: 0.25 * np.sum(x * x, axis=-1), lambda x: 0.5 * x,
                    lambda x: np.broadcast_to(0.5 * np.eye(1), x.shape[:-1] + (1, 1)))
    with pytest.warns(HypothesisWarning):
        mu = LogConcaveMeasure(pot)
    assert mu.convexity_margin == pytest.approx(-0.5)


def test_negative_quartic_rejected():
    with pytest.raises(InvalidPotentialError):
        quartic(-1.0)


def test_underflow_detected():
    pot = gaussian_scaled(1.0)
    shifted = Potential(1, lambda x: pot.value(x) + 800.0, pot.grad, pot.hess)
    with pytest.raises(UnderflowError):
        LogConcaveMeasure(shifted)


def test_rotation_invariance_of_normalisation():
    base = product(gaussian_scaled(1.0), quartic(1.0))
    mu = LogConcaveMeasure(base)
    rot = LogConcaveMeasure(base.rotated(rotation_2d(0.9)))
    assert rot.log_z == pytest.approx(mu.log_z, abs=1e-10)
    assert np.allclose(barycenter(rot), rotation_2d(0.9) @ barycenter(mu), atol=1e-12)


def test_spec_round_trip():
    spec = {"family": "product", "dimension": 2, "params": {"factors": [
        {"family": "gaussian-scaled", "params": {"sigma": 1.0}},
        {"family": "quartic", "params": {"t": 1.0}}]}}
    pot = potential_from_spec(spec)
    x = np.array([[0.3, -0.8]])
    assert pot.value(x) == pytest.approx(product(gaussian_scaled(1.0), quartic(1.0)).value(x))


def test_marginal_of_product_is_the_factor():
    mu = LogConcaveMeasure(product(gaussian_scaled(1.0), quartic(1.0)))
    m2 = marginal(mu, [1])
    x = np.linspace(-3, 3, 13)
    exact = np.exp(-quartic(1.0).value(x[:, None]) - FROZEN[(1.0, 0.0)][0])
    assert np.allclose(m2.density_at(x[:, None]), exact, atol=1e-7)


def test_marginal_composition_3d():
    mu = LogConcaveMeasure(product(quartic(0.5), gaussian_scaled(1.2), quartic(1.0)))
    grid = mu.grid(65, 6.0)
    direct = grid.marginal([2])
    two_step = grid.marginal([1, 2]).marginal([1])
    assert np.max(np.abs(direct.density - two_step.density)) <= 1e-8


@pytest.mark.parametrize("pot", [product(gaussian_scaled(1.0), quartic(1.0)), ridge(0.4, [1.0, 2.0]),
                                 rotated_product([quartic(1.0), quartic(0.5)], 0.4)])
def test_marginals_stay_log_concave(pot):
    mu = LogConcaveMeasure(pot)
    assert marginal(mu, [0]).concavity_defect() <= 1e-8
    assert marginal(mu, [1]).concavity_defect() <= 1e-8


def test_marginal_rejects_bad_coordinates():
    mu = LogConcaveMeasure(ridge(0.2))
    with pytest.raises(ValueError):
        marginal(mu, [2])
    with pytest.raises(DimensionError):
        marginal(LogConcaveMeasure(quartic(1.0)), [0])


@given(st.floats(0.01, 0.99), st.sampled_from([(1.0, 0.0), (0.3, 0.5)]))
def test_quantile_inverts_cdf(u, key):
    mu = LogConcaveMeasure(quartic(*key))
    x = mu.quantile(np.array([u]))
    assert mu.cdf(x)[0] == pytest.approx(u, abs=1e-12)
    assert mu.cdf(x)[0] + mu.sf(x)[0] == pytest.approx(1.0, abs=1e-13)


def test_cdf_against_adaptive_quadrature():
    pot = quartic(0.3, 0.5)
    log_z = FROZEN[(0.3, 0.5)][0]
    mu = LogConcaveMeasure(pot)
    for x in (-2.0, -0.3, 0.0, 1.4):
        val, _ = quad(lambda s: np.exp(-pot.value(np.array([[s]]))[0] - log_z), -np.inf, x, epsabs=1e-14)
        assert mu.cdf(np.array([x]))[0] == pytest.approx(val, abs=1e-11)


def test_gaussian_measure_helpers():
    g = GaussianMeasure(np.array([0.5]))
    assert g.cdf(np.array([0.5]))[0] == pytest.approx(0.5)
    assert g.quantile(np.array([0.975]))[0] == pytest.approx(0.5 + 1.959963984540054)
    lc = g.as_log_concave()
    assert barycenter(lc)[0] == pytest.approx(0.5, abs=1e-13)


def test_grid_density_csv_round_trip(tmp_path):
    mu = LogConcaveMeasure(ridge(0.3))
    grid = mu.grid(33, 5.0)
    path = tmp_path / "g.csv"
    grid.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,density"
    back = GridDensity.from_csv(path)
    assert np.allclose(back.density, grid.density, rtol=1e-15, atol=0)
    assert back.mass == pytest.approx(grid.mass)
