import numpy as np
import pytest

from brenierlab.errors import DegenerateDirectionsError
from brenierlab.measures import (
    GaussianMeasure,
    LogConcaveMeasure,
    gaussian_scaled,
    gaussian_shifted,
    product,
    quartic,
    rotation_2d,
)
from brenierlab.splitting import align_rotation, build_candidate, detect_factors, stability_curve
from brenierlab.transport import AffineMap, eigen_profile
from brenierlab.wasserstein import w1_exact_1d

W1_QUARTIC_HALF = 0.174010408456669


def test_detect_factors_on_exact_profiles():
    assert detect_factors(eigen_profile(AffineMap.identity(3))) == 3
    assert detect_factors(eigen_profile(AffineMap(np.diag([0.5, 1.0])))) == 1
    assert detect_factors(eigen_profile(AffineMap(np.diag([0.5, 0.9])))) == 0
    assert detect_factors(eigen_profile(AffineMap(np.diag([0.5, 0.9]))), tol=0.2) == 1


def test_align_rotation_recovers_gaussian_direction():
    R = rotation_2d(0.8)
    prof = eigen_profile(AffineMap(R @ np.diag([1.0, 0.4]) @ R.T))
    rot = align_rotation(prof, 1)
    assert abs(rot[0] @ R[:, 0]) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(rot @ rot.T, np.eye(2), atol=1e-12)


def test_align_rotation_from_vectors():
    rot = align_rotation(np.array([[0.0, 2.0, 0.0]]))
    assert np.allclose(rot[0], [0.0, 1.0, 0.0])
    with pytest.raises(DegenerateDirectionsError):
        align_rotation(np.array([[1.0, 0.0], [1.0, 1e-9]]))


def test_one_dimensional_candidate_is_exact():
    mu = LogConcaveMeasure(quartic(0.5))
    cand = build_candidate(mu, 1)
    assert cand.gap == pytest.approx(W1_QUARTIC_HALF, abs=1e-12)


def test_rotated_gaussian_splits_exactly():
    for angle in (0.0, 0.7, 2.1):
        pot = gaussian_shifted([0.3, -0.2]).rotated(rotation_2d(angle))
        cand = build_candidate(LogConcaveMeasure(pot), 2, rotation_2d(angle).T)
        assert cand.gap <= 1e-10
        assert np.allclose(cand.p, [0.3, -0.2], atol=1e-10)


def test_rigid_product_has_negligible_gap():
    cand = build_candidate(LogConcaveMeasure(product(gaussian_scaled(1.0), quartic(1.0))), 1)
    assert cand.gap <= 1e-6
    assert cand.mu2.concavity_defect() <= 1e-8


def test_candidate_gap_matches_one_dimensional_factor():
    # W1 of products sharing a factor equals W1 of the other factors
    mu = LogConcaveMeasure(product(gaussian_scaled(1.2), quartic(1.0)))
    exact = w1_exact_1d(LogConcaveMeasure(gaussian_scaled(1.2)), GaussianMeasure(np.array([0.0])))
    cand = build_candidate(mu, 1)
    assert cand.gap == pytest.approx(exact, abs=3e-3)
    assert cand.gap <= exact + 1e-9


def test_candidate_rejects_bad_rotation():
    with pytest.raises(ValueError):
        build_candidate(LogConcaveMeasure(gaussian_scaled(1.0, 2)), 1, np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_candidate_csv(tmp_path):
    cand = build_candidate(LogConcaveMeasure(product(gaussian_scaled(1.0), quartic(1.0))), 1,
                           rotation_2d(0.0))
    cand.to_csv(tmp_path / "rot.csv", tmp_path / "mu2.csv")
    assert (tmp_path / "rot.csv").read_text().splitlines()[0] == "c1,c2"
    assert (tmp_path / "mu2.csv").read_text().splitlines()[0] == "x1,density"


def test_scaling_curve_has_linear_rate(tmp_path):
    table = stability_curve(lambda t: LogConcaveMeasure(gaussian_scaled(1 + t)), 1, [0.2, 0.01, 0.05])
    assert list(table.column("t")) == [0.01, 0.05, 0.2]
    assert np.allclose(table.column("ratio"), np.sqrt(2 / np.pi), atol=1e-10)
    table.to_csv(tmp_path / "curve.csv")
    assert (tmp_path / "curve.csv").read_text().splitlines()[0] == \
        "t,epsilon,gap,ratio,k_detected,provenance,error"


def test_curve_records_failures():
    table = stability_curve(lambda t: LogConcaveMeasure(quartic(t)), 1, [-1.0, 0.1])
    assert "InvalidPotentialError" in table.rows[0]["error"]
    assert table.rows[1]["error"] == "" and table.rows[1]["gap"] > 0
