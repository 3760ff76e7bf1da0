import numpy as np
import pytest

from flowabs import (CoverAbstraction, LinearFamily, VectorField, check_inclusion,
                     compute_phi_ex1, pol_sample)
from flowabs.cover import default_bloat, sample_alphas
from flowabs._random import make_rng
from flowabs.geometry import OrderedCover


def test_pol_of_repeated_vector_spans_one_to_sqrt2():
    v = np.array([[1.0, 0.0], [1.0, 0.0]])
    P, A = pol_sample(v, 2000, seed=0, return_alphas=True)
    lam = P[:, 0]
    assert lam.min() == pytest.approx(1.0, abs=1e-12)
    assert lam.max() == pytest.approx(np.sqrt(2), abs=1e-4)
    assert np.allclose(np.linalg.norm(A, axis=1), 1.0)


def test_simplex_alphas_sum_to_one():
    A = sample_alphas(3, 100, make_rng(0, "a"), "simplex")
    assert np.allclose(A.sum(axis=1), 1.0)
    assert np.all(A >= 0)


def test_inclusion_checks():
    ok, worst = check_inclusion(VectorField.radial_contraction(), LinearFamily([-np.eye(2)]),
                                200)
    assert ok and worst < 1e-9
    rot = VectorField.rotation()
    fam = LinearFamily([np.array([[0.0, 1.0], [-1.0, 0.0]]), -0.1 * np.eye(2)])
    assert check_inclusion(rot, fam, 200)[0]
    assert not check_inclusion(rot, LinearFamily([-np.eye(2)]), 200)[0]


def test_family_rejects_mixed_dimensions():
    with pytest.raises(ValueError):
        LinearFamily([np.eye(2), np.eye(3)])


def test_phi_of_quadrants(radial, quadrants):
    cover = OrderedCover(radial.space, tuple(quadrants))
    fam = LinearFamily([-np.eye(2)])
    assert compute_phi_ex1(cover, fam, 1.0, 0) == {0}
    # the closed quadrant's shared faces flow along the axes, which belong to lower cells
    assert compute_phi_ex1(cover, fam, 1.0, 3) == {0, 1, 2, 3}
    assert compute_phi_ex1(cover, fam, 0.0, 1) == {0, 1}


def test_bloat_is_monotone(radial, quadrants):
    cover = OrderedCover(radial.space, tuple(quadrants))
    fam = LinearFamily([-np.eye(2)])
    small = compute_phi_ex1(cover, fam, 1.0, 3, bloat=0.01)
    large = compute_phi_ex1(cover, fam, 1.0, 3, bloat=2.0)
    assert small <= large and large == {0, 1, 2, 3}


def test_default_bloat_scales_with_step():
    fam = LinearFamily([-np.eye(2)])
    assert default_bloat(1e-3, fam, 5.0) == pytest.approx(2e-6 * 5.0)


def test_estimator_tags(radial, quadrants):
    est = CoverAbstraction(quadrants, [-np.eye(2)], time_grid=[0, 0.5, 1.0]).fit(radial)
    assert "over" in est.discrete_system_.tags
    assert est.check("over", 200).verdict
    wrong = CoverAbstraction(quadrants, [np.eye(2)], time_grid=[0, 1.0]).fit(radial)
    assert "over" not in wrong.discrete_system_.tags
