import numpy as np
import pytest

from flowabs import (CoverAbstraction, DiscreteSystem, MetricBall, NotOverApproximation,
                     OrderedCover, check_complete, check_over_approximation,
                     check_under_approximation, conservativeness_volume, default_time_grid,
                     discrete_reach, verify_safety)
from flowabs.geometry import HyperRect


def identity(n, tags=("over",)):
    return DiscreteSystem(range(n), lambda t, z: {z}, tags=tags)


def test_default_grid():
    g = default_time_grid(10.0)
    assert g[0] == 0 and len(g) == 33 and g[-1] == pytest.approx(10.0)
    assert np.all(np.diff(g) > 0)


def test_phi_cache_and_unknown_state():
    calls = []

    def phi(t, z):
        calls.append((t, z))
        return {z}

    D = DiscreteSystem(range(2), phi)
    D.phi(1.0, 0)
    D.phi(1.0, 0)
    assert len(calls) == 1
    with pytest.raises(KeyError):
        D.phi(1.0, 5)
    bad = DiscreteSystem(range(2), lambda t, z: {7})
    with pytest.raises(ValueError):
        bad.phi(0.0, 0)


def test_from_table_round_trip():
    D = DiscreteSystem(range(3), lambda t, z: {z, (z + 1) % 3}, time_grid=[0, 1])
    R = DiscreteSystem.from_table(D.table())
    assert R.phi(1.0, 2) == frozenset({0, 2})
    with pytest.raises(KeyError):
        R.phi(0.5, 0)


def test_quadrants_identity_is_complete(radial, quadrants):
    cover = OrderedCover(radial.space, tuple(quadrants))
    D = identity(4)
    grid = [0.0, 0.5, 2.0]
    assert check_over_approximation(radial, D, cover, 200, grid).verdict
    assert check_under_approximation(radial, D, cover, 200, grid).verdict
    assert check_complete(radial, D, cover, 200, grid).verdict


def test_wrong_map_is_refuted(radial, quadrants):
    cover = OrderedCover(radial.space, tuple(quadrants))
    D = DiscreteSystem(range(4), lambda t, z: {(z + 1) % 4})
    rep = check_over_approximation(radial, D, cover, 100, [1.0])
    assert not rep.verdict
    v = rep.violations[0]
    assert v.observed not in v.predicted


def test_under_report_wording(radial, quadrants):
    cover = OrderedCover(radial.space, tuple(quadrants))
    rep = check_under_approximation(radial, identity(4), cover, 50, [1.0])
    assert "not refuted" in rep.summary()


def test_complete_implies_over_and_under(radial, quadrants):
    cover = OrderedCover(radial.space, tuple(quadrants))
    D = DiscreteSystem(range(4), lambda t, z: set(range(4)))
    grid = [1.0]
    c = check_complete(radial, D, cover, 100, grid, seed=2)
    o = check_over_approximation(radial, D, cover, 100, grid, seed=2)
    u = check_under_approximation(radial, D, cover, 100, grid, seed=2)
    assert c.verdict == (o.verdict and u.verdict)
    assert o.verdict and not u.verdict


def test_conservativeness_decreases_with_samples(radial, quadrants):
    cover = OrderedCover(radial.space, tuple(quadrants))
    D = DiscreteSystem(range(4), lambda t, z: set(range(4)))
    ests = [conservativeness_volume(radial, D, cover, [1.0], n, 0, 200).value
            for n in (200, 2000, 20000)]
    assert all(e == pytest.approx(3.0, rel=0.15) for e in ests)
    exact = conservativeness_volume(radial, identity(4), cover, [1.0], 1000, 0, 200)
    assert exact.value == 0.0


def test_discrete_reach_monotone():
    D = DiscreteSystem(range(4), lambda t, z: {z, min(z + 1, 3)})
    assert discrete_reach(D, {0}, 1.0) <= discrete_reach(D, {0, 2}, 1.0)


def test_safety_gating_and_verdicts(radial, quadrants):
    cover = OrderedCover(radial.space, tuple(quadrants))
    init = HyperRect([0.5, 0.5], [1, 1])
    unsafe = HyperRect([-1, -1], [-0.5, -0.5])
    with pytest.raises(NotOverApproximation):
        verify_safety(identity(4, tags=()), cover, init, unsafe, 1.0)
    ok = verify_safety(identity(4), cover, init, unsafe, 1.0, [0.5, 1.0])
    assert ok.safe and ok.label == "Safe"
    bad = verify_safety(identity(4), cover, init, MetricBall([0.75, 0.75], 0.1), 1.0)
    assert not bad.safe and bad.time == 0.0


def test_estimator_api(radial, quadrants):
    est = CoverAbstraction(quadrants, [-np.eye(2)], time_grid=[0, 1.0])
    assert est.get_params()["vertex_samples"] == 64
    est.fit(radial)
    assert list(est.transform([[0.5, 0.5], [-0.5, -0.5]])) == [3, 0]
    assert 0 in est.predict([[-0.5, -0.5]], 1.0)[0]
    exact = CoverAbstraction(quadrants, [-np.eye(2)], bloat=0.0, time_grid=[0, 1.0]).fit(radial)
    assert exact.predict([[-0.5, -0.5]], 1.0)[0] == frozenset({0})
    assert est.n_cells_ == 4
