import warnings

import numpy as np
import pytest

from flowabs import (DescentViolation, DynamicalSystem, FlowConfig, LevelFamily,
                     LevelSetAbstraction, LevelSetEmpty, NoAdmissibleChain, StateSpace,
                     TimingBox, VectorField, apply_L, build_box_map, check_descent,
                     completeness_suite, compute_phi_ex4, compute_timing_interval)
from flowabs.dynamics import first_crossing_times
from flowabs.levelset import check_equilibrium_levels
from flowabs.morse import SingularElement

HALF_LN4 = 0.5 * np.log(4)
LEVELS = [0.0625, 0.25, 1, 4]


def V(X):
    return np.sum(np.atleast_2d(X) ** 2, axis=1)


def gradV(X):
    return 2 * np.atleast_2d(X)


@pytest.fixture(scope="module")
def disk():
    return StateSpace.box((-2, 2), (-2, 2))


@pytest.fixture(scope="module")
def radial4(disk):
    return DynamicalSystem(VectorField.radial_contraction(), disk, FlowConfig(1e-3, 10.0))


def test_family_validation():
    with pytest.raises(ValueError):
        LevelFamily([V], [[1, 0.5]])
    with pytest.raises(ValueError):
        LevelFamily([V], [[1]])
    fam = LevelFamily([V], [[1]], close=True)
    assert fam.shape == (2,)
    assert fam.shift((1,)) is None and fam.successor((1,)) == (2,)


def test_descent(disk):
    fam = LevelFamily([V], [LEVELS])
    assert check_descent(VectorField.radial_contraction(), disk, fam).passed
    grow = check_descent(VectorField.linear(np.eye(2)), disk, fam)
    assert not grow.passed and grow.worst > 0


def test_radial_timing_interval(radial4):
    fam = LevelFamily([V], [LEVELS], [gradV])
    lo, hi = compute_timing_interval(radial4, fam, 0, 4.0, 1.0, 100)
    assert lo == pytest.approx(HALF_LN4, abs=1e-6) and hi == pytest.approx(HALF_LN4, abs=1e-6)
    assert compute_timing_interval(radial4, fam, 0, 4.0, -np.inf, 10) == (np.inf, np.inf)


def test_empty_level_set(radial4):
    fam = LevelFamily([V], [[9.0, 100.0]], [gradV])
    with pytest.raises(LevelSetEmpty):
        compute_timing_interval(radial4, fam, 0, 100.0, 9.0, 10)


def test_diag_box_and_bracketing(disk):
    sys_ = DynamicalSystem(VectorField.linear([[-1.0, 0.0], [0.0, -2.0]]), disk,
                           FlowConfig(1e-3, 10.0))
    fam = LevelFamily([V], [[1, 4]], [gradV])
    box = build_box_map(sys_, fam, 200)[(1,)]
    (lo, hi), = box.intervals
    assert lo == pytest.approx(0.25 * np.log(4), abs=1e-4)
    assert hi == pytest.approx(HALF_LN4, abs=1e-4)
    th = np.random.default_rng(3).uniform(0, 2 * np.pi, 200)
    X = 2 * np.column_stack([np.cos(th), np.sin(th)])
    t = first_crossing_times(sys_.field, disk, sys_.cfg, X, V, 1.0)
    assert np.all((t >= lo - 1e-6) & (t <= hi + 1e-6))


def test_apply_L():
    a = TimingBox(((1.0, 2.0),))
    b = TimingBox(((0.5, 0.5),))
    assert apply_L([a, b])[0] == pytest.approx(1.0)
    assert apply_L([TimingBox(((0.0, np.inf),))])[0] == np.inf
    assert apply_L([TimingBox(((np.inf, np.inf),))])[0] == 0.0
    with pytest.raises(ValueError):
        TimingBox(((2.0, 1.0),))


def test_chain_selection():
    fam = LevelFamily([V], [[0, 1, 2, 3, 4]])
    unit = TimingBox(((0.0, 1.0),))
    boxmap = {(k,): unit for k in range(1, 5)}
    assert compute_phi_ex4(fam, boxmap, 2.5, (1,)) == {(2,)}
    assert compute_phi_ex4(fam, boxmap, 10.0, (1,)) == {(4,)}
    with pytest.raises(NoAdmissibleChain):
        compute_phi_ex4(fam, boxmap, 0.5, (1,))
    degenerate = {(k,): TimingBox(((1.0, 1.0),)) for k in range(1, 5)}
    # zero-width boxes admit the whole chain at t = 0
    assert compute_phi_ex4(fam, degenerate, 0.0, (2,)) == {(4,)}


def test_verbatim_phi_is_monotone_in_t():
    fam = LevelFamily([V], [[0, 1, 2, 3, 4]])
    boxmap = {(k,): TimingBox(((0.2 * k, 0.3 * k),)) for k in range(1, 5)}
    ends = [next(iter(compute_phi_ex4(fam, boxmap, t, (1,))))[0]
            for t in np.linspace(0.1, 5, 30)]
    assert ends == sorted(ends)


def test_bounds_mode_descends():
    fam = LevelFamily([V], [[0, 1, 2, 3]])
    boxmap = {(k,): TimingBox(((1.0, 1.0),)) for k in range(1, 4)}
    assert compute_phi_ex4(fam, boxmap, 0.0, (3,), "bounds") == {(3,)}
    assert compute_phi_ex4(fam, boxmap, 0.5, (3,), "bounds") == {(3,), (2,)}
    assert compute_phi_ex4(fam, boxmap, 1.5, (3,), "bounds") == {(2,), (1,)}


def test_equilibrium_levels():
    fam = LevelFamily([V], [LEVELS])
    ok = SingularElement("origin", [0.0, 0.0], stability="attracting")
    bad = SingularElement("ring", [0.7, 0.0])
    assert check_equilibrium_levels(fam, [ok]) == []
    assert check_equilibrium_levels(fam, [bad])[0][0] == "ring"


def test_estimator_radial(radial4):
    fam = LevelFamily([V], [LEVELS], [gradV], close=True)
    est = LevelSetAbstraction(fam, n_trajectories=100, phi_mode="bounds",
                              time_grid=[0, 0.1, 0.7, 2.0]).fit(radial4)
    assert est.n_cells_ == 5
    for z in [(2,), (3,), (4,)]:
        (lo, hi), = est.boxmap_[z].intervals
        assert abs(lo - HALF_LN4) < 1e-4 and abs(hi - HALF_LN4) < 1e-4
    assert est.boxmap_[(1,)].intervals == ((np.inf, np.inf),)
    assert list(est.transform([[0.0, 0.0], [1.5, 0.0], [1.9, 1.9]])) == [0, 3, 4]
    assert completeness_suite(est, 200).verdict


def test_estimator_rejects_growth(disk):
    sys_ = DynamicalSystem(VectorField.linear(np.eye(2)), disk, FlowConfig(1e-3, 1.0))
    with pytest.raises(DescentViolation):
        LevelSetAbstraction(LevelFamily([V], [LEVELS])).fit(sys_)


def test_verbatim_warns_and_keeps_cell(radial4):
    fam = LevelFamily([V], [LEVELS], [gradV], close=True)
    est = LevelSetAbstraction(fam, n_trajectories=50, time_grid=[0, 1.0]).fit(radial4)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert est.phi(0.1, 4) == {4}
    assert caught
