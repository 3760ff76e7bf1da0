"""Acceptance criteria, one test each, at the stated tolerances and sample sizes.

Each test records a one-line verdict that is printed in the terminal summary.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from flowabs import (EUCLIDEAN, ContractionAbstraction, CoverAbstraction, DynamicalSystem,
                     FinslerLyapunov, FlowConfig, HyperRect, LevelFamily, LevelSetAbstraction,
                     MetricBall, NotContractive, OrderedCover, Predicate, SingularElement,
                     StateSpace, VectorField, build_box_map, build_partial_order,
                     check_contraction_inequality, check_envelope, check_flow_invariance,
                     completeness_suite, conservativeness_volume, default_time_grid,
                     flow_many, linear_flow, sample_cell, verify_safety)
from flowabs._random import make_rng
from flowabs.cli import main
from flowabs.dynamics import first_crossing_times
from flowabs.geometry import project_to_level
from flowabs.morse import LimitClassifier

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
HALF_LN4 = 0.6931471805599453  # oracle: event-located solve_ivp at rtol 1e-12
QUADRANT_EXCESS = 3.0  # oracle: grid brute force, every quadrant against Phi = Z
LEVELS = [0.0625, 0.25, 1.0, 4.0]


def record(n, ok, detail, elapsed, limit=None):
    timing = f"{elapsed:.2f} s" + (f" (< {limit} s)" if limit else "")
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{timing}]"
    print(ACCEPTANCE[n])
    assert ok, ACCEPTANCE[n]


def V(X):
    return np.sum(np.atleast_2d(X) ** 2, axis=1)


def gradV(X):
    return 2 * np.atleast_2d(X)


def radial_levels(close=True):
    return LevelFamily([V], [LEVELS], [gradV], close=close)


@pytest.fixture(scope="module")
def disk2():
    return DynamicalSystem(VectorField.radial_contraction(), StateSpace.box((-2, 2), (-2, 2)),
                           FlowConfig(1e-3, 10.0))


@pytest.fixture(scope="module")
def radial_complete(disk2):
    est = LevelSetAbstraction(radial_levels(), phi_mode="bounds", seed=7).fit(disk2)
    return est


def test_criterion_1_integrator():
    t0 = time.perf_counter()
    cfg = FlowConfig(1e-3, 5.0)
    times = np.linspace(0.0, 5.0, 11)
    X = make_rng(0, "c1").uniform(-1, 1, (20, 2))
    worst = 0.0
    for A in (-np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]])):
        Y = flow_many(VectorField.linear(A), None, cfg, times, X)
        for k, t in enumerate(times):
            worst = max(worst, float(np.abs(Y[k] - linear_flow(A, t, X)).max()))
    # step halving at a step large enough for truncation error to dominate rounding
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    x = np.array([[1.0, 0.0]])
    exact = linear_flow(rot, 5.0, x)
    errs = [np.abs(flow_many(VectorField.linear(rot), None, FlowConfig(h, 5.0), [5.0], x)[0]
                   - exact).max() for h in (0.1, 0.05)]
    factor = errs[0] / errs[1]
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-6 and factor >= 8 and elapsed < 1.0,
           f"max |numeric - analytic| = {worst:.2e} (<= 1e-6), order factor {factor:.2f} (>= 8)",
           elapsed, 1)


def test_criterion_2_min_index_properties():
    t0 = time.perf_counter()
    n = 10_000
    square = StateSpace.box((-1, 1), (-1, 1))
    quads = [HyperRect([-1, -1], [0, 0]), HyperRect([0, -1], [1, 0]),
             HyperRect([-1, 0], [0, 1]), HyperRect([0, 0], [1, 1])]
    cover = OrderedCover(square, tuple(quads))
    X = square.sample(n, make_rng(1, "c2"))
    z = cover.abstract(X)
    idem = np.array_equal(z, cover.abstract(X))
    for c in range(4):
        idem &= bool(np.all(cover.abstract(sample_cell(cover, c, n // 4, seed=1)) == c))
    torus = StateSpace.torus((-1, 1), (-1, 1))
    tcover = OrderedCover(torus, (MetricBall([0.9, 0.9], 0.4, EUCLIDEAN, torus),
                                  HyperRect([-1, -1], [0, 1]), HyperRect([-1, -1], [1, 1])))
    T = torus.sample(n, make_rng(1, "c2-torus"))
    shift = make_rng(1, "c2-shift").integers(-3, 4, (n, 2)) * 2.0
    periodic = np.array_equal(tcover.abstract(T), tcover.abstract(T + shift))
    perm = make_rng(1, "c2-perm").permutation(4)
    pcover = OrderedCover(square, tuple(quads[k] for k in perm))
    off = np.all(np.abs(X) > 1e-9, axis=1)
    independent = np.array_equal(perm[pcover.abstract(X[off])], z[off])
    elapsed = time.perf_counter() - t0
    record(2, idem and periodic and independent and elapsed < 5,
           f"idempotence {idem}, torus periodicity {periodic}, order independence "
           f"{independent} on {n} points", elapsed, 5)


def test_criterion_3_example1_over(radial):
    t0 = time.perf_counter()
    quads = [HyperRect([-1, -1], [0, 0]), HyperRect([0, -1], [1, 0]),
             HyperRect([-1, 0], [0, 1]), HyperRect([0, 0], [1, 1])]
    grid = default_time_grid(5.0, 32)
    est = CoverAbstraction(quads, [-np.eye(2)], time_grid=grid, seed=3).fit(radial)
    rep = est.check("over", 1000)
    elapsed = time.perf_counter() - t0
    record(3, rep.verdict and rep.checked >= 10_000 and elapsed < 60,
           f"{len(rep.violations)} over-violations in {rep.checked} (t, x) checks on "
           f"{len(grid) - 1} positive grid times plus t = 0; bloat 2 h^2 max|L| t",
           elapsed, 60)


def test_criterion_4_example2(radial, square):
    t0 = time.perf_counter()
    cert = check_contraction_inequality(radial.field, FinslerLyapunov.euclidean(2), "2*s",
                                        500, seed=4, space=square, cfg=radial.cfg)
    deriv_err = float(np.max(np.abs(cert.derivatives + 2 * cert.values)))
    excess = check_envelope(radial, EUCLIDEAN, lambda t, r: np.exp(-t) * r, 1000,
                            (0.25, 0.5, 1.0, 2.0, 5.0), seed=4)
    rot = DynamicalSystem(VectorField.rotation(), square, radial.cfg)
    try:
        ContractionAbstraction(radius=0.25, alpha="2*s").fit(rot)
        rejected = False
    except NotContractive:
        rejected = True
    elapsed = time.perf_counter() - t0
    ok = cert.verdict and deriv_err <= 1e-4 and excess <= 1e-4 and rejected and elapsed < 30
    record(4, ok, f"certificate {cert.verdict}, |dV/dt + 2V| <= {deriv_err:.1e}, envelope "
           f"excess {excess:.1e} on 1000 pairs, rotation NotContractive {rejected}",
           elapsed, 30)


def test_criterion_5_example3(circle):
    t0 = time.perf_counter()
    elements = [SingularElement("0", [0.0], stability="attracting"),
                SingularElement("pi", [np.pi], stability="repelling")]
    clf = LimitClassifier(circle.field, circle.space, circle.cfg, elements)
    order = build_partial_order(circle.field, circle.space, circle.cfg, elements, 200, seed=5,
                                classifier=clf)
    exact = set(order.pairs) == {("pi", "0"), ("0", "0"), ("pi", "pi")}
    times = [-10.0, -5.0, -1.0, -0.1, 0.1, 1.0, 5.0, 10.0]
    bad, unresolved = check_flow_invariance(clf, order, times)
    elapsed = time.perf_counter() - t0
    ok = exact and order.unresolved_fraction <= 0.01 and bad == 0 and unresolved == 0 \
        and elapsed < 30
    record(5, ok, f"pairs {sorted(order.pairs)}, unresolved {order.unresolved_fraction:.3f}, "
           f"invariance mismatches {bad:.3f} at |t| <= 10", elapsed, 30)


def _transit_samples(system, family, n, seed):
    """Fresh transit times from each declared upper level down to the next level."""
    rng = make_rng(seed, "c6-transit")
    per = int(np.ceil(n / (len(LEVELS) - 1)))
    out = {}
    for k in range(1, len(LEVELS)):
        hi, lo = LEVELS[k], LEVELS[k - 1]
        X = system.space.sample(4 * per, rng)
        P, ok = project_to_level(V, gradV, X, hi)
        P = P[ok & system.space.contains(P)][:per]
        out[(hi, lo)] = first_crossing_times(system.field, system.space, system.cfg, P, V, lo)
    return out


def test_criterion_6_example4(disk2, radial_complete):
    t0 = time.perf_counter()
    literal = build_box_map(disk2, radial_levels(close=False), 200, seed=7)
    box_err = max(abs(b - HALF_LN4) for box in literal.values() for b in box.intervals[0])
    closed_err = max(abs(b - HALF_LN4) for z in [(2,), (3,), (4,)]
                     for b in radial_complete.boxmap_[z].intervals[0])
    suite = completeness_suite(radial_complete, 1000)
    diag = DynamicalSystem(VectorField.linear([[-1.0, 0.0], [0.0, -2.0]]), disk2.space,
                           disk2.cfg)
    fam = LevelFamily([V], [LEVELS], [gradV])
    boxes = build_box_map(diag, fam, 200, seed=7)
    samples = _transit_samples(diag, fam, 1000, seed=8)
    outside, total = 0, 0
    for k, ((hi, lo), t) in enumerate(sorted(samples.items(), key=lambda kv: kv[0][1])):
        (b_lo, b_hi), = boxes[(k + 1,)].intervals
        outside += int(np.sum((t < b_lo - 1e-6) | (t > b_hi + 1e-6) | np.isnan(t)))
        total += len(t)
    elapsed = time.perf_counter() - t0
    ok = box_err <= 1e-4 and closed_err <= 1e-4 and suite.verdict and outside == 0 \
        and total >= 1000 and elapsed < 60
    record(6, ok, f"box error {max(box_err, closed_err):.1e} (<= 1e-4), "
           f"completeness_suite {suite.verdict} at 1000 points, diag(-1,-2): {outside} of "
           f"{total} transit times outside their box", elapsed, 60)


def test_criterion_7_conservativeness(radial_complete, radial):
    t0 = time.perf_counter()
    est = radial_complete.conservativeness(mc_samples=10_000)
    within = est.value <= 3 * est.std_error
    quads = [HyperRect([-1, -1], [0, 0]), HyperRect([0, -1], [1, 0]),
             HyperRect([-1, 0], [0, 1]), HyperRect([0, 0], [1, 1])]
    grid = [0.0, 0.5, 1.0, 2.0]
    q = CoverAbstraction(quads, [-np.eye(2)], bloat=0.0, time_grid=grid, seed=7).fit(radial)
    inflated = q.discrete_system_.with_extra(lambda t, z: range(4))
    infl = conservativeness_volume(radial, inflated, q.cover_, grid, 10_000, seed=7,
                                   preimage_samples=1000)
    rel = abs(infl.value - QUADRANT_EXCESS) / QUADRANT_EXCESS
    elapsed = time.perf_counter() - t0
    record(7, within and rel <= 0.10 and elapsed < 60,
           f"complete radial estimate {est.value:.3g} +- {est.std_error:.2g} (<= 3 SE); "
           f"inflated quadrant {infl.value:.4f} vs oracle {QUADRANT_EXCESS} "
           f"({100 * rel:.1f}% off)", elapsed, 60)


def _verdict_rank(v):
    return (1, 0.0) if v.safe else (0, -v.time)


def test_criterion_8_safety(radial_complete):
    t0 = time.perf_counter()
    est = radial_complete
    if not est.discrete_system_.tags:
        est.certify("complete", 1000)
    D, cover = est.discrete_system_, est.cover_
    init = MetricBall([0.0, 0.0], 0.1)
    unsafe = Predicate("shell", lambda X: np.linalg.norm(X, axis=1) >= 1.8)
    safe = verify_safety(D, cover, init, unsafe, 10.0, seed=8)
    overlap = verify_safety(D, cover, MetricBall([1.5, 0.0], 0.5), unsafe, 10.0, seed=8)
    rng = make_rng(8, "inflate")
    monotone = True
    n_cells = len(cover)
    for k in range(20):
        extra = {z: set(np.flatnonzero(rng.random(n_cells) < 0.2).tolist())
                 for z in range(n_cells)}
        big = D.with_extra(extra)
        for base, region in ((safe, init), (overlap, MetricBall([1.5, 0.0], 0.5))):
            v = verify_safety(big, cover, region, unsafe, 10.0, seed=8)
            monotone &= _verdict_rank(v) <= _verdict_rank(base)
    elapsed = time.perf_counter() - t0
    ok = safe.safe and not overlap.safe and overlap.time == 0.0 and monotone and elapsed < 30
    record(8, ok, f"inner ball vs outer shell: {safe.label}; overlapping: {overlap.label} at "
           f"t = {overlap.time}; monotone under 20 inflations {monotone}", elapsed, 30)


CRITERION_CONFIGS = [("quadrant_ex1.yaml", ["abstract", "check"]),
                     ("contraction_ex2.yaml", ["abstract", "check"]),
                     ("circle_ex3.yaml", ["abstract"]),
                     ("radial_ex4.yaml", ["abstract", "check", "verify", "plot"]),
                     ("diag_ex4.yaml", ["abstract"]),
                     ("overlap_ex4.yaml", ["verify"])]


def test_criterion_9_reproducibility(tmp_path):
    t0 = time.perf_counter()
    differing = []
    n_files = 0
    for name, commands in CRITERION_CONFIGS:
        for rerun in ("a", "b"):
            out = tmp_path / rerun / name
            for cmd in commands:
                main([cmd, str(CONFIGS / name), "--out", str(out), "--quiet", "--seed", "7"])
        for f in sorted((tmp_path / "a" / name).glob("*.csv")):
            n_files += 1
            if f.read_bytes() != (tmp_path / "b" / name / f.name).read_bytes():
                differing.append(f"{name}/{f.name}")
    elapsed = time.perf_counter() - t0
    record(9, not differing and n_files > 0,
           f"{n_files} CSV artifacts compared across two runs, {len(differing)} differ "
           f"{differing or ''}".rstrip(), elapsed)
