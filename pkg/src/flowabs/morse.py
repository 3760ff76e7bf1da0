"""Decomposition of a Morse-Smale flow into connection cells.

Every point is labelled by the pair (alpha-limit, omega-limit) of declared
singular elements. Points sharing a pair form a flow-invariant cell, so the
discrete flow map is the identity on cells.
"""
from dataclasses import dataclass, field

import numpy as np

from ._random import make_rng
from ._validation import check_points
from .base import BaseAbstraction
from .core import DiscreteSystem
from .dynamics import FlowConfig, _Stepper, flow_many
from .exceptions import OrderViolation, TooManyUnresolved
from .geometry import EUCLIDEAN, OrderedCover, Predicate

UNRESOLVED = -1
ORBIT_SAMPLES = 64


@dataclass
class SingularElement:
    """A declared equilibrium or periodic orbit.

    ``point`` is the equilibrium, or a seed point on the orbit for
    ``kind="periodic"``. Hyperbolicity is recorded as an assumption.
    """

    name: str
    point: np.ndarray
    kind: str = "equilibrium"
    period: float = None
    stability: str = "saddle"
    capture_radius: float = None

    def __post_init__(self):
        self.name = str(self.name)
        self.point = np.atleast_1d(np.asarray(self.point, dtype=float))
        if self.kind not in ("equilibrium", "periodic"):
            raise ValueError(f"unknown singular element kind {self.kind!r}")
        if self.kind == "periodic" and not (self.period and self.period > 0):
            raise ValueError("periodic orbits need a positive period")
        if self.stability not in ("attracting", "repelling", "saddle"):
            raise ValueError(f"unknown stability {self.stability!r}")


def validate_elements(field, space, cfg, elements, tol_eq=1e-6, tol_orbit=1e-3):
    """Check ``|xi(point)| <= tol_eq`` and orbit closure ``|phi(T, seed) - seed| <= tol_orbit``."""
    for el in elements:
        if el.kind == "equilibrium":
            speed = float(np.linalg.norm(field.rhs(el.point[None, :])))
            if speed > tol_eq:
                raise ValueError(f"element {el.name}: |xi| = {speed:.3g} is not an equilibrium")
        else:
            end = flow_many(field, space, cfg, [el.period], el.point[None, :])[0, 0]
            gap = float(np.linalg.norm(space.displacement(el.point, end)))
            if gap > tol_orbit:
                raise ValueError(f"element {el.name}: orbit does not close (gap {gap:.3g})")


def _capture_sets(field, space, cfg, elements):
    default = 0.05 * space.diameter
    sets = []
    for el in elements:
        r = el.capture_radius or default
        if el.kind == "equilibrium":
            pts = el.point[None, :]
        else:
            times = np.linspace(0.0, el.period, ORBIT_SAMPLES, endpoint=False)
            pts = flow_many(field, space, cfg, times, el.point[None, :])[:, 0, :]
        sets.append((pts, r))
    return sets


def _inside(space, X, pts, r):
    d = np.full(len(X), np.inf)
    for p in pts:
        d = np.minimum(d, EUCLIDEAN.distance(p, X, space))
    return d < r


def classify_limits(field, space, cfg, X, elements, t_max=None, dwell=10.0, backward=False):
    """Index of the element capturing each trajectory, or ``UNRESOLVED``.

    A trajectory is captured by the first element whose capture set
    (a ball around an equilibrium, a tube around 64 orbit samples) it stays
    in for ``2 * period`` (orbits) or ``2 * dwell`` (equilibria).
    ``backward=True`` classifies alpha-limits by flowing ``-xi``.
    """
    X = check_points(X, field.dim)
    t_max = cfg.t_max if t_max is None else t_max
    rhs_field = field.reversed() if backward else field
    sets = _capture_sets(field, space, cfg, elements)
    need = np.array([2.0 * (el.period if el.kind == "periodic" else dwell) for el in elements])
    torus = space is not None and space.is_torus
    # leaving a box ends classification as unresolved instead of raising
    stepper = _Stepper(rhs_field.rhs, space if torus else None, cfg.step)
    state = space.canonicalize(X) if space is not None else X.copy()
    result = np.full(len(X), UNRESOLVED)
    active = np.ones(len(X), dtype=bool)
    inside_since = np.full((len(X), len(elements)), np.nan)
    t = 0.0
    n_steps = int(np.ceil(t_max / cfg.step - 1e-9))
    for k in range(n_steps + 1):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        for e, (pts, r) in enumerate(sets):
            ins = _inside(space, state[idx], pts, r)
            col = inside_since[idx, e]
            col = np.where(ins, np.where(np.isnan(col), t, col), np.nan)
            inside_since[idx, e] = col
            done = ins & (t - col >= need[e] - 1e-9)
            hit = idx[done & (result[idx] == UNRESOLVED)]
            result[hit] = e
        active &= result == UNRESOLVED
        if k < n_steps and active.any():
            a = np.flatnonzero(active)
            state[a] = stepper.full(state[a])
            if space is not None and not torus:
                active[a[~space.contains(state[a], tol=1e-6)]] = False
        t += cfg.step
    return result


def classify_omega_limit(field, space, cfg, x, elements, t_max=None, dwell=10.0):
    """Name of the element capturing the forward trajectory of ``x``, or ``None``."""
    z = classify_limits(field, space, cfg, x, elements, t_max, dwell)[0]
    return None if z == UNRESOLVED else elements[z].name


def classify_alpha_limit(field, space, cfg, x, elements, t_max=None, dwell=10.0):
    """Name of the element capturing the backward trajectory of ``x``, or ``None``."""
    z = classify_limits(field, space, cfg, x, elements, t_max, dwell, backward=True)[0]
    return None if z == UNRESOLVED else elements[z].name


class LimitClassifier:
    """Memoized ``(alpha, omega)`` labelling of point batches."""

    def __init__(self, field, space, cfg, elements, t_max=None, dwell=10.0):
        self.field, self.space, self.cfg = field, space, cfg
        self.elements = list(elements)
        self.t_max = t_max
        self.dwell = dwell
        self._memo = {}

    def pairs(self, X):
        """``(n, 2)`` integer array of element indices; ``-1`` marks unresolved."""
        X = check_points(X, self.field.dim)
        key = X.tobytes()
        hit = self._memo.get(key)
        if hit is None:
            a = classify_limits(self.field, self.space, self.cfg, X, self.elements, self.t_max,
                                self.dwell, backward=True)
            w = classify_limits(self.field, self.space, self.cfg, X, self.elements, self.t_max,
                                self.dwell)
            hit = np.column_stack([a, w])
            if len(self._memo) > 64:
                self._memo.clear()
            self._memo[key] = hit
        return hit


@dataclass
class ConnectionOrder:
    """Witnessed pairs ``beta_i > beta_j`` (by element name) and their representatives."""

    pairs: list
    cells: dict = field(default_factory=dict)
    unresolved_fraction: float = 0.0
    n_samples: int = 0


def build_partial_order(field, space, cfg, elements, n_samples=200, seed=0, t_max=None,
                        dwell=10.0, unresolved_threshold=0.01, classifier=None):
    """Sample the state space, label points by limit pairs, and collect the order.

    Reflexive pairs ``(i, i)`` are always present; each element's own point
    is added to the sample as its representative.

    Raises
    ------
    TooManyUnresolved
    OrderViolation
        If both ``(i, j)`` and ``(j, i)`` are witnessed for ``i != j``.
    """
    classifier = classifier or LimitClassifier(field, space, cfg, elements, t_max, dwell)
    X = space.sample(n_samples, make_rng(seed, "morse"))
    X = np.vstack([X, np.array([el.point for el in elements])])
    P = classifier.pairs(X)
    resolved = np.all(P != UNRESOLVED, axis=1)
    frac = 1.0 - resolved.mean()
    if frac > unresolved_threshold:
        raise TooManyUnresolved(frac, unresolved_threshold)
    names = [el.name for el in elements]
    cells = {}
    for (a, w), x in zip(P[resolved], X[resolved]):
        cells.setdefault((names[a], names[w]), []).append(x)
    for n in names:
        cells.setdefault((n, n), [])
    for (i, j) in cells:
        if i != j and (j, i) in cells:
            raise OrderViolation(i, j)
    pairs = sorted(cells, key=lambda p: (names.index(p[0]), names.index(p[1])))
    reps = {p: np.array(cells[p]).reshape(-1, field.dim) for p in pairs}
    return ConnectionOrder(pairs, reps, float(frac), len(X))


def connection_cover(space, order, classifier, elements):
    """Cover by predicate regions ``{x : (alpha(x), omega(x)) = (i, j)}``."""
    index = {el.name: k for k, el in enumerate(elements)}
    regions = []
    for pair in order.pairs:
        code = (index[pair[0]], index[pair[1]])

        def test(X, code=code):
            P = classifier.pairs(X)
            return (P[:, 0] == code[0]) & (P[:, 1] == code[1])

        reps = order.cells[pair]
        if not len(reps):
            reps = np.array([elements[code[0]].point]) if code[0] == code[1] else None
        regions.append(Predicate(f"W({pair[0]},{pair[1]})", test, reps))
    return OrderedCover(space, tuple(regions), tuple(order.pairs))


def build_ms_system(order, time_grid=None):
    """States are the witnessed pairs; ``phi(t, z) = {z}``."""
    return DiscreteSystem(range(len(order.pairs)), lambda t, z: (z,), time_grid,
                          labels=order.pairs)


def check_flow_invariance(classifier, order, times, space=None):
    """Fraction of (representative, time) checks whose flowed pair differs, and unresolved fraction.

    Negative times flow backward.
    """
    field, cfg = classifier.field, classifier.cfg
    space = classifier.space if space is None else space
    names = [el.name for el in classifier.elements]
    reps, expect = [], []
    for (i, j), pts in order.cells.items():
        for x in pts:
            reps.append(x)
            expect.append((names.index(i), names.index(j)))
    R = np.array(reps)
    expect = np.array(expect)
    times = np.asarray(times, dtype=float)
    mismatched = unresolved = total = 0
    for sign in (1.0, -1.0):
        ts = times[times > 0] if sign > 0 else times[times < 0]
        if not len(ts):
            continue
        Y = flow_many(field, space, cfg, ts, R)
        P = classifier.pairs(Y.reshape(-1, field.dim)).reshape(len(ts), len(R), 2)
        unres = np.any(P == UNRESOLVED, axis=2)
        wrong = np.any(P != expect[None], axis=2) & ~unres
        mismatched += int(wrong.sum())
        unresolved += int(unres.sum())
        total += P.shape[0] * P.shape[1]
    total = max(total, 1)
    return mismatched / total, unresolved / total


class MorseSmaleAbstraction(BaseAbstraction):
    """Connection-cell abstraction with the identity discrete flow.

    Parameters
    ----------
    elements : list of SingularElement
    n_samples : int
    t_max : float or None
        Classification horizon (defaults to the system's ``cfg.t_max``).
    dwell : float
        Equilibrium dwell constant; capture requires ``2 * dwell`` time units.
    unresolved_threshold : float
    validate : bool
        Check the declared equilibria and orbits before classifying.

    Attributes
    ----------
    order_ : ConnectionOrder
    classifier_ : LimitClassifier
    cover_, discrete_system_
        The system carries no soundness tag until :meth:`certify` passes.
    """

    def __init__(self, elements=None, n_samples=200, t_max=None, dwell=10.0,
                 unresolved_threshold=0.01, validate=True, time_grid=None, seed=0):
        self.elements = elements
        self.n_samples = n_samples
        self.t_max = t_max
        self.dwell = dwell
        self.unresolved_threshold = unresolved_threshold
        self.validate = validate
        self.time_grid = time_grid
        self.seed = seed

    def _fit(self, system):
        elements = list(self.elements)
        if self.validate:
            validate_elements(system.field, system.space, system.cfg, elements)
        self.classifier_ = LimitClassifier(system.field, system.space, system.cfg, elements,
                                           self.t_max, self.dwell)
        self.order_ = build_partial_order(system.field, system.space, system.cfg, elements,
                                          self.n_samples, self.seed, self.t_max, self.dwell,
                                          self.unresolved_threshold, self.classifier_)
        self.cover_ = connection_cover(system.space, self.order_, self.classifier_, elements)
        self.discrete_system_ = build_ms_system(self.order_, self.time_grid_)
