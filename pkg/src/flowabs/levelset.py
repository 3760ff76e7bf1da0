"""Timed abstraction on slabs between level sets of descent functions.

Each function ``V_i`` is nonincreasing along the flow, and a sorted list of
levels cuts the state space into bands. A cell is indexed by one band per
function; its timing box holds, per function, the least and greatest time a
trajectory needs to cross the band from its upper level to its lower level.
"""
import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from ._random import make_rng
from ._validation import check_time
from .base import BaseAbstraction
from .core import DiscreteSystem, check_complete
from .dynamics import first_crossing_times
from .exceptions import DescentViolation, EmptyRegion, LevelSetEmpty, NoAdmissibleChain
from .expr import compile_expression
from .geometry import OrderedCover, Slab, project_to_level

PHI_MODES = ("verbatim", "bounds")


def _fd_gradient(func):
    def grad(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        h = 1e-6 * (1.0 + np.linalg.norm(X, axis=1))
        G = np.empty_like(X)
        for k in range(X.shape[1]):
            E = np.zeros_like(X)
            E[:, k] = h
            G[:, k] = (func(X + E) - func(X - E)) / (2 * h)
        return G
    return grad


class LevelFamily:
    """Descent functions ``V_i`` with strictly increasing level lists.

    Parameters
    ----------
    functions : list of callables ``(n, d) -> (n,)``
    levels : list of sequences
        ``levels[i]`` is sorted strictly increasing; ``-inf``/``inf`` allowed.
    gradients : list of callables ``(n, d) -> (n, d)`` or None
        Central differences are used where missing.
    close : bool
        Append ``-inf`` and ``inf`` to each list when absent, so the slabs
        cover the whole state space.
    """

    def __init__(self, functions, levels, gradients=None, close=False, names=None):
        self.functions = list(functions)
        if len(levels) != len(self.functions):
            raise ValueError("one level list per function required")
        grads = list(gradients) if gradients is not None else [None] * len(self.functions)
        self.gradients = [g if g is not None else _fd_gradient(f)
                          for f, g in zip(self.functions, grads)]
        self.declared = [np.asarray(a, dtype=float) for a in levels]
        out = []
        for i, a in enumerate(self.declared):
            if a.ndim != 1 or a.size < 1 or np.any(np.isnan(a)):
                raise ValueError(f"level list {i} must be a nonempty list of numbers")
            if np.any(np.diff(a) <= 0):
                raise ValueError(f"levels of function {i} must be strictly increasing")
            if close:
                if a[0] != -np.inf:
                    a = np.concatenate([[-np.inf], a])
                if a[-1] != np.inf:
                    a = np.concatenate([a, [np.inf]])
            if a.size < 2:
                raise ValueError(f"function {i} needs at least two levels to form a slab")
            out.append(a)
        self.levels = out
        self.names = names or [f"V{i}" for i in range(len(self.functions))]

    @classmethod
    def from_expressions(cls, expressions, levels, variables, gradients=None, close=False):
        funcs = [compile_expression(e, variables) for e in expressions]
        grads = None
        if gradients is not None:
            grads = []
            for g in gradients:
                if g is None:
                    grads.append(None)
                    continue
                comps = [compile_expression(c, variables) for c in g]
                grads.append(lambda X, comps=comps: np.column_stack([c(X) for c in comps]))
        return cls(funcs, levels, grads, close)

    def __len__(self):
        return len(self.functions)

    @property
    def shape(self):
        """Number of slabs per function."""
        return tuple(len(a) - 1 for a in self.levels)

    def index_vectors(self):
        """All ``z = (z_1, ..., z_l)`` with ``1 <= z_i <= k_i``, lexicographically."""
        return list(itertools.product(*[range(1, len(a)) for a in self.levels]))

    def bounds(self, z):
        lo = np.array([self.levels[i][zi - 1] for i, zi in enumerate(z)])
        hi = np.array([self.levels[i][zi] for i, zi in enumerate(z)])
        return lo, hi

    def slab(self, z):
        lo, hi = self.bounds(z)
        return Slab(self.functions, self.gradients, lo, hi, tuple(z))

    def shift(self, z):
        """``sigma``: every index one level down (``None`` below the first slab)."""
        w = tuple(zi - 1 for zi in z)
        return w if min(w) >= 1 else None

    def successor(self, z):
        """Inverse of :meth:`shift`: every index one level up, ``None`` past the top."""
        w = tuple(zi + 1 for zi in z)
        return w if all(wi < len(a) for wi, a in zip(w, self.levels)) else None


@dataclass
class DescentReport:
    passed: bool
    worst: float
    worst_point: np.ndarray
    worst_function: int
    n_samples: int


def check_descent(field, space, family, n_samples=2000, seed=0, tol=1e-9):
    """Sampled ``grad V_i(x) . xi(x) <= tol`` for every function."""
    X = space.sample(n_samples, make_rng(seed, "descent"))
    F = field.rhs(X)
    worst, where, which = -np.inf, None, None
    for i, grad in enumerate(family.gradients):
        d = np.einsum("ij,ij->i", grad(X), F)
        k = int(np.argmax(d))
        if d[k] > worst:
            worst, where, which = float(d[k]), X[k], i
    return DescentReport(worst <= tol, worst, where, which, n_samples)


def check_regular_levels(space, family, n_samples=500, seed=0, eps=1e-8):
    """Smallest ``|grad V_i|`` found on each finite declared level set (``inf`` if the level set is empty)."""
    out = {}
    rng = make_rng(seed, "regular")
    for i, a in enumerate(family.levels):
        for level in a[np.isfinite(a)]:
            X = space.sample(n_samples, rng)
            P, ok = project_to_level(family.functions[i], family.gradients[i], X, level)
            P = P[ok]
            P = P[space.contains(P)] if len(P) else P
            g = np.linalg.norm(family.gradients[i](P), axis=1) if len(P) else np.array([np.inf])
            out[(i, float(level))] = float(g.min())
    bad = {k: v for k, v in out.items() if v < eps}
    return not bad, out


def _level_starts(space, family, i, level, n, rng, within=None, max_rounds=6):
    """Points on ``V_i = level`` inside ``space`` (and inside ``within`` apart from coordinate ``i``)."""
    func, grad = family.functions[i], family.gradients[i]
    found = []
    have = 0
    for _ in range(max_rounds):
        X = space.sample(max(4 * n, 64), rng)
        P, ok = project_to_level(func, grad, X, level)
        P = space.canonicalize(P[ok])
        P = P[space.contains(P, tol=1e-9)]
        if within is not None and len(P):
            P = P[within(P)]
        found.append(P)
        have += len(P)
        if have >= n:
            break
    P = np.vstack(found) if found else np.empty((0, space.dim))
    if not len(P):
        raise LevelSetEmpty(f"no point of {family.names[i]} = {level} found in the state space")
    return P[:n]


def _refine_extremes(system, family, i, a_upper, a_lower, starts, times, rng, within,
                     rounds=16, batch=24):
    """Local search along the start level set to sharpen the sampled min and max transit times."""
    func, grad = family.functions[i], family.gradients[i]
    space, cfg = system.space, system.cfg
    finite = np.isfinite(times)
    if finite.sum() < 2:
        return times.min(), times.max()
    scale = 0.1 * float(np.max(space.period))
    best = {}
    for sense in (np.argmin, np.argmax):
        fill = np.inf if sense is np.argmin else -np.inf
        k = int(sense(np.where(finite, times, fill)))
        x, tx = starts[k], times[k]
        radius = scale
        for _ in range(rounds):
            C = x + radius * rng.standard_normal((batch, space.dim))
            C, ok = project_to_level(func, grad, C, a_upper)
            C = space.canonicalize(C[ok])
            C = C[space.contains(C, tol=1e-9)]
            if within is not None and len(C):
                C = C[within(C)]
            if len(C):
                tc = first_crossing_times(system.field, space, cfg, C, func, a_lower)
                tc = np.where(np.isnan(tc), np.inf, tc)
                j = int(sense(tc))
                better = tc[j] < tx if sense is np.argmin else (np.isfinite(tc[j]) and tc[j] > tx)
                if better:
                    x, tx = C[j], tc[j]
                    continue
            radius *= 0.5
        best[sense.__name__] = tx
    return best["argmin"], best["argmax"]


def compute_timing_interval(system, family, i, a_upper, a_lower, n_trajectories=200, seed=0,
                            within=None, refine=True):
    """Least and greatest transit time from ``V_i = a_upper`` down to ``V_i = a_lower``.

    With ``a_upper = inf`` the starts are interior points of the band
    (``within`` must then be given). Trajectories that never cross within
    ``cfg.t_max`` make the upper bound ``inf``; if none crosses, both are.
    """
    if not a_lower < a_upper:
        raise ValueError("a_lower must be below a_upper")
    if a_lower == -np.inf:
        return (np.inf, np.inf)
    rng = make_rng(seed, "timing", i, float(a_upper), float(a_lower))
    space = system.space
    if np.isfinite(a_upper):
        starts = _level_starts(space, family, i, a_upper, n_trajectories, rng, within)
    else:
        if within is None:
            raise ValueError("an unbounded band needs a region to draw start points from")
        starts = within.sample(n_trajectories, rng, space)
    func = family.functions[i]
    times = first_crossing_times(system.field, space, system.cfg, starts, func, a_lower)
    times = np.where(np.isnan(times), np.inf, times)
    if np.all(np.isinf(times)):
        return (np.inf, np.inf)
    lo, hi = float(times.min()), float(times.max())
    # equal extremes (e.g. radial flows) leave nothing to sharpen
    if refine and np.isfinite(a_upper) and np.isfinite(hi) and hi - lo > 1e-9 * max(1.0, hi):
        lo, hi = _refine_extremes(system, family, i, a_upper, a_lower, starts, times, rng,
                                  within)
    return (float(lo), float(hi))


@dataclass(frozen=True)
class TimingBox:
    """Per-function transit intervals ``[lower_i, upper_i]``; entries may be ``inf``."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals)
        for a, b in iv:
            if a > b:
                raise ValueError("timing interval with lower > upper")
        object.__setattr__(self, "intervals", iv)

    @property
    def lower(self):
        return np.array([a for a, _ in self.intervals])

    @property
    def upper(self):
        return np.array([b for _, b in self.intervals])

    def __add__(self, other):
        return TimingBox(tuple((a + c, b + d) for (a, b), (c, d)
                               in zip(self.intervals, other.intervals)))


EMPTY = None


def apply_L(boxes):
    """Componentwise width of the Minkowski sum of ``boxes``.

    An unbounded upper end gives width ``inf``, except for ``[inf, inf]``
    (the band is never left), whose width is 0.
    """
    boxes = list(boxes)
    if not boxes:
        raise ValueError("apply_L needs at least one box")
    lo = np.sum([b.lower for b in boxes], axis=0)
    hi = np.sum([b.upper for b in boxes], axis=0)
    with np.errstate(invalid="ignore"):
        width = hi - lo
    width = np.where(np.isinf(hi), np.inf, width)
    return np.where(np.isinf(lo), 0.0, width)


def _cell_within(family, z, i):
    """Membership test for cell ``z`` ignoring the constraint of function ``i``."""
    lo, hi = family.bounds(z)

    def test(X):
        ok = np.ones(len(X), dtype=bool)
        for j, f in enumerate(family.functions):
            if j == i:
                continue
            v = f(X)
            ok &= (v >= lo[j]) & (v <= hi[j])
        return ok
    return test


def build_box_map(system, family, n_trajectories=200, seed=0, cell_samples=64):
    """Timing box of every index vector; cells found empty by sampling map to ``EMPTY``."""
    boxmap = {}
    space = system.space
    for z in family.index_vectors():
        slab = family.slab(z)
        try:
            slab.sample(cell_samples, make_rng(seed, "nonempty", z), space)
        except EmptyRegion:
            boxmap[z] = EMPTY
            continue
        intervals = []
        lo, hi = family.bounds(z)
        for i in range(len(family)):
            within = slab if not np.isfinite(hi[i]) else (
                _cell_within(family, z, i) if len(family) > 1 else None)
            intervals.append(compute_timing_interval(system, family, i, hi[i], lo[i],
                                                     n_trajectories, seed, within))
        boxmap[z] = TimingBox(tuple(intervals))
    return boxmap


def _chain(family, boxmap, z):
    """``z, successor(z), ...`` while cells stay nonempty."""
    out = [tuple(z)]
    while True:
        nxt = family.successor(out[-1])
        if nxt is None or boxmap.get(nxt) is EMPTY:
            return out
        out.append(nxt)


def compute_phi_ex4(family, boxmap, t, z, mode="verbatim"):
    """Discrete flow of cell ``z`` at time ``t``.

    ``verbatim``: the largest ``z'`` ending a chain ``z = z^0, ..., z^m = z'``
    with ``z^{k-1} = shift(z^k)`` whose summed box has widths ``<= t``.
    Returns ``{z'}``.

    ``bounds``: per function, the bands a trajectory can occupy after time
    ``t`` given the transit intervals along the descending chain; returns the
    product set restricted to nonempty cells.

    Raises
    ------
    NoAdmissibleChain
        ``verbatim`` only, when even ``m = 0`` violates the width bound.
    """
    t = check_time(t)
    z = tuple(z)
    if boxmap.get(z) is EMPTY:
        raise KeyError(f"cell {z} is empty")
    if mode == "verbatim":
        chain = _chain(family, boxmap, z)
        best = None
        for m in range(len(chain)):
            if np.all(apply_L([boxmap[c] for c in chain[:m + 1]]) <= t):
                best = chain[m]
        if best is None:
            raise NoAdmissibleChain(f"timing box of cell {z} is wider than the requested time")
        return {best}
    if mode != "bounds":
        raise ValueError(f"phi mode must be one of {PHI_MODES}")
    per_axis = []
    hull = _slab_hulls(family, boxmap)
    for i, zi in enumerate(z):
        reach = []
        own_hi = hull[i][zi][1]
        if t <= own_hi:
            reach.append(zi)
        s_lo, s_hi = 0.0, own_hi
        for j in range(1, zi):
            lo_j, hi_j = hull[i][zi - j]
            if j >= 2:
                s_lo += hull[i][zi - j + 1][0]
            s_hi += hi_j
            if s_lo < t <= s_hi:
                reach.append(zi - j)
            if s_lo >= t:
                break
        per_axis.append(reach)
    out = set()
    for w in itertools.product(*per_axis):
        if boxmap.get(w) is not EMPTY and w in boxmap:
            out.add(w)
    return out


def _slab_hulls(family, boxmap):
    """Per function and band, the hull of that coordinate's interval over nonempty cells."""
    hull = [dict() for _ in range(len(family))]
    for z, box in boxmap.items():
        if box is EMPTY:
            continue
        for i, (a, b) in enumerate(box.intervals):
            cur = hull[i].get(z[i])
            hull[i][z[i]] = (a, b) if cur is None else (min(cur[0], a), max(cur[1], b))
    return hull


def slab_cover(space, family, boxmap):
    """Ordered cover by the nonempty slab cells, lexicographic in the index vector."""
    cells = [z for z in family.index_vectors() if boxmap.get(z) is not EMPTY]
    return OrderedCover(space, tuple(family.slab(z) for z in cells), tuple(cells))


def check_equilibrium_levels(family, elements):
    """Declared equilibria whose ``V_i`` lies strictly inside a band bounded by two declared levels."""
    bad = []
    for el in elements:
        if el.kind != "equilibrium":
            continue
        for i, f in enumerate(family.functions):
            v = float(f(el.point[None, :])[0])
            a = family.declared[i]
            a = a[np.isfinite(a)]
            for lo, hi in zip(a[:-1], a[1:]):
                if lo < v < hi:
                    bad.append((el.name, i, (float(lo), float(hi))))
    return bad


class LevelSetAbstraction(BaseAbstraction):
    """Slab-cell abstraction with timing boxes.

    Parameters
    ----------
    family : LevelFamily
    n_trajectories : int
        Start points per timing interval.
    phi_mode : {"verbatim", "bounds"}
    tol_descent : float
    descent_samples : int
    elements : list of SingularElement, optional
        Enables the equilibrium-level cross-check.

    Attributes
    ----------
    descent_, boxmap_, cover_, discrete_system_
    """

    def __init__(self, family=None, n_trajectories=200, phi_mode="verbatim", tol_descent=1e-9,
                 descent_samples=2000, elements=None, time_grid=None, seed=0):
        self.family = family
        self.n_trajectories = n_trajectories
        self.phi_mode = phi_mode
        self.tol_descent = tol_descent
        self.descent_samples = descent_samples
        self.elements = elements
        self.time_grid = time_grid
        self.seed = seed

    def _fit(self, system):
        if self.phi_mode not in PHI_MODES:
            raise ValueError(f"phi_mode must be one of {PHI_MODES}")
        family = self.family
        self.descent_ = check_descent(system.field, system.space, family, self.descent_samples,
                                      self.seed, self.tol_descent)
        if not self.descent_.passed:
            raise DescentViolation(
                f"d{family.names[self.descent_.worst_function]}(xi) = {self.descent_.worst:.3g}"
                f" > 0 at {self.descent_.worst_point.tolist()}")
        ok, self.regular_ = check_regular_levels(system.space, family, seed=self.seed)
        if not ok:
            raise ValueError(f"declared levels are not regular values: {self.regular_}")
        self.level_conflicts_ = (check_equilibrium_levels(family, self.elements)
                                 if self.elements else [])
        self.boxmap_ = build_box_map(system, family, self.n_trajectories, self.seed)
        self.cover_ = slab_cover(system.space, family, self.boxmap_)
        index = {z: k for k, z in enumerate(self.cover_.labels)}
        mode, boxmap = self.phi_mode, self.boxmap_

        def phi(t, k):
            z = self.cover_.labels[k]
            try:
                cells = compute_phi_ex4(family, boxmap, t, z, mode)
            except NoAdmissibleChain as exc:
                warnings.warn(str(exc), RuntimeWarning)
                cells = {z}
            return {index[w] for w in cells}

        self.discrete_system_ = DiscreteSystem(range(len(self.cover_)), phi, self.time_grid_,
                                               labels=self.cover_.labels)


def completeness_suite(estimator, n_points=1000, time_grid=None, seed=None):
    """Run the complete-abstraction check on a fitted :class:`LevelSetAbstraction`."""
    if not estimator.descent_.passed:
        raise DescentViolation("descent check must pass before the completeness suite")
    grid = estimator.time_grid_ if time_grid is None else time_grid
    seed = estimator.seed if seed is None else seed
    return check_complete(estimator.system_, estimator.discrete_system_, estimator.cover_,
                          n_points, grid, seed)
