"""Combinatorial systems, soundness checkers, conservativeness and safety.

A :class:`DiscreteSystem` pairs a finite state set with a discrete flow map
``phi(t, z) -> frozenset``. The checkers compare it against sampled
trajectories of a :class:`DynamicalSystem` through an :class:`OrderedCover`.
Sampling can refute an inclusion but never prove it, so a passing verdict
means "not refuted at this sample size".
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._random import make_rng, unit_ball
from ._validation import check_count, check_time, check_time_grid
from .dynamics import FlowConfig, flow_many
from .exceptions import NotCovered, NotOverApproximation
from .geometry import sample_cell

OVER, UNDER, COMPLETE = "over", "under", "complete"


@dataclass(frozen=True)
class DynamicalSystem:
    """A vector field on a state space with the integrator settings used to flow it."""

    field: object
    space: object
    cfg: FlowConfig = FlowConfig()

    def __post_init__(self):
        if self.field.dim != self.space.dim:
            raise ValueError(
                f"field dimension {self.field.dim} != state space dimension {self.space.dim}")

    def flow(self, times, X):
        return flow_many(self.field, self.space, self.cfg, times, X)


def default_time_grid(t_max, n=32, t_min=None):
    """``t = 0`` plus ``n`` log-spaced times in ``(0, t_max]``."""
    t_min = t_max * 1e-3 if t_min is None else t_min
    return np.concatenate([[0.0], np.geomspace(t_min, t_max, n)])


class DiscreteSystem:
    """Finite state set ``Z`` with a discrete flow map ``phi: R>=0 x Z -> 2^Z``.

    Parameters
    ----------
    states : sequence of int
    phi : callable ``(t, z) -> iterable of int``
    time_grid : array-like, optional
        Times at which ``phi`` is queried by the checkers; results at these
        times are cached.
    tags : iterable of str
        Soundness guarantees: ``"over"``, ``"under"``, ``"complete"``.
    labels : sequence, optional
        Human-readable identifier per state (index vectors, limit pairs).
    """

    def __init__(self, states, phi, time_grid=None, tags=(), labels=None):
        self.states = tuple(int(z) for z in states)
        self._state_set = frozenset(self.states)
        self._phi = phi
        self.time_grid = None if time_grid is None else check_time_grid(time_grid)
        self.tags = set(tags)
        self.labels = tuple(labels) if labels is not None else self.states
        self._cache = {}

    def __len__(self):
        return len(self.states)

    def phi(self, t, z):
        t = check_time(t)
        key = (t, int(z))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if int(z) not in self._state_set:
            raise KeyError(f"unknown state {z}")
        out = frozenset(int(v) for v in self._phi(t, int(z)))
        extra = out - self._state_set
        if extra:
            raise ValueError(f"phi({t}, {z}) contains unknown states {sorted(extra)}")
        self._cache.setdefault(key, out)
        return out

    def table(self, times=None):
        """``{(t, z): phi(t, z)}`` over ``times`` (default: the time grid)."""
        times = self.time_grid if times is None else check_time_grid(times)
        return {(float(t), z): self.phi(float(t), z) for t in times for z in self.states}

    def with_extra(self, extra, tags=None):
        """Copy whose images are enlarged by ``extra(t, z)`` (a mapping or callable)."""
        get = extra if callable(extra) else (lambda t, z: extra.get(z, ()))
        return DiscreteSystem(self.states, lambda t, z: self.phi(t, z) | frozenset(get(t, z)),
                              self.time_grid, self.tags if tags is None else tags, self.labels)

    @classmethod
    def from_table(cls, table, states=None, tags=(), labels=None, atol=1e-12):
        """System replaying a finite ``{(t, z): set}`` table; queries must hit a tabulated time."""
        times = np.array(sorted({t for t, _ in table}))
        states = sorted({z for _, z in table}) if states is None else states
        data = {(float(t), int(z)): frozenset(v) for (t, z), v in table.items()}

        def phi(t, z):
            k = int(np.argmin(np.abs(times - t)))
            if abs(times[k] - t) > atol * max(1.0, t):
                raise KeyError(f"time {t} is not tabulated")
            return data[(float(times[k]), z)]

        return cls(states, phi, times, tags, labels)


@dataclass
class Violation:
    kind: str
    time: float
    source: int
    observed: int
    predicted: frozenset
    point: tuple = None


@dataclass
class ApproximationReport:
    """Outcome of a sampled soundness check; ``verdict`` is true iff no violation was found."""

    kind: str
    checked: int
    violations: list = field(default_factory=list)
    n_points: int = 0

    @property
    def verdict(self):
        return not self.violations

    def summary(self):
        if self.kind == UNDER and self.verdict:
            status = f"not refuted at {self.n_points} samples"
        elif self.verdict:
            status = "pass"
        else:
            status = f"refuted ({len(self.violations)} violations)"
        return f"{self.kind}: {status} [{self.checked} checks]"


def _abstract_or_raise(cover, X):
    z = cover.abstract(X)
    if np.any(z < 0):
        raise NotCovered(X[np.argmax(z < 0)])
    return z


def check_over_approximation(system, D, cover, n_points=1000, time_grid=None, seed=0):
    """Check ``A(phi(t, x)) in Phi(t, A(x))`` on quasi-uniform ``x`` and every grid ``t``."""
    check_count(n_points, name="n_points")
    grid = _grid(D, time_grid, system)
    X = system.space.sample(n_points, make_rng(seed, "over"))
    z0 = _abstract_or_raise(cover, X)
    Y = system.flow(grid, X)
    Z1 = _abstract_or_raise(cover, Y.reshape(-1, X.shape[1])).reshape(len(grid), len(X))
    violations = []
    for k, t in enumerate(grid):
        z1 = Z1[k]
        for z in np.unique(z0):
            image = D.phi(float(t), int(z))
            rows = np.flatnonzero(z0 == z)
            bad = rows[~np.isin(z1[rows], list(image))]
            for r in bad:
                violations.append(Violation(OVER, float(t), int(z), int(z1[r]), image,
                                            tuple(X[r].tolist())))
    return ApproximationReport(OVER, n_points * len(grid), violations, n_points)


def _cell_samples(cover, n_points, seed):
    """Per-cell samples restricted to the min-index cell ``A^-1(z)``."""
    per_cell = max(1, math.ceil(n_points / len(cover)))
    samples = {}
    for z in range(len(cover)):
        P = sample_cell(cover, z, per_cell, seed)
        samples[z] = P[cover.abstract(P) == z]
    return samples


def _forward_cells(system, cover, samples, grid, bloat=0.0, seed=0):
    """``{z: [set of cells hit at grid[k]]}`` for the flowed samples of each cell.

    With ``bloat > 0`` every flowed point also contributes the cell of one
    random point within distance ``bloat``.
    """
    out = {z: [set() for _ in grid] for z in samples}
    zs = [z for z in samples if len(samples[z])]
    if not zs:
        return out
    X = np.vstack([samples[z] for z in zs])
    owner = np.concatenate([np.full(len(samples[z]), z) for z in zs])
    Y = system.flow(grid, X)
    C = _abstract_or_raise(cover, Y.reshape(-1, X.shape[1])).reshape(len(grid), len(X))
    rng = make_rng(seed, "bloat")
    for k in range(len(grid)):
        cells = C[k]
        if bloat > 0:
            Q = system.space.canonicalize(Y[k] + bloat * unit_ball(len(X), X.shape[1], rng))
            extra = cover.abstract(Q)
        for z in zs:
            mask = owner == z
            out[z][k].update(cells[mask].tolist())
            if bloat > 0:
                e = extra[mask]
                out[z][k].update(e[e >= 0].tolist())
    return out


def check_under_approximation(system, D, cover, n_points=1000, time_grid=None, seed=0):
    """Refutation test: every ``z' in Phi(t, z)`` must be hit by some sampled ``x in [z]``."""
    check_count(n_points, name="n_points")
    grid = _grid(D, time_grid, system)
    samples = _cell_samples(cover, n_points, seed)
    hits = _forward_cells(system, cover, samples, grid)
    violations = []
    checked = 0
    for k, t in enumerate(grid):
        for z in D.states:
            image = D.phi(float(t), z)
            seen = hits[z][k] if z in hits else set()
            checked += len(image)
            for missing in sorted(image - seen):
                violations.append(Violation(UNDER, float(t), z, int(missing), image))
    n = sum(len(s) for s in samples.values())
    return ApproximationReport(UNDER, checked, violations, n)


def check_complete(system, D, cover, n_points=1000, time_grid=None, seed=0):
    over = check_over_approximation(system, D, cover, n_points, time_grid, seed)
    under = check_under_approximation(system, D, cover, n_points, time_grid, seed)
    return ApproximationReport(COMPLETE, over.checked + under.checked,
                               over.violations + under.violations, over.n_points)


def _grid(D, time_grid, system):
    if time_grid is not None:
        return check_time_grid(time_grid)
    if D.time_grid is not None:
        return D.time_grid
    return default_time_grid(system.cfg.t_max)


@dataclass
class ConservativenessEstimate:
    """Monte Carlo estimate of ``max_t max_z vol(Phi(t, z) minus A(phi(t, [z])))``."""

    value: float
    std_error: float
    per_time: dict
    mc_samples: int
    argmax: tuple = None


def conservativeness_volume(system, D, cover, time_grid=None, mc_samples=10000, seed=0,
                            preimage_samples=1000, bloat=0.0):
    """Excess volume of the discrete images over the sampled true images.

    The true image ``A(phi(t, [z]))`` is the set of cells hit by flowing
    ``preimage_samples`` points of cell ``z`` (optionally bloated by a ball of
    radius ``bloat``). The excess volume is ``vol(M)`` times the fraction of
    ``mc_samples`` uniform points of ``M`` whose cell lies in ``Phi(t, z)``
    but not in that image.
    """
    check_count(mc_samples, minimum=100, name="mc_samples")
    grid = _grid(D, time_grid, system)
    space = system.space
    pre = _cell_samples(cover, preimage_samples * len(cover), seed)
    hits = _forward_cells(system, cover, pre, grid, bloat, seed)
    mc = space.sample(mc_samples, make_rng(seed, "volume"))
    mc_cells = _abstract_or_raise(cover, mc)
    vol = space.volume
    per_time = {}
    best = (-1.0, 0.0, None)
    for k, t in enumerate(grid):
        row = {}
        for z in D.states:
            excess = np.array(sorted(D.phi(float(t), z) - hits[z][k]))
            p = float(np.isin(mc_cells, excess).mean()) if excess.size else 0.0
            est = vol * p
            se = vol * math.sqrt(p * (1.0 - p) / mc_samples)
            row[z] = (est, se)
            if est > best[0]:
                best = (est, se, (float(t), z))
        per_time[float(t)] = row
    return ConservativenessEstimate(max(best[0], 0.0), best[1], per_time, mc_samples, best[2])


def discrete_reach(D, init, t):
    """``Union of Phi(t, z)`` over ``z`` in ``init``."""
    out = set()
    for z in init:
        out |= D.phi(t, z)
    return frozenset(out)


@dataclass
class SafetyVerdict:
    safe: bool
    time: float = None
    cells: frozenset = frozenset()
    init_cells: frozenset = frozenset()
    unsafe_cells: frozenset = frozenset()

    @property
    def label(self):
        return "Safe" if self.safe else "PossiblyUnsafe"


def cells_meeting(cover, region, n=400, seed=0, label="region"):
    """Cells whose sample meets ``region``, plus the cells of points sampled in ``region``."""
    found = set()
    for z in range(len(cover)):
        P = sample_cell(cover, z, n, seed)
        if region.contains(P).any():
            found.add(z)
    R = region.sample(n, make_rng(seed, label), cover.space)
    z = cover.abstract(R)
    found.update(int(v) for v in z[z >= 0])
    return frozenset(found)


def verify_safety(D, cover, init_region, unsafe_region, horizon, time_grid=None, seed=0,
                  samples=400):
    """Safe iff no grid time ``t <= horizon`` lets the initial cells reach an unsafe cell.

    Raises
    ------
    NotOverApproximation
        If ``D`` does not carry the ``"over"`` (or ``"complete"``) tag.
    """
    if not ({OVER, COMPLETE} & D.tags):
        raise NotOverApproximation("safety queries need an over-approximating system")
    horizon = check_time(horizon, name="horizon")
    grid = D.time_grid if time_grid is None else check_time_grid(time_grid)
    grid = np.unique(np.concatenate([[0.0], [] if grid is None else grid]))
    grid = grid[grid <= horizon]
    init = cells_meeting(cover, init_region, samples, seed, "init")
    unsafe = cells_meeting(cover, unsafe_region, samples, seed, "unsafe")
    for t in grid:
        hit = discrete_reach(D, init, float(t)) & unsafe
        if hit:
            return SafetyVerdict(False, float(t), hit, init, unsafe)
    return SafetyVerdict(True, None, frozenset(), init, unsafe)
