"""State spaces, regions, ordered covers and the min-index abstraction map."""
import itertools
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from ._random import make_rng, quasi_uniform, unit_ball
from ._validation import check_points
from .exceptions import CoverageGap, EmptyRegion, NotCovered

#: Rejection-sampling budget: at most this many candidate draws per requested point.
REJECTION_BUDGET = 200


@dataclass(frozen=True)
class StateSpace:
    """Compact coordinate domain: a box or a flat torus.

    Parameters
    ----------
    kind : {"box", "torus"}
    bounds : sequence of (lower, upper)
        One pair per dimension. For a torus, coordinate ``i`` is identified
        modulo ``upper[i] - lower[i]``.
    """

    kind: str
    bounds: tuple

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("box", "torus"):
            raise ValueError(f"unknown state space kind {self.kind!r}")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds:
            raise ValueError("state space needs at least one dimension")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"bounds must satisfy lower < upper, got ({lo}, {hi})")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def box(cls, *bounds):
        return cls("box", bounds)

    @classmethod
    def torus(cls, *bounds):
        return cls("torus", bounds)

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def lower(self):
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self):
        return np.array([b[1] for b in self.bounds])

    @property
    def period(self):
        return self.upper - self.lower

    @property
    def is_torus(self):
        return self.kind == "torus"

    @property
    def volume(self):
        return float(np.prod(self.period))

    @property
    def diameter(self):
        if self.is_torus:
            return float(np.linalg.norm(self.period / 2))
        return float(np.linalg.norm(self.period))

    def canonicalize(self, X):
        """Map torus coordinates to their representative in ``[lower, upper)``."""
        X = np.asarray(X, dtype=float)
        if not self.is_torus:
            return X
        lo, per = self.lower, self.period
        Y = lo + np.mod(X - lo, per)
        return np.where(Y >= lo + per, lo, Y)

    def contains(self, X, tol=1e-9):
        X = np.atleast_2d(X)
        if self.is_torus:
            return np.ones(len(X), dtype=bool)
        slack = tol * self.period
        return np.all((X >= self.lower - slack) & (X <= self.upper + slack), axis=1)

    def displacement(self, X, Y):
        """Componentwise ``Y - X``, wrapped to the shortest torus representative."""
        D = np.asarray(Y, dtype=float) - np.asarray(X, dtype=float)
        if self.is_torus:
            per = self.period
            D = D - per * np.round(D / per)
        return D

    def sample(self, n, rng):
        return quasi_uniform(n, self.lower, self.upper, rng)


class Metric:
    """Distance on a state space induced by a constant quadratic form.

    ``rho(x, y) = sqrt((y - x)^T P (y - x))`` with ``P = I`` for the Euclidean
    case. On a torus the shortest lifted representative is used.
    """

    def __init__(self, P=None, name=None):
        self.P = None if P is None else np.asarray(P, dtype=float)
        if self.P is not None:
            if self.P.shape[0] != self.P.shape[1] or not np.allclose(self.P, self.P.T):
                raise ValueError("quadratic form must be a symmetric matrix")
            if np.linalg.eigvalsh(self.P).min() <= 0:
                raise ValueError("quadratic form must be positive definite")
        self.name = name or ("euclidean" if P is None else "quadratic")

    def norm(self, D):
        D = np.asarray(D, dtype=float)
        if self.P is None:
            return np.linalg.norm(D, axis=-1)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", D, self.P, D), 0.0))

    def distance(self, X, Y, space=None):
        if space is None or not space.is_torus:
            return self.norm(np.asarray(Y, dtype=float) - np.asarray(X, dtype=float))
        D = space.displacement(X, Y)
        if self.P is None:
            return self.norm(D)
        # the componentwise wrap is not always P-shortest; scan the neighbouring lifts
        per = space.period
        best = self.norm(D)
        for shift in itertools.product((-1, 0, 1), repeat=space.dim):
            if any(shift):
                best = np.minimum(best, self.norm(D + np.asarray(shift) * per))
        return best

    @property
    def max_stretch(self):
        """Largest ``rho / |.|_2`` ratio, i.e. ``sqrt(lambda_max(P))``."""
        if self.P is None:
            return 1.0
        return float(np.sqrt(np.linalg.eigvalsh(self.P).max()))

    def unit_ball_map(self, dim):
        """Matrix ``T`` with ``rho(0, T u) = |u|``, mapping the Euclidean ball onto the metric ball."""
        if self.P is None:
            return np.eye(dim)
        L = np.linalg.cholesky(self.P)
        return np.linalg.inv(L.T)

    def __repr__(self):
        return f"Metric({self.name})"


EUCLIDEAN = Metric()


class Region:
    """Membership-testable subset of the state space."""

    kind = "region"

    def contains(self, X):
        raise NotImplementedError

    def describe(self):
        return {}

    def _candidates(self, n, rng, space):
        return space.sample(n, rng)

    def sample(self, n, rng, space):
        """``n`` points of ``self`` inside ``space`` by rejection sampling."""
        out = []
        have = 0
        tries = 0
        batch = max(4 * n, 64)
        while have < n:
            if tries >= REJECTION_BUDGET * max(n, 1):
                raise EmptyRegion(
                    f"{self.kind} region: only {have} of {n} points found after {tries} draws")
            C = space.canonicalize(self._candidates(batch, rng, space))
            C = C[space.contains(C) & self.contains(C)]
            out.append(C)
            have += len(C)
            tries += batch
        return np.vstack(out)[:n]


class HyperRect(Region):
    """Closed axis-aligned box ``[lower, upper]``."""

    kind = "hyperrect"

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise ValueError("HyperRect needs lower <= upper of equal length")

    def contains(self, X):
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def corners(self):
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    @property
    def volume(self):
        return float(np.prod(self.upper - self.lower))

    def _candidates(self, n, rng, space):
        return quasi_uniform(n, self.lower, self.upper, rng)

    def describe(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


class MetricBall(Region):
    """Open ball ``{y : rho(center, y) < radius}``."""

    kind = "ball"

    def __init__(self, center, radius, metric=EUCLIDEAN, space=None):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        self.metric = metric
        self.space = space

    def contains(self, X):
        X = np.atleast_2d(X)
        return self.metric.distance(self.center, X, self.space) < self.radius

    def _candidates(self, n, rng, space):
        T = self.metric.unit_ball_map(self.center.size)
        return self.center + self.radius * unit_ball(n, self.center.size, rng) @ T.T

    def describe(self):
        return {"center": self.center.tolist(), "radius": self.radius, "metric": self.metric.name}


def project_to_level(func, grad, X, level, tol=1e-10, max_iter=60):
    """Newton-project points onto ``func == level`` along the gradient.

    Returns the projected points and a mask of those that converged.
    """
    X = np.array(X, dtype=float)
    ok = np.zeros(len(X), dtype=bool)
    for _ in range(max_iter):
        r = func(X) - level
        ok = np.abs(r) <= tol * (1.0 + abs(level))
        if ok.all():
            break
        G = grad(X)
        g2 = np.einsum("ij,ij->i", G, G)
        step = np.where(g2 > 0, r / np.where(g2 > 0, g2, 1.0), 0.0)
        X = np.where(ok[:, None], X, X - step[:, None] * G)
    return X, ok


class Slab(Region):
    """Intersection of bands ``lower_i <= V_i(x) <= upper_i``; infinite levels are unconstrained.

    ``functions`` and ``gradients`` are vectorized callables ``(n, d) -> (n,)``
    and ``(n, d) -> (n, d)``. Sampling mixes rejection samples with points
    projected onto each finite face and nudged just inside, so that
    boundary-adjacent behaviour is represented.
    """

    kind = "slab"
    face_fraction = 0.25
    face_offset = 1e-9

    def __init__(self, functions, gradients, lower, upper, index=None):
        self.functions = list(functions)
        self.gradients = list(gradients)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.index = index

    def values(self, X):
        X = np.atleast_2d(X)
        return np.column_stack([f(X) for f in self.functions])

    def contains(self, X):
        V = self.values(X)
        return np.all((V >= self.lower) & (V <= self.upper), axis=1)

    def sample(self, n, rng, space):
        faces = [(i, side) for i in range(len(self.functions)) for side in ("lower", "upper")
                 if np.isfinite(getattr(self, side)[i])]
        n_face = int(self.face_fraction * n) if faces else 0
        bulk = super().sample(n - n_face, rng, space)
        if n_face == 0:
            return bulk
        pieces = [bulk]
        need = n_face
        for attempt in range(8):
            if need <= 0:
                break
            picks = rng.integers(len(faces), size=need)
            base = bulk[rng.integers(len(bulk), size=need)]
            found = []
            for k, (i, side) in enumerate(faces):
                sel = base[picks == k]
                if not len(sel):
                    continue
                level = getattr(self, side)[i]
                P, ok = project_to_level(self.functions[i], self.gradients[i], sel, level)
                P = P[ok]
                if not len(P):
                    continue
                G = self.gradients[i](P)
                gn = np.linalg.norm(G, axis=1, keepdims=True)
                inward = -1.0 if side == "upper" else 1.0
                scale = self.face_offset * (1.0 + abs(level))
                P = P + inward * scale * G / np.where(gn > 0, gn ** 2, 1.0)
                P = space.canonicalize(P)
                found.append(P[space.contains(P, tol=0.0) & self.contains(P)])
            if found:
                F = np.vstack(found)
                pieces.append(F[:need])
                need -= len(F[:need])
        if need > 0:
            pieces.append(super().sample(need, rng, space))
        return np.vstack(pieces)

    def describe(self):
        return {"index": list(self.index) if self.index is not None else None,
                "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class Predicate(Region):
    """Region given by a named membership test.

    If ``representatives`` is given, sampling draws from those points (with
    replacement) instead of rejection sampling; this supports measure-zero
    cells such as equilibria.
    """

    kind = "predicate"

    def __init__(self, name, test, representatives=None):
        self.name = name
        self.test = test
        self.representatives = None if representatives is None else np.atleast_2d(
            np.asarray(representatives, dtype=float))

    def contains(self, X):
        return np.asarray(self.test(np.atleast_2d(X)), dtype=bool)

    def sample(self, n, rng, space):
        if self.representatives is None:
            return super().sample(n, rng, space)
        if not len(self.representatives):
            raise EmptyRegion(f"predicate {self.name!r} has no representatives")
        return self.representatives[rng.integers(len(self.representatives), size=n)]

    def describe(self):
        return {"name": self.name}


PartitionCheck = namedtuple("PartitionCheck", ["is_partition", "point", "pair"])


@dataclass(frozen=True, eq=False)
class OrderedCover:
    """Finite indexed family of regions covering the state space.

    Cell ``z`` is the integer position in ``regions``; ``labels`` carries an
    optional richer identifier per cell (level index vector, limit pair).
    """

    space: StateSpace
    regions: tuple
    labels: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if not self.regions:
            raise ValueError("a cover needs at least one region")
        labels = tuple(range(len(self.regions))) if self.labels is None else tuple(self.labels)
        if len(labels) != len(self.regions):
            raise ValueError("one label per region required")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.regions)

    def membership(self, X):
        """Boolean matrix ``(n_points, n_cells)``."""
        X = self.space.canonicalize(np.atleast_2d(X))
        return np.column_stack([r.contains(X) for r in self.regions])

    def abstract(self, X):
        """Min-index cell of every row of ``X``; ``-1`` where no region contains it."""
        M = self.membership(X)
        z = np.argmax(M, axis=1)
        return np.where(M.any(axis=1), z, -1)

    def cell_volumes(self, n=20000, seed=0):
        """Volume of each min-index cell, exact for axis-aligned partitions and Monte Carlo otherwise."""
        if all(isinstance(r, HyperRect) for r in self.regions):
            vols = np.array([r.volume for r in self.regions])
            if np.isclose(vols.sum(), self.space.volume):
                return vols
        X = self.space.sample(n, make_rng(seed, "cell-volumes"))
        z = self.abstract(X)
        return np.bincount(z[z >= 0], minlength=len(self)) / n * self.space.volume


def build_ordered_cover(space, regions, coverage_samples=1000, seed=0, labels=None):
    """Assemble an :class:`OrderedCover` after checking coverage by sampling.

    Raises
    ------
    CoverageGap
        If one of the ``coverage_samples`` quasi-uniform points lies in no region.
    """
    if not regions:
        raise ValueError("regions must be nonempty")
    if coverage_samples < 1:
        raise ValueError("coverage_samples must be >= 1")
    cover = OrderedCover(space, tuple(regions), labels)
    X = space.sample(coverage_samples, make_rng(seed, "coverage"))
    z = cover.abstract(X)
    if np.any(z < 0):
        raise CoverageGap(X[np.argmax(z < 0)])
    return cover


def abstract_point(cover, x):
    """Least cell index whose region contains ``x``."""
    x = check_points(x, cover.space.dim)
    z = cover.abstract(x)
    if z[0] < 0:
        raise NotCovered(x[0])
    return int(z[0])


def is_partition(cover, samples=2000, seed=0):
    """Sampled disjointness test.

    Returns ``PartitionCheck(True, None, None)`` or, on the first sampled point
    found in two cells, ``PartitionCheck(False, point, (z, z'))``.
    """
    X = cover.space.sample(samples, make_rng(seed, "partition"))
    M = cover.membership(X)
    multi = M.sum(axis=1) >= 2
    if not multi.any():
        return PartitionCheck(True, None, None)
    k = int(np.argmax(multi))
    z = np.flatnonzero(M[k])
    return PartitionCheck(False, X[k], (int(z[0]), int(z[1])))


def sample_cell(cover, z, n, seed=0):
    """``n`` reproducible points of region ``z``."""
    return cover.regions[z].sample(n, make_rng(seed, "cell", z), cover.space)
