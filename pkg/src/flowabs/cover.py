"""Over-approximation through a family of linear vector fields.

If ``xi(x)`` lies in ``pol{L_1 x, ..., L_l x}`` (nonnegative combinations
with unit Euclidean coefficient norm), the image of a cell is enclosed by
combining the linear flows ``exp(t L_i)`` of its points. The linear flows are
exact matrix exponentials, so only the cell and coefficient sets are sampled.
"""
import itertools

import numpy as np
from scipy.optimize import nnls

from ._random import make_rng, unit_ball
from ._validation import check_count, check_square, check_time
from .base import BaseAbstraction
from .core import OVER, DiscreteSystem
from .geometry import HyperRect, OrderedCover, build_ordered_cover, sample_cell
from .dynamics import linear_flow

ALPHA_NORMS = ("sphere", "simplex")


class LinearFamily:
    """Matrices ``L_1 .. L_l`` of a common dimension."""

    def __init__(self, matrices):
        mats = [check_square(m, name="L") for m in matrices]
        if not mats:
            raise ValueError("linear family needs at least one matrix")
        if len({m.shape for m in mats}) != 1:
            raise ValueError("all matrices must share one dimension")
        self.matrices = tuple(mats)

    def __len__(self):
        return len(self.matrices)

    @property
    def dim(self):
        return self.matrices[0].shape[0]

    @property
    def max_norm(self):
        return max(float(np.linalg.norm(m, 2)) for m in self.matrices)

    def images(self, X):
        """``(n, l, d)`` array of ``L_i x``."""
        return np.stack([X @ m.T for m in self.matrices], axis=1)

    def flows(self, t, X):
        """``(n, l, d)`` array of ``exp(t L_i) x``."""
        return np.stack([linear_flow(m, t, X) for m in self.matrices], axis=1)


def sample_alphas(l, n, rng, alpha_norm="sphere"):
    """``n`` random coefficient vectors plus the ``l`` vertices ``e_i``.

    ``sphere``: ``|g| / ||g||_2`` for Gaussian ``g`` (nonnegative unit sphere).
    ``simplex``: normalized exponentials (uniform on the probability simplex).
    """
    if alpha_norm not in ALPHA_NORMS:
        raise ValueError(f"alpha_norm must be one of {ALPHA_NORMS}")
    if alpha_norm == "sphere":
        A = np.abs(rng.standard_normal((n, l)))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
    else:
        A = rng.exponential(size=(n, l))
        A /= A.sum(axis=1, keepdims=True)
    return np.vstack([A, np.eye(l)])


def pol_sample(vectors, n=64, seed=0, alpha_norm="sphere", return_alphas=False):
    """Points ``sum_i alpha_i v_i`` over sampled admissible coefficients.

    Always includes the ``l`` vertices ``v_i`` themselves.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    check_count(n, minimum=0, name="n")
    A = sample_alphas(len(V), n, make_rng(seed, "pol"), alpha_norm)
    P = A @ V
    return (P, A) if return_alphas else P


def check_inclusion(field, family, n_points=500, tol=1e-6, seed=0, space=None,
                    alpha_norm="sphere"):
    """Sampled test of ``xi(x) in pol{L_1 x, ..., L_l x}``.

    For each sample, nonnegative least squares gives the best cone
    coefficients; they are rescaled onto the admissible coefficient set and
    the residual ``|xi(x) - sum alpha_i L_i x|`` must not exceed
    ``tol * (1 + |xi(x)|)``.

    Returns
    -------
    passed : bool
    worst : float
        Largest relative residual ``residual / (1 + |xi(x)|)``.
    """
    if field.dim != family.dim:
        raise ValueError("field and family dimensions differ")
    rng = make_rng(seed, "inclusion")
    if space is not None:
        X = space.sample(n_points, rng)
    else:
        X = rng.uniform(-1.0, 1.0, (n_points, field.dim))
    F = field.rhs(X)
    M = family.images(X)
    worst = 0.0
    for x_img, f in zip(M, F):
        alpha, _ = nnls(x_img.T, f)
        scale = np.linalg.norm(alpha) if alpha_norm == "sphere" else alpha.sum()
        approx = x_img.T @ (alpha / scale) if scale > 0 else np.zeros_like(f)
        rel = np.linalg.norm(f - approx) / (1.0 + np.linalg.norm(f))
        worst = max(worst, float(rel))
    return worst <= tol, worst


def default_bloat(step, family, t):
    """``2 * step**2 * max_i ||L_i|| * t``."""
    return 2.0 * step ** 2 * family.max_norm * t


def _cells_near(cover, P, radius):
    """Cells whose region meets the closed ball of ``radius`` around some row of ``P``.

    Exact for axis-aligned boxes (so the result grows monotonically with the
    radius); other regions are probed with ball samples.
    """
    space = cover.space
    hit = set()
    shifts = [np.zeros(space.dim)]
    if space.is_torus:
        shifts = [np.asarray(s) * space.period
                  for s in itertools.product((-1, 0, 1), repeat=space.dim)]
    probes = None
    for z, region in enumerate(cover.regions):
        if isinstance(region, HyperRect):
            d = np.full(len(P), np.inf)
            for s in shifts:
                Q = P + s
                gap = np.maximum(np.maximum(region.lower - Q, Q - region.upper), 0.0)
                d = np.minimum(d, np.linalg.norm(gap, axis=1))
            if np.any(d <= radius):
                hit.add(z)
        else:
            if probes is None:
                rng = make_rng(0, "probe")
                U = unit_ball(16 * len(P), space.dim, rng)
                probes = space.canonicalize(np.repeat(P, 16, axis=0) + radius * U)
            if region.contains(probes).any():
                hit.add(z)
    return hit


def compute_phi_ex1(cover, family, t, z, vertex_samples=64, alpha_samples=32, bloat=0.0,
                    seed=0, alpha_norm="sphere"):
    """Sampled ``A(pol{exp(t L_1)[z], ..., exp(t L_l)[z]})`` enlarged by ``bloat``.

    Box cells contribute their corners in addition to the random samples.
    """
    t = check_time(t)
    region = cover.regions[z]
    X = sample_cell(cover, z, vertex_samples, seed)
    if isinstance(region, HyperRect):
        X = np.vstack([region.corners(), X])
    V = family.flows(t, X)                                    # (m, l, d)
    A = sample_alphas(len(family), alpha_samples, make_rng(seed, "alpha", z), alpha_norm)
    P = np.einsum("al,mld->mad", A, V).reshape(-1, cover.space.dim)
    P = cover.space.canonicalize(P)
    cells = cover.abstract(P)
    out = set(cells[cells >= 0].tolist())
    if bloat > 0 or np.any(cells < 0):
        out |= _cells_near(cover, P, bloat)
    if not out:
        from .exceptions import NotCovered
        raise NotCovered(P[0])
    return out


class CoverAbstraction(BaseAbstraction):
    """Ordered-cover abstraction with a linear-family enclosure of the flow.

    Parameters
    ----------
    regions : OrderedCover or list of Region
    family : sequence of matrices
    vertex_samples, alpha_samples : int
        Cell points and coefficient draws per ``Phi`` evaluation.
    bloat : float or None
        Radius added around every image point; ``None`` uses
        :func:`default_bloat`.
    alpha_norm : {"sphere", "simplex"}
    inclusion_samples : int
    inclusion_tol : float
    time_grid : array-like or None
    seed : int

    Attributes
    ----------
    cover_ : OrderedCover
    family_ : LinearFamily
    inclusion_ : tuple (passed, worst relative residual)
    discrete_system_ : DiscreteSystem
        Tagged ``"over"`` only if the inclusion check passed.
    """

    def __init__(self, regions=None, family=None, vertex_samples=64, alpha_samples=32,
                 bloat=None, alpha_norm="sphere", inclusion_samples=500, inclusion_tol=1e-6,
                 coverage_samples=2000, time_grid=None, seed=0):
        self.regions = regions
        self.family = family
        self.vertex_samples = vertex_samples
        self.alpha_samples = alpha_samples
        self.bloat = bloat
        self.alpha_norm = alpha_norm
        self.inclusion_samples = inclusion_samples
        self.inclusion_tol = inclusion_tol
        self.coverage_samples = coverage_samples
        self.time_grid = time_grid
        self.seed = seed

    def _fit(self, system):
        if isinstance(self.regions, OrderedCover):
            self.cover_ = self.regions
        else:
            self.cover_ = build_ordered_cover(system.space, list(self.regions),
                                              self.coverage_samples, self.seed)
        self.family_ = (self.family if isinstance(self.family, LinearFamily)
                        else LinearFamily(self.family))
        self.inclusion_ = check_inclusion(system.field, self.family_, self.inclusion_samples,
                                          self.inclusion_tol, self.seed, system.space,
                                          self.alpha_norm)
        step = system.cfg.step

        def phi(t, z):
            b = default_bloat(step, self.family_, t) if self.bloat is None else self.bloat
            return compute_phi_ex1(self.cover_, self.family_, t, z, self.vertex_samples,
                                   self.alpha_samples, b, self.seed, self.alpha_norm)

        tags = {OVER} if self.inclusion_[0] else set()
        self.discrete_system_ = DiscreteSystem(range(len(self.cover_)), phi, self.time_grid_,
                                               tags, self.cover_.labels)
