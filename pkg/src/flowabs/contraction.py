"""Contraction-based abstraction on a cover by metric disks.

A Finsler-Lyapunov function ``V(x, w)`` on tangent vectors, decreasing along
the variational flow, bounds how fast trajectories approach each other.
Covering the state space by disks then lets one simulated trajectory per
disk center stand in for the whole disk.
"""
import math
from dataclasses import dataclass

import numpy as np

from ._random import make_rng
from ._validation import check_time
from .base import BaseAbstraction
from .core import OVER, DiscreteSystem
from .dynamics import flow, variational_flow
from .exceptions import NotContractive
from .expr import compile_expression, compile_scalar
from .geometry import EUCLIDEAN, Metric, MetricBall, build_ordered_cover


class FinslerLyapunov:
    """Function ``V(x, w)`` on (base point, tangent vector) pairs.

    Parameters
    ----------
    V : callable ``(X, W) -> (n,)``
    p : int
        Homogeneity degree.
    P : array-like, optional
        Set by :meth:`quadratic`; ``V = w^T P w`` and ``p = 2``.
    """

    def __init__(self, V, p, P=None, name="user"):
        self.V = V
        self.p = int(p)
        if self.p < 1:
            raise ValueError("homogeneity degree p must be a positive integer")
        self.P = None if P is None else np.asarray(P, dtype=float)
        self.name = name

    @classmethod
    def quadratic(cls, P):
        P = np.asarray(P, dtype=float)
        Metric(P)  # validates symmetric positive definite

        def V(X, W):
            return np.einsum("ni,ij,nj->n", np.atleast_2d(W), P, np.atleast_2d(W))

        return cls(V, 2, P, name="quadratic")

    @classmethod
    def euclidean(cls, dim):
        return cls.quadratic(np.eye(dim))

    def __call__(self, X, W):
        return np.asarray(self.V(np.atleast_2d(X), np.atleast_2d(W)), dtype=float)

    def metric(self):
        """The induced distance; only constant quadratic forms are supported."""
        if self.P is None:
            raise ValueError("the induced metric is only available for quadratic forms")
        if np.allclose(self.P, np.eye(len(self.P))):
            return EUCLIDEAN
        return Metric(self.P)


@dataclass
class FinslerReport:
    positivity: bool
    homogeneity: bool
    triangle: bool
    worst_positivity: float
    worst_homogeneity: float
    worst_triangle: float
    n_samples: int

    @property
    def passed(self):
        return self.positivity and self.homogeneity and self.triangle


def check_finsler_conditions(spec, dim, n_samples=500, seed=0, space=None, tol=1e-9):
    """Sampled positivity, degree-``p`` homogeneity and ``p``-th-root triangle inequality.

    The strict triangle inequality is tested non-strictly with margin ``tol``.
    """
    rng = make_rng(seed, "finsler")
    X = space.sample(n_samples, rng) if space is not None else rng.uniform(-1, 1, (n_samples, dim))
    W = rng.standard_normal((n_samples, dim))
    U = rng.standard_normal((n_samples, dim))
    VW = spec(X, W)
    worst_pos = float(VW.min())
    worst_hom = 0.0
    for lam in (0.5, 2.0, 10.0):
        expect = lam ** spec.p * VW
        err = np.abs(spec(X, lam * W) - expect) / (1.0 + np.abs(expect))
        worst_hom = max(worst_hom, float(err.max()))
    root = 1.0 / spec.p
    lhs = np.maximum(spec(X, W + U), 0) ** root
    rhs = np.maximum(VW, 0) ** root + np.maximum(spec(X, U), 0) ** root
    worst_tri = float(np.max(lhs - rhs))
    return FinslerReport(worst_pos > 0, worst_hom <= tol, worst_tri <= tol,
                         worst_pos, worst_hom, worst_tri, n_samples)


def make_alpha(alpha):
    """Normalize ``alpha`` to ``(callable, linear_rate or None)``.

    Accepts a number ``c`` (meaning ``alpha(s) = c s``), an expression in
    ``s``, or a vectorized callable.
    """
    if isinstance(alpha, (int, float)):
        c = float(alpha)
        return (lambda s: c * np.asarray(s, dtype=float)), c
    fn = compile_scalar(alpha) if isinstance(alpha, str) else alpha
    s = np.linspace(0.01, 10.0, 50)
    ratio = np.asarray(fn(s), dtype=float) / s
    rate = float(ratio[0]) if np.allclose(ratio, ratio[0], rtol=1e-9, atol=1e-12) else None
    return fn, rate


@dataclass
class ContractionCertificate:
    """Outcome of the sampled differential contraction test.

    ``envelope(t, r)`` bounds ``rho(phi(t, x1), phi(t, x2))`` given
    ``rho(x1, x2) = r``; it satisfies ``envelope(0, r) = r``.
    """

    alpha: object
    envelope: object
    checked_points: int
    verdict: bool
    worst_margin: float
    derivatives: np.ndarray = None
    values: np.ndarray = None
    rate: float = None


def make_envelope(rate, p, envelope="auto", alpha=None):
    """Radius bound ``beta(t, r)``.

    ``auto``: ``exp(-rate t / p) r`` when ``alpha`` is linear, else ``r``.
    ``static``: ``alpha(r)`` for ``t > 0``.
    Any other string is an expression in ``t`` and ``r``.
    """
    if envelope == "auto":
        if rate is not None and rate > 0:
            return lambda t, r: math.exp(-rate * t / p) * r
        return lambda t, r: r
    if envelope == "static":
        return lambda t, r: r if t == 0 else float(alpha(np.asarray(r)))
    expr = compile_expression(envelope, ["t", "r"])
    return lambda t, r: r if t == 0 else float(expr(np.array([[t, r]]))[0])


def check_contraction_inequality(field, spec, alpha, n_samples=500, seed=0, space=None,
                                 cfg=None, tol=1e-4, envelope="auto"):
    """Sampled ``d/dt V(x(t), w(t)) at t=0 <= -alpha(V(x, w)) + tol`` for unit ``w``.

    The derivative is a central difference of ``V`` along the variational
    flow over one integration step in each time direction.
    """
    from .dynamics import FlowConfig

    cfg = cfg or FlowConfig()
    alpha_fn, rate = make_alpha(alpha)
    grid = np.linspace(0.0, 100.0, 201)
    a = np.asarray(alpha_fn(grid), dtype=float)
    if abs(a[0]) > 1e-12 or np.any(np.diff(a) < -1e-12):
        raise ValueError("alpha must be nondecreasing with alpha(0) = 0")
    rng = make_rng(seed, "contraction")
    dim = field.dim
    X = space.sample(n_samples, rng) if space is not None else rng.uniform(-1, 1, (n_samples, dim))
    W = rng.standard_normal((n_samples, dim))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    h = cfg.step
    Xp, Wp = variational_flow(field, cfg, h, X, W)
    Xm, Wm = variational_flow(field, cfg, -h, X, W)
    deriv = (spec(Xp, Wp) - spec(Xm, Wm)) / (2 * h)
    values = spec(X, W)
    margin = deriv + np.asarray(alpha_fn(values), dtype=float)
    worst = float(margin.max())
    return ContractionCertificate(alpha_fn, make_envelope(rate, spec.p, envelope, alpha_fn),
                                  n_samples, worst <= tol, worst, deriv, values, rate)


def build_disk_cover(space, metric=EUCLIDEAN, radius=0.5, coverage_samples=2000, seed=0):
    """Axis-aligned grid of metric disks covering ``space``.

    The grid spacing keeps the metric half-diagonal of every grid cell
    strictly below ``radius`` (using ``sqrt(lambda_max(P))`` as the stretch
    bound), so each point lies within ``radius`` of its cell's center.

    Returns
    -------
    cover : OrderedCover of MetricBall, lexicographic in the grid index
    centers : ndarray (n_cells, d)
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    d = space.dim
    stretch = metric.max_stretch
    counts = [int(math.floor(L * math.sqrt(d) * stretch / (2 * radius))) + 1
              for L in space.period]
    axes = [space.lower[i] + (np.arange(n) + 0.5) * space.period[i] / n
            for i, n in enumerate(counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.column_stack([m.ravel() for m in mesh])
    balls = [MetricBall(c, radius, metric, space) for c in centers]
    return build_ordered_cover(space, balls, coverage_samples, seed), centers


def compute_phi_ex2(cover, centers, radii, system, cert, t, z, slack=1e-6, center_image=None):
    """Cells whose disk meets ``D(phi(t, x_z), envelope(t, r_z))``.

    One trajectory (from the center of cell ``z``) is simulated per call,
    unless its endpoint ``center_image`` is supplied.
    """
    if not cert.verdict:
        raise NotContractive("contraction certificate failed; refusing to build Phi")
    t = check_time(t)
    if center_image is None:
        y = flow(system.field, system.space, system.cfg, t, centers[z])
    else:
        y = np.asarray(center_image, dtype=float)
    beta = cert.envelope(t, radii[z])
    metric = cover.regions[0].metric
    dist = metric.distance(y, centers, system.space)
    return set(np.flatnonzero(dist < beta + np.asarray(radii) + slack).tolist())


def check_envelope(system, metric, envelope, n_pairs=1000, time_grid=(0.5, 1.0, 2.0), seed=0,
                   max_offset=0.2):
    """Largest ``rho(phi_t x1, phi_t x2) - envelope(t, rho(x1, x2))`` over sampled pairs."""
    rng = make_rng(seed, "envelope")
    X1 = system.space.sample(n_pairs, rng)
    X2 = system.space.canonicalize(X1 + rng.uniform(-max_offset, max_offset, X1.shape))
    if not system.space.is_torus:
        X2 = np.clip(X2, system.space.lower, system.space.upper)
    r0 = metric.distance(X1, X2, system.space)
    grid = np.asarray(time_grid, dtype=float)
    Y1 = system.flow(grid, X1)
    Y2 = system.flow(grid, X2)
    worst = -np.inf
    for k, t in enumerate(grid):
        rt = metric.distance(Y1[k], Y2[k], system.space)
        bound = np.array([envelope(float(t), r) for r in r0])
        worst = max(worst, float(np.max(rt - bound)))
    return worst


class ContractionAbstraction(BaseAbstraction):
    """Disk-cover abstraction driven by a contraction certificate.

    Parameters
    ----------
    radius : float or sequence of float
        Uniform disk radius used to build the grid, or per-cell radii for
        an explicit ``centers`` list.
    lyapunov : FinslerLyapunov or None
        Defaults to ``V(x, w) = |w|^2``.
    alpha : float, str or callable
        Decay function in the differential inequality.
    envelope : {"auto", "static"} or str
    centers : array-like or None
        Explicit disk centers (otherwise a covering grid is built).
    certificate_samples : int
    tol : float
        Tolerance of the differential inequality.

    Attributes
    ----------
    cover_, centers_, radii_, finsler_, certificate_, discrete_system_
    """

    def __init__(self, radius=0.25, lyapunov=None, alpha=0.0, envelope="auto", centers=None,
                 certificate_samples=500, tol=1e-4, coverage_samples=2000, time_grid=None,
                 seed=0):
        self.radius = radius
        self.lyapunov = lyapunov
        self.alpha = alpha
        self.envelope = envelope
        self.centers = centers
        self.certificate_samples = certificate_samples
        self.tol = tol
        self.coverage_samples = coverage_samples
        self.time_grid = time_grid
        self.seed = seed

    def _fit(self, system):
        spec = self.lyapunov or FinslerLyapunov.euclidean(system.space.dim)
        metric = spec.metric()
        self.finsler_ = check_finsler_conditions(spec, system.space.dim,
                                                 self.certificate_samples, self.seed,
                                                 system.space)
        self.certificate_ = check_contraction_inequality(
            system.field, spec, self.alpha, self.certificate_samples, self.seed,
            system.space, system.cfg, self.tol, self.envelope)
        if self.centers is None:
            self.cover_, self.centers_ = build_disk_cover(system.space, metric, self.radius,
                                                          self.coverage_samples, self.seed)
            self.radii_ = np.full(len(self.centers_), float(self.radius))
        else:
            self.centers_ = np.atleast_2d(np.asarray(self.centers, dtype=float))
            self.radii_ = np.broadcast_to(np.asarray(self.radius, dtype=float),
                                          (len(self.centers_),)).copy()
            balls = [MetricBall(c, r, metric, system.space)
                     for c, r in zip(self.centers_, self.radii_)]
            self.cover_ = build_ordered_cover(system.space, balls, self.coverage_samples,
                                              self.seed)
        if not (self.finsler_.passed and self.certificate_.verdict):
            raise NotContractive(
                f"contraction inequality violated by {self.certificate_.worst_margin:.3g}"
                if not self.certificate_.verdict else "Finsler-Lyapunov conditions failed")
        cover, centers, radii, cert = self.cover_, self.centers_, self.radii_, self.certificate_
        grid = self.time_grid_
        # one trajectory per center, shared by all grid times
        paths = system.flow(grid, centers)

        def phi(t, z):
            k = int(np.searchsorted(grid, t))
            image = paths[k, z] if k < len(grid) and grid[k] == t else None
            return compute_phi_ex2(cover, centers, radii, system, cert, t, z,
                                   center_image=image)

        self.discrete_system_ = DiscreteSystem(range(len(cover)), phi, self.time_grid_, {OVER},
                                               cover.labels)
