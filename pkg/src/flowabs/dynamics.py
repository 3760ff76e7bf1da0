"""Numerical flows: fixed-step RK4, matrix-exponential linear flows,
variational dynamics and level-crossing detection.

All integrators are batched: a point array of shape ``(n, d)`` is advanced
in lock step, and a single point of shape ``(d,)`` round-trips to ``(d,)``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ._validation import check_points, check_square, check_time
from .exceptions import Divergence
from .expr import compile_expression, default_variables


class VectorField:
    """Right-hand side ``xi`` of ``dx/dt = xi(x)``.

    Parameters
    ----------
    dim : int
    rhs : callable
        Vectorized map ``(n, d) -> (n, d)``.
    jacobian : callable, optional
        Vectorized map ``(n, d) -> (n, d, d)``. Central differences with
        step ``1e-6 * (1 + |x|)`` are used when omitted.
    name : str, optional
    """

    def __init__(self, dim, rhs, jacobian=None, name="custom", params=None):
        self.dim = int(dim)
        self.rhs = rhs
        self._jacobian = jacobian
        self.name = name
        self.params = params or {}

    def __call__(self, X):
        return self.rhs(X)

    def __repr__(self):
        return f"VectorField({self.name}, dim={self.dim})"

    @property
    def has_jacobian(self):
        return self._jacobian is not None

    def jacobian(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self._jacobian is not None:
            return self._jacobian(X)
        n, d = X.shape
        h = 1e-6 * (1.0 + np.linalg.norm(X, axis=1))
        J = np.empty((n, d, d))
        for k in range(d):
            E = np.zeros_like(X)
            E[:, k] = h
            J[:, :, k] = (self.rhs(X + E) - self.rhs(X - E)) / (2 * h[:, None])
        return J

    def reversed(self):
        """The field ``-xi``; its flow is the backward flow of ``xi``."""
        jac = None if self._jacobian is None else (lambda X: -self._jacobian(X))
        return VectorField(self.dim, lambda X: -self.rhs(X), jac, name=f"-{self.name}",
                           params=self.params)

    # builtin systems with closed-form solutions, used as oracles

    @classmethod
    def linear(cls, A, name="linear"):
        A = check_square(A)
        return cls(A.shape[0], lambda X: np.atleast_2d(X) @ A.T,
                   lambda X: np.broadcast_to(A, (len(np.atleast_2d(X)),) + A.shape).copy(),
                   name=name, params={"A": A.tolist()})

    @classmethod
    def radial_contraction(cls, dim=2):
        """``dx/dt = -x``."""
        return cls.linear(-np.eye(dim), name="radial")

    @classmethod
    def rotation(cls):
        """``dx/dt = y, dy/dt = -x`` (clockwise rigid rotation)."""
        return cls.linear([[0.0, 1.0], [-1.0, 0.0]], name="rotation")

    @classmethod
    def zero(cls, dim=2):
        return cls.linear(np.zeros((dim, dim)), name="zero")

    @classmethod
    def damped_pendulum(cls, damping=0.5):
        c = float(damping)

        def rhs(X):
            X = np.atleast_2d(X)
            return np.column_stack([X[:, 1], -np.sin(X[:, 0]) - c * X[:, 1]])

        def jac(X):
            X = np.atleast_2d(X)
            J = np.zeros((len(X), 2, 2))
            J[:, 0, 1] = 1.0
            J[:, 1, 0] = -np.cos(X[:, 0])
            J[:, 1, 1] = -c
            return J

        return cls(2, rhs, jac, name="pendulum", params={"damping": c})

    @classmethod
    def gradient_circle(cls):
        """``dtheta/dt = -sin(theta)`` on the circle: attractor at 0, repeller at pi."""
        return cls(1, lambda X: -np.sin(np.atleast_2d(X)),
                   lambda X: (-np.cos(np.atleast_2d(X)))[:, :, None], name="circle")

    @classmethod
    def from_expressions(cls, expressions, variables=None):
        variables = list(variables or default_variables(len(expressions)))
        if len(variables) != len(expressions):
            raise ValueError("one expression per state variable required")
        comps = [compile_expression(e, variables) for e in expressions]
        return cls(len(comps), lambda X: np.column_stack([f(np.atleast_2d(X)) for f in comps]),
                   name="expression", params={"expressions": list(expressions)})


BUILTINS = {
    "radial": VectorField.radial_contraction,
    "rotation": VectorField.rotation,
    "zero": VectorField.zero,
    "pendulum": VectorField.damped_pendulum,
    "circle": VectorField.gradient_circle,
    "linear": VectorField.linear,
}


@dataclass(frozen=True)
class FlowConfig:
    """Fixed-step RK4 settings; ``t_max`` bounds event searches and limit classification."""

    step: float = 1e-3
    t_max: float = 10.0
    method: str = "rk4"

    def __post_init__(self):
        if not self.step > 0 or not self.t_max > 0:
            raise ValueError("step and t_max must be positive")
        if self.step > self.t_max:
            raise ValueError("step must not exceed t_max")
        if self.method.lower() != "rk4":
            raise ValueError("only the fixed-step 'rk4' method is available")


def rk4_step(rhs, X, h):
    k1 = rhs(X)
    k2 = rhs(X + 0.5 * h * k1)
    k3 = rhs(X + 0.5 * h * k2)
    k4 = rhs(X + h * k3)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Stepper:
    """Advance a batch on the uniform grid ``k * h`` with torus wrap and box checks."""

    def __init__(self, rhs, space, h):
        self.rhs = rhs
        self.space = space
        self.h = h

    def post(self, X):
        if self.space is None:
            return X
        if self.space.is_torus:
            return self.space.canonicalize(X)
        bad = ~self.space.contains(X, tol=1e-6)
        if bad.any():
            raise Divergence(f"trajectory left the box state space at {X[bad][0].tolist()}")
        return X

    def full(self, X):
        return self.post(rk4_step(self.rhs, X, self.h))

    def partial(self, X, tau):
        if tau <= 0:
            return X
        return self.post(rk4_step(self.rhs, X, tau))


def _split(t, h):
    """Full step count and remainder with ``k * h + rem == t``, tolerant to rounding."""
    k = int(math.floor(t / h + 1e-9))
    rem = t - k * h
    if rem < 1e-12 * max(1.0, t):
        rem = 0.0
    return k, rem


def flow_many(field, space, cfg, times, X):
    """States at each time of ``times`` (all of one sign) for every row of ``X``.

    Returns an array of shape ``(len(times), n, d)``. Each output equals the
    single-time :func:`flow`: full steps of size ``cfg.step`` followed by one
    shortened step landing on the target.
    """
    X = check_points(X, field.dim)
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        return np.empty((0,) + X.shape)
    if np.all(times <= 0):
        rhs, ts = field.reversed().rhs, -times
    elif np.all(times >= 0):
        rhs, ts = field.rhs, times
    else:
        raise ValueError("flow_many needs times of a single sign")
    stepper = _Stepper(rhs, space, cfg.step)
    if space is not None:
        X = space.canonicalize(X)
    out = np.empty((len(ts),) + X.shape)
    order = np.argsort(ts, kind="stable")
    state, k_done = X.copy(), 0
    for idx in order:
        k, rem = _split(ts[idx], cfg.step)
        while k_done < k:
            state = stepper.full(state)
            k_done += 1
        out[idx] = stepper.partial(state, rem)
    return out


def flow(field, space, cfg, t, x):
    """``phi(t, x)`` by fixed-step RK4; negative ``t`` integrates ``-xi``."""
    t = check_time(t, allow_negative=True)
    single = np.ndim(x) == 1
    X = check_points(x, field.dim)
    if t == 0:
        Y = X if space is None else space.canonicalize(X)
    else:
        Y = flow_many(field, space, cfg, [t], X)[0]
    return Y[0] if single else Y


def trajectory(field, space, cfg, x, times):
    """States of a single start point at the given times, shape ``(len(times), d)``."""
    return flow_many(field, space, cfg, times, check_points(x, field.dim))[:, 0, :]


def linear_flow(A, t, x):
    """``exp(tA) x`` via the scaling-and-squaring matrix exponential."""
    A = check_square(A)
    t = check_time(t, allow_negative=True)
    x = np.asarray(x, dtype=float)
    if t == 0:
        return x.copy()
    E = expm(t * A)
    return x @ E.T


def variational_flow(field, cfg, t, x, w, space=None):
    """Jointly integrate ``x' = xi(x)`` and ``w' = Dxi(x) w``; returns ``(x(t), w(t))``."""
    t = check_time(t, allow_negative=True)
    single = np.ndim(x) == 1
    X = check_points(x, field.dim)
    W = check_points(w, field.dim, name="w")
    if np.any(np.linalg.norm(W, axis=1) == 0):
        raise ValueError("perturbation w must be nonzero")
    if t == 0:
        return (X[0].copy(), W[0].copy()) if single else (X.copy(), W.copy())
    d = field.dim
    sign = 1.0 if t > 0 else -1.0

    def rhs(S):
        P, V = S[:, :d], S[:, d:]
        J = field.jacobian(P)
        return sign * np.hstack([field.rhs(P), np.einsum("nij,nj->ni", J, V)])

    S = np.hstack([X, W])
    k, rem = _split(abs(t), cfg.step)
    for _ in range(k):
        S = rk4_step(rhs, S, cfg.step)
        _wrap_state(S, space, d)
    if rem:
        S = rk4_step(rhs, S, rem)
        _wrap_state(S, space, d)
    if single:
        return S[0, :d], S[0, d:]
    return S[:, :d], S[:, d:]


def _wrap_state(S, space, d):
    if space is not None and space.is_torus:
        S[:, :d] = space.canonicalize(S[:, :d])


def first_crossing_times(field, space, cfg, X, g, c, t_max=None):
    """Batched first time ``g(phi(t, x)) = c`` within ``[0, t_max]``; NaN where none.

    Sign changes are detected at integration steps and refined by bisection
    on a single shortened RK4 step to a time tolerance of ``1e-9 * t_max``.
    """
    X = check_points(X, field.dim)
    t_max = cfg.t_max if t_max is None else float(t_max)
    h = cfg.step
    stepper = _Stepper(field.rhs, space, h)
    state = X.copy() if space is None else space.canonicalize(X)
    s0 = g(state) - c
    result = np.full(len(X), np.nan)
    result[s0 == 0] = 0.0
    active = s0 != 0
    sign0 = np.sign(s0)
    tol = 1e-9 * t_max
    n_steps = int(math.ceil(t_max / h - 1e-9))
    t = 0.0
    for step in range(n_steps):
        if not active.any():
            break
        h_k = min(h, t_max - t)
        idx = np.flatnonzero(active)
        prev = state[idx]
        nxt = stepper.partial(prev, h_k)
        s = (g(nxt) - c) * sign0[idx]
        hit = s <= 0
        if hit.any():
            hi_idx = idx[hit]
            lo = np.zeros(hit.sum())
            hi = np.full(hit.sum(), h_k)
            base = prev[hit]
            while np.max(hi - lo) > tol:
                mid = 0.5 * (lo + hi)
                Y = rk4_step(field.rhs, base, mid[:, None])
                if space is not None:
                    Y = space.canonicalize(Y)
                sm = (g(Y) - c) * sign0[hi_idx]
                crossed = sm <= 0
                hi = np.where(crossed, mid, hi)
                lo = np.where(crossed, lo, mid)
            result[hi_idx] = t + hi
            active[hi_idx] = False
        state[idx] = nxt
        t += h_k
    return result


def first_crossing_time(field, space, cfg, x, g, c, t_max=None):
    """Least ``t`` in ``[0, t_max]`` with ``g(phi(t, x)) = c``, or ``None``."""
    r = first_crossing_times(field, space, cfg, check_points(x, field.dim), g, c, t_max)[0]
    return None if np.isnan(r) else float(r)
