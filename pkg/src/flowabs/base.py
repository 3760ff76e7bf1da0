"""Estimator base class shared by the four abstraction constructions.

Each construction follows the scikit-learn estimator contract: hyper-
parameters are stored verbatim by ``__init__``, ``fit(system)`` learns the
cover and the discrete flow map (attributes with a trailing underscore),
and ``transform(X)`` applies the abstraction map to continuous states.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points, check_time
from .core import (
    check_complete,
    check_over_approximation,
    check_under_approximation,
    conservativeness_volume,
    default_time_grid,
)
from .exceptions import NotCovered


class BaseAbstraction(BaseEstimator):
    """Common ``fit`` / ``transform`` / ``predict`` plumbing.

    Subclasses implement ``_fit(system)`` which must set ``cover_`` and
    ``discrete_system_``.
    """

    def fit(self, system, y=None):
        self.system_ = system
        grid = getattr(self, "time_grid", None)
        self.time_grid_ = (default_time_grid(system.cfg.t_max) if grid is None
                           else np.unique(np.asarray(grid, dtype=float)))
        self._fit(system)
        return self

    def _fit(self, system):
        raise NotImplementedError

    def transform(self, X):
        """Cell index of every row of ``X`` under the min-index rule."""
        check_is_fitted(self, "cover_")
        X = check_points(X, self.cover_.space.dim)
        z = self.cover_.abstract(X)
        if np.any(z < 0):
            raise NotCovered(X[np.argmax(z < 0)])
        return z

    def phi(self, t, z):
        check_is_fitted(self, "discrete_system_")
        return self.discrete_system_.phi(check_time(t), z)

    def predict(self, X, t):
        """Predicted successor cells ``Phi(t, A(x))`` for every row of ``X``."""
        return [self.phi(t, int(z)) for z in self.transform(X)]

    @property
    def n_cells_(self):
        check_is_fitted(self, "cover_")
        return len(self.cover_)

    def check(self, kind="over", n_points=1000, time_grid=None, seed=None):
        check_is_fitted(self, "discrete_system_")
        fn = {"over": check_over_approximation, "under": check_under_approximation,
              "complete": check_complete}[kind]
        grid = self.time_grid_ if time_grid is None else time_grid
        seed = getattr(self, "seed", 0) if seed is None else seed
        return fn(self.system_, self.discrete_system_, self.cover_, n_points, grid, seed)

    def certify(self, kind="complete", n_points=1000, time_grid=None, seed=None):
        """Run a soundness check and, if it passes, tag the discrete system accordingly."""
        report = self.check(kind, n_points, time_grid, seed)
        if report.verdict:
            self.discrete_system_.tags |= {"over", "under", "complete"} if kind == "complete" \
                else {kind}
        return report

    def conservativeness(self, mc_samples=10000, time_grid=None, seed=None, **kwargs):
        check_is_fitted(self, "discrete_system_")
        grid = self.time_grid_ if time_grid is None else time_grid
        seed = getattr(self, "seed", 0) if seed is None else seed
        return conservativeness_volume(self.system_, self.discrete_system_, self.cover_, grid,
                                       mc_samples, seed, **kwargs)
