"""Config-driven runs: build the system and construction, run checks, write artifacts.

Every random draw derives from the config's root ``seed`` through
:func:`flowabs._random.make_rng` labels, so artifacts depend only on the
config document (after a ``--seed`` override).
"""
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ._random import make_rng
from .config import constant
from .contraction import ContractionAbstraction, FinslerLyapunov
from .core import (COMPLETE, OVER, DynamicalSystem, check_complete,
                   check_over_approximation, check_under_approximation,
                   conservativeness_volume, default_time_grid, verify_safety)
from .cover import CoverAbstraction
from .dynamics import BUILTINS, FlowConfig, VectorField
from .exceptions import NotOverApproximation, UnsupportedDimension
from .expr import compile_expression, default_variables
from .geometry import EUCLIDEAN, HyperRect, MetricBall, Predicate, StateSpace
from .levelset import LevelFamily, LevelSetAbstraction
from .morse import MorseSmaleAbstraction, SingularElement
from . import reports

CHECKERS = {"over": check_over_approximation, "under": check_under_approximation,
            "complete": check_complete}


@dataclass
class RunReport:
    """Plain-text summary of one CLI invocation."""

    command: str
    config_hash: str
    n_cells: int = None
    construction: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    conservativeness: tuple = None
    safety: str = None
    timings: dict = field(default_factory=dict)
    exit_code: int = 0
    notes: list = field(default_factory=list)

    def text(self):
        lines = [f"command: {self.command}", f"config-hash: {self.config_hash}"]
        if self.n_cells is not None:
            lines.append(f"cells: {self.n_cells}")
        lines += [f"{k}: {v}" for k, v in self.construction.items()]
        lines += [f"check {k}: {v}" for k, v in self.checks.items()]
        if self.conservativeness is not None:
            v, se, arg = self.conservativeness
            lines.append(f"conservativeness: {v:.6g} (std error {se:.3g}, at {arg})")
        if self.safety is not None:
            lines.append(f"safety: {self.safety}")
        lines += self.notes
        lines += [f"time {k}: {v:.3f} s" for k, v in self.timings.items()]
        lines.append(f"exit: {self.exit_code}")
        return "\n".join(lines)


def _nums(values):
    return np.array([constant(v) for v in values], dtype=float)


def _matrix(rows):
    return np.array([_nums(r) for r in rows], dtype=float)


def build_space(cfg):
    s = cfg["space"]
    bounds = [tuple(_nums(b)) for b in s["bounds"]]
    return StateSpace(s["kind"], tuple(bounds))


def build_field(cfg, dim):
    s = cfg["system"]
    if "expressions" in s:
        return VectorField.from_expressions(s["expressions"], s.get("variables"))
    name = s["builtin"]
    if name == "linear":
        if "matrix" not in s:
            raise ValueError("system.matrix is required for the linear builtin")
        return VectorField.linear(_matrix(s["matrix"]))
    if name in ("radial", "zero"):
        return BUILTINS[name](s.get("dim", dim))
    if name == "pendulum":
        return BUILTINS[name](s.get("damping", 0.5))
    return BUILTINS[name]()


def variables(cfg, dim):
    return list(cfg["system"].get("variables") or default_variables(dim))


def build_system(cfg):
    space = build_space(cfg)
    fld = build_field(cfg, space.dim)
    if fld.dim != space.dim:
        raise ValueError(f"system dimension {fld.dim} does not match space dimension "
                         f"{space.dim}")
    num = cfg["numerics"]
    return DynamicalSystem(fld, space, FlowConfig(num["step"], num["t_max"]))


def time_grid(cfg):
    num = cfg["numerics"]
    spec = num.get("time_grid") or {}
    if "values" in spec:
        return np.unique(np.concatenate([[0.0], _nums(spec["values"])]))
    return default_time_grid(num["t_max"], spec.get("points", 32), spec.get("t_min"))


def build_region(spec, space, names):
    if "box" in spec:
        b = np.array([_nums(p) for p in spec["box"]])
        return HyperRect(b[:, 0], b[:, 1])
    if "ball" in spec:
        return MetricBall(_nums(spec["ball"]["center"]), constant(spec["ball"]["radius"]),
                          EUCLIDEAN, space)
    fn = compile_expression(spec["function"], names)
    lo = constant(spec.get("min", "-inf"))
    hi = constant(spec.get("max", "inf"))
    return Predicate(f"{lo} <= {spec['function']} <= {hi}",
                     lambda X: (fn(X) >= lo) & (fn(X) <= hi))


def build_estimator(cfg, system):
    kind = cfg["construction"]["kind"]
    p = dict(cfg["construction"].get("parameters", {}))
    seed = cfg["seed"]
    grid = time_grid(cfg)
    space = system.space
    names = variables(cfg, space.dim)
    if kind == "example1":
        regions = [build_region(r, space, names) for r in p.pop("regions")]
        matrices = [_matrix(m) for m in p.pop("matrices")]
        return CoverAbstraction(regions, matrices, time_grid=grid, seed=seed, **p)
    if kind == "example2":
        if "P" in p:
            p["lyapunov"] = FinslerLyapunov.quadratic(_matrix(p.pop("P")))
        if "centers" in p:
            p["centers"] = _matrix(p["centers"])
        return ContractionAbstraction(time_grid=grid, seed=seed, **p)
    if kind == "example3":
        elements = [SingularElement(e["name"], _nums(e["point"]), e.get("kind", "equilibrium"),
                                    e.get("period"), e.get("stability", "saddle"),
                                    e.get("capture_radius"))
                    for e in p.pop("elements")]
        return MorseSmaleAbstraction(elements, time_grid=grid, seed=seed, **p)
    levels = [_nums(lv) for lv in p.pop("levels")]
    grads = p.pop("gradients", None)
    family = LevelFamily.from_expressions(p.pop("functions"), levels, names, grads,
                                          close=p.pop("close_cover", True))
    return LevelSetAbstraction(family, time_grid=grid, seed=seed, **p)


class Run:
    """One invocation: holds the config, output directory and timings."""

    def __init__(self, cfg, out, command):
        self.cfg = cfg
        self.out = out
        self.hash = reports.config_hash(cfg)
        self.report = RunReport(command, self.hash)
        os.makedirs(out, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out, name)

    def timed(self, phase, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.report.timings[phase] = time.perf_counter() - t0

    def construct(self):
        system = build_system(self.cfg)
        est = build_estimator(self.cfg, system)
        self.timed("construct", est.fit, system)
        self.report.n_cells = len(est.cover_)
        self.report.construction = construction_stats(est)
        return system, est

    def discrete(self, est):
        """The fitted system, or a replay of ``phi.csv`` when it carries this config's hash."""
        phi_path = self.path("phi.csv")
        D = est.discrete_system_
        if os.path.exists(phi_path):
            chash, replay = reports.read_phi(phi_path, tags=set(D.tags))
            if chash == self.hash:
                self.report.notes.append(f"replayed {phi_path}")
                return replay
        return D


def construction_stats(est):
    stats = {"construction": type(est).__name__, "tags": " ".join(sorted(
        est.discrete_system_.tags)) or "none"}
    if isinstance(est, CoverAbstraction):
        stats["inclusion"] = f"{est.inclusion_[0]} (worst residual {est.inclusion_[1]:.3g})"
    elif isinstance(est, ContractionAbstraction):
        c = est.certificate_
        stats["certificate"] = f"{c.verdict} (worst margin {c.worst_margin:.3g}, " \
                               f"{c.checked_points} points)"
    elif isinstance(est, MorseSmaleAbstraction):
        o = est.order_
        stats["order"] = " ".join(f"({a},{w})" for a, w in o.pairs)
        stats["unresolved"] = f"{o.unresolved_fraction:.4g}"
    elif isinstance(est, LevelSetAbstraction):
        stats["descent"] = f"{est.descent_.passed} (worst {est.descent_.worst:.3g})"
    return stats


def cmd_abstract(cfg, out):
    run = Run(cfg, out, "abstract")
    system, est = run.construct()
    D = est.discrete_system_
    h = run.hash
    reports.write_cells(run.path("cells.csv"), est.cover_, h)
    run.timed("phi", reports.write_phi, run.path("phi.csv"), D, est.time_grid_, h)
    if isinstance(est, LevelSetAbstraction):
        reports.write_boxmap(run.path("boxmap.csv"), est.family, est.boxmap_, h)
    if isinstance(est, MorseSmaleAbstraction):
        reports.write_order(run.path("order.csv"), est.order_, h)
    return run.report


def cmd_check(cfg, out):
    run = Run(cfg, out, "check")
    system, est = run.construct()
    D = run.discrete(est)
    num, seed = cfg["numerics"], cfg["seed"]
    grid = est.time_grid_
    results = []
    for kind in ("over", "under", "complete"):
        if kind not in cfg["checks"]:
            continue
        rep = run.timed(kind, CHECKERS[kind], system, D, est.cover_, num["check_points"], grid,
                        seed)
        if rep.verdict:
            D.tags |= {OVER, "under", COMPLETE} if kind == COMPLETE else {kind}
        results.append(rep)
        run.report.checks[kind] = rep.summary()
    reports.write_violations(run.path("violations.csv"), results, run.hash)
    if "conservativeness" in cfg["checks"]:
        est_c = run.timed("conservativeness", conservativeness_volume, system, D, est.cover_,
                          grid, num["mc_samples"], seed, num["preimage_samples"], num["bloat"])
        run.report.conservativeness = (est_c.value, est_c.std_error, est_c.argmax)
        reports.write_conservativeness(run.path("conservativeness.csv"), est_c, run.hash)
    run.report.exit_code = 0 if all(r.verdict for r in results) else 3
    return run.report


def cmd_verify(cfg, out):
    if "safety" not in cfg:
        raise ValueError("verify needs a 'safety' block in the config")
    run = Run(cfg, out, "verify")
    system, est = run.construct()
    D = run.discrete(est)
    num, seed = cfg["numerics"], cfg["seed"]
    if not ({OVER, COMPLETE} & D.tags):
        rep = run.timed("complete", check_complete, system, D, est.cover_, num["check_points"],
                        est.time_grid_, seed)
        run.report.checks["complete"] = rep.summary()
        if not rep.verdict:
            raise NotOverApproximation(
                "the construction is not tagged over-approximating and its complete check "
                "was refuted")
        D.tags |= {OVER, "under", COMPLETE}
    names = variables(cfg, system.space.dim)
    s = cfg["safety"]
    init = build_region(s["init"], system.space, names)
    unsafe = build_region(s["unsafe"], system.space, names)
    horizon = float(s.get("horizon", num["t_max"]))
    verdict = run.timed("safety", verify_safety, D, est.cover_, init, unsafe, horizon,
                        est.time_grid_, seed, num["safety_samples"])
    run.report.safety = verdict.label + ("" if verdict.safe else
                                         f" at t = {verdict.time:g}, cells "
                                         f"{sorted(verdict.cells)}")
    reports.write_csv(run.path("safety.csv"),
                      ["verdict", "time", "witness_cells", "init_cells", "unsafe_cells"],
                      [(verdict.label, verdict.time, verdict.cells, verdict.init_cells,
                        verdict.unsafe_cells)], run.hash)
    run.report.exit_code = 0 if verdict.safe else 4
    return run.report


def cmd_plot(cfg, out):
    dim = len(cfg["space"]["bounds"])
    if dim > 2:
        raise UnsupportedDimension(f"plot output supports dimension 1 or 2, got {dim}")
    run = Run(cfg, out, "plot")
    system, est = run.construct()
    p = cfg["plot"]
    X = system.space.sample(p["trajectories"], make_rng(cfg["seed"], "plot"))
    times = np.linspace(0.0, cfg["numerics"]["t_max"], 51)
    paths = run.timed("trajectories", system.flow, times, X)
    reports.write_trajectories(run.path("trajectories.csv"), times, paths, run.hash)
    if dim == 2:
        n = reports.write_cells_svg(run.path("cells_2d.svg"), est.cover_,
                                    est.discrete_system_, p["time"], p["resolution"],
                                    chash=run.hash)
        run.report.notes.append(f"cells drawn: {n}")
    return run.report


COMMANDS = {"abstract": cmd_abstract, "check": cmd_check, "verify": cmd_verify,
            "plot": cmd_plot}


__all__ = ["RunReport", "build_system", "build_estimator", "build_region", "time_grid",
           "cmd_abstract", "cmd_check", "cmd_verify", "cmd_plot", "COMMANDS"]
