"""Finite abstractions of smooth flows on compact state spaces.

Four constructions turn a flow ``(M, xi)`` into a discrete system
``(Z, Phi)``: linear-inclusion covers, contraction disk covers,
Morse-Smale connection cells and level-set slabs with timing boxes.
Sampling-based checkers test over-, under- and complete approximation,
estimate conservativeness and answer safety queries.
"""
from .base import BaseAbstraction
from .contraction import (ContractionAbstraction, FinslerLyapunov, build_disk_cover,
                          check_contraction_inequality, check_envelope,
                          check_finsler_conditions, compute_phi_ex2)
from .core import (ApproximationReport, ConservativenessEstimate, DiscreteSystem,
                   DynamicalSystem, SafetyVerdict, check_complete, check_over_approximation,
                   check_under_approximation, conservativeness_volume, default_time_grid,
                   discrete_reach, verify_safety)
from .cover import CoverAbstraction, LinearFamily, check_inclusion, compute_phi_ex1, pol_sample
from .dynamics import (FlowConfig, VectorField, first_crossing_time, first_crossing_times, flow,
                       flow_many, linear_flow, trajectory, variational_flow)
from .exceptions import (AbstractionError, ConfigError, CoverageGap, DescentViolation,
                         Divergence, EmptyRegion, LevelSetEmpty, NoAdmissibleChain,
                         NotContractive, NotCovered, NotOverApproximation, OrderViolation,
                         TooManyUnresolved, UnsupportedDimension)
from .geometry import (EUCLIDEAN, HyperRect, Metric, MetricBall, OrderedCover, Predicate, Slab,
                       StateSpace, abstract_point, build_ordered_cover, is_partition,
                       sample_cell)
from .levelset import (LevelFamily, LevelSetAbstraction, TimingBox, apply_L, build_box_map,
                       check_descent, completeness_suite, compute_phi_ex4,
                       compute_timing_interval)
from .morse import (MorseSmaleAbstraction, SingularElement, build_partial_order,
                    check_flow_invariance, classify_alpha_limit, classify_omega_limit)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
