import numpy as np
import pytest

from flowabs import (Divergence, FlowConfig, StateSpace, VectorField, first_crossing_time,
                     first_crossing_times, flow, flow_many, linear_flow, trajectory,
                     variational_flow)
from flowabs.expr import ExpressionError, compile_expression

CFG = FlowConfig(1e-3, 10.0)


def test_radial_flow_matches_exponential():
    x = np.array([0.3, -0.7])
    y = flow(VectorField.radial_contraction(), None, CFG, 2.5, x)
    assert np.allclose(y, np.exp(-2.5) * x, atol=1e-9)


def test_rotation_flow_matches_expm():
    A = [[0.0, 1.0], [-1.0, 0.0]]
    x = np.array([1.0, 0.0])
    y = flow(VectorField.rotation(), None, CFG, np.pi / 2, x)
    assert np.allclose(y, [0.0, -1.0], atol=1e-9)
    assert np.allclose(y, linear_flow(A, np.pi / 2, x), atol=1e-9)


def test_negative_time_is_backward_flow():
    f = VectorField.radial_contraction()
    x = np.array([0.1, 0.2])
    y = flow(f, None, CFG, 1.0, x)
    assert np.allclose(flow(f, None, CFG, -1.0, y), x, atol=1e-10)


def test_zero_time_is_identity_and_canonical():
    t = StateSpace.torus((0, 1))
    assert flow(VectorField.zero(1), t, CFG, 0.0, [1.25])[0] == pytest.approx(0.25)


def test_flow_many_agrees_with_single_time():
    f = VectorField.damped_pendulum()
    X = np.array([[1.0, 0.0], [-0.5, 0.3]])
    times = [0.0, 0.37, 1.2345, 3.0]
    Y = flow_many(f, None, CFG, times, X)
    for k, t in enumerate(times):
        assert np.allclose(Y[k], flow(f, None, CFG, t, X), atol=1e-14)


def test_trajectory_shape():
    T = trajectory(VectorField.radial_contraction(), None, CFG, [1.0, 1.0], [0, 1, 2])
    assert T.shape == (3, 2)


def test_leaving_box_diverges():
    box = StateSpace.box((-1, 1), (-1, 1))
    with pytest.raises(Divergence):
        flow(VectorField.linear(np.eye(2)), box, CFG, 2.0, [0.9, 0.0])


def test_torus_wraps():
    t = StateSpace.torus((0, 1))
    f = VectorField(1, lambda X: np.ones_like(X))
    assert flow(f, t, CFG, 2.25, [0.0])[0] == pytest.approx(0.25, abs=1e-9)


def test_variational_flow_linear():
    A = np.array([[-1.0, 0.0], [0.0, -2.0]])
    f = VectorField.linear(A)
    x, w = variational_flow(f, CFG, 1.0, [1.0, 1.0], [1.0, 1.0])
    assert np.allclose(w, [np.exp(-1), np.exp(-2)], atol=1e-9)
    with pytest.raises(ValueError):
        variational_flow(f, CFG, 1.0, [1.0, 1.0], [0.0, 0.0])


def test_fd_jacobian_matches_analytic():
    f = VectorField.damped_pendulum(0.3)
    g = VectorField(2, f.rhs)
    X = np.array([[0.4, -0.2]])
    assert np.allclose(f.jacobian(X), g.jacobian(X), atol=1e-6)


def test_crossing_time_radial():
    f = VectorField.radial_contraction()
    V = lambda X: np.sum(np.atleast_2d(X) ** 2, axis=1)
    t = first_crossing_time(f, None, CFG, [2.0, 0.0], V, 1.0)
    assert t == pytest.approx(0.5 * np.log(4), abs=1e-8)
    assert first_crossing_time(f, None, FlowConfig(1e-3, 0.5), [2.0, 0.0], V, 1.0) is None


def test_crossing_times_do_not_mutate_input():
    X = np.array([[2.0, 0.0], [0.0, 1.5]])
    keep = X.copy()
    first_crossing_times(VectorField.radial_contraction(), None, CFG, X,
                         lambda Y: np.sum(Y ** 2, axis=1), 1.0)
    assert np.array_equal(X, keep)


def test_expression_fields():
    f = VectorField.from_expressions(["-x", "y*sin(x) - y"], ["x", "y"])
    out = f.rhs(np.array([[0.0, 2.0]]))
    assert np.allclose(out, [[0.0, -2.0]])
    g = compile_expression("2^3 + pi - pi", ["x"])
    assert g(np.zeros((1, 1)))[0] == pytest.approx(8.0)
    with pytest.raises(ExpressionError):
        compile_expression("__import__('os')", ["x"])
    with pytest.raises(ExpressionError):
        compile_expression("z + 1", ["x"])


def test_flow_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(step=0.0)
    with pytest.raises(ValueError):
        FlowConfig(method="euler")
