import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medianqs.dynamics import (
    FOUR_PI,
    FlowSpec,
    check_properties,
    convergence_order,
    flow,
    grad,
    hamiltonian_vector_field,
    poisson_bracket,
    rigid_rotation_errors,
    trajectory_csv,
    turning_rate,
)
from medianqs.errors import NotDifferentiableError, StepSizeTooLargeError
from medianqs.expr import compose, evaluate, parse

unit = st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 0.1
).map(lambda v: np.asarray(v) / np.linalg.norm(v))
coef = st.floats(-2, 2, allow_nan=False)
quadrics = st.lists(coef, min_size=6, max_size=6).map(
    lambda c: parse(f"{c[0]}*x + {c[1]}*y*z + {c[2]}*z^2 + {c[3]}*x*y + {c[4]}*sin(y) + {c[5]}")
)


def test_vector_field_examples():
    v = hamiltonian_vector_field("z", np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(v, [0.0, FOUR_PI, 0.0], atol=1e-15)
    assert np.all(hamiltonian_vector_field("3.5", np.array([0.6, 0.0, 0.8])) == 0.0)
    p = np.array([0.36, 0.48, 0.8])
    want = 2 * FOUR_PI * p[2] * np.array([p[1], -p[0], 0.0])
    np.testing.assert_allclose(hamiltonian_vector_field("x^2+y^2", p), want, atol=1e-13)


def test_bracket_examples():
    f = parse("x*y + z^3")
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        assert poisson_bracket(f, f, v) == 0.0
        assert abs(poisson_bracket(f, compose(parse("sin(x) + x^2"), f), v)) < 1e-9
    north = np.array([0.0, 0.0, 1.0])
    direct = float(grad("x", north) @ (-FOUR_PI * np.cross(north, grad("y", north))))
    assert poisson_bracket("x", "y", north) == pytest.approx(direct)
    assert direct == pytest.approx(FOUR_PI)


@settings(max_examples=100, deadline=None)
@given(quadrics, unit)
def test_tangency(h, v):
    vel = hamiltonian_vector_field(h, v)
    assert abs(float(v @ vel)) <= 1e-12 * max(1.0, float(np.linalg.norm(vel)))


@settings(max_examples=100, deadline=None)
@given(quadrics, quadrics, quadrics, unit)
def test_bracket_identities(f, g, h, v):
    assert poisson_bracket(f, g, v) == pytest.approx(-poisson_bracket(g, f, v), abs=1e-9)
    lhs = poisson_bracket(f, g * h, v)
    rhs = poisson_bracket(f, g, v) * evaluate(h, v) + evaluate(g, v) * poisson_bracket(f, h, v)
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_constant_hamiltonian_is_still():
    w = np.array([0.0, 0.6, 0.8])
    traj = flow(FlowSpec(parse("2"), 1.0, 5.0, 10, w))
    assert np.all(traj == w)


def test_rigid_rotation_full_turn():
    w = np.array([1.0, 0.0, 0.0])
    traj = flow(FlowSpec(parse("z"), 0.25, 2.0, 400, w))
    assert traj.shape == (401, 3)
    assert np.linalg.norm(traj[-1] - w) < 1e-6


def test_fourth_order_convergence():
    dts, errs = rigid_rotation_errors()
    assert np.all(np.diff(errs) < 0)
    assert 3.7 < convergence_order() < 4.3


def test_energy_and_norm():
    w = np.array([0.6, 0.0, 0.8])
    h = parse("x^2+y^2")
    traj = flow(FlowSpec(h, 1.0, 1.0, 4000, w))
    hv = evaluate(h, traj)
    assert np.max(np.abs(hv - hv[0])) < 1e-8
    assert np.max(np.abs(np.linalg.norm(traj, axis=1) - 1.0)) < 1e-12


def test_batch_flow_matches_single():
    h = parse("x*y + z")
    w = np.array([[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]])
    batch = flow(FlowSpec(h, 0.5, 1.0, 200, w))
    for i in range(2):
        np.testing.assert_array_equal(batch[:, i], flow(FlowSpec(h, 0.5, 1.0, 200, w[i])))


def test_step_size_guard():
    with pytest.raises(StepSizeTooLargeError):
        flow(FlowSpec(parse("z"), 1.0, 1.0, 10, np.array([1.0, 0.0, 0.0])))


@pytest.mark.parametrize(
    "kwargs",
    [dict(step_count=0), dict(epsilon=0.0), dict(duration=-1.0), dict(initial=np.array([1.0, 1.0, 0.0]))],
)
def test_flow_spec_validation(kwargs):
    base = dict(hamiltonian=parse("z"), epsilon=1.0, duration=1.0, step_count=10, initial=np.array([0.0, 0.0, 1.0]))
    base.update(kwargs)
    with pytest.raises(ValueError):
        FlowSpec(**base)


def test_not_differentiable():
    with pytest.raises(NotDifferentiableError):
        flow(FlowSpec(parse("abs(x)"), 1.0, 1.0, 10, np.array([0.0, 0.0, 1.0])))


def test_turning_rate_near_elliptic_point():
    # small circle of radius r around the pole of H = z^2: speed ~ r, turning ~ 8 pi
    r = 1e-3
    v = np.array([[r, 0.0, np.sqrt(1 - r * r)]])
    assert turning_rate("z^2", v)[0] == pytest.approx(2 * FOUR_PI * np.sqrt(1 - r * r), rel=1e-3)


def test_trajectory_csv():
    text = trajectory_csv(FlowSpec(parse("z"), 1.0, 0.5, 100, np.array([1.0, 0.0, 0.0])))
    lines = text.strip().splitlines()
    assert lines[0] == "t,x,y,z,H"
    assert len(lines) == 102
    assert float(lines[-1].split(",")[0]) == 0.5


def test_property_battery():
    report = check_properties(seed=11, trials=30)
    assert report.passed, report.to_dict()
