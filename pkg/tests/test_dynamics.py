"""Dynamics models: Euler step, rollouts, bounds and the state metric"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynamics import (
    ModelId, distance, distance_many, make_model, model_from_spec, rollout, step,
    step_values, wrap_angle, wrap_angles,
)
from errors import ContractViolation

coords = st.floats(min_value=-20.0, max_value=20.0, allow_nan=False)
angles = st.floats(min_value=-math.pi, max_value=math.pi, exclude_max=True, allow_nan=False)
unicycle_states = st.tuples(coords, coords, angles).map(lambda t: np.array(t))


def test_step_straight_with_turn_rate(unicycle):
    x = step(unicycle, [0.0, 0.0, 0.0], [1.0, 0.5])
    assert x.tolist() == [0.1, 0.0, 0.05]


def test_step_along_positive_y(unicycle):
    x = step(unicycle, [0.0, 0.0, math.pi / 2], [1.0, 0.0])
    assert x[0] == pytest.approx(0.0, abs=1e-15)
    assert x[1] == pytest.approx(0.1)
    assert x[2] == math.pi / 2


def test_car_with_trailer_aligned_keeps_trailer_heading(car):
    x = step(car, [1.0, 2.0, 0.3, 0.3], [0.4, 0.0])
    assert x[3] == 0.3
    assert x[2] == 0.3


def test_step_wraps_angles(unicycle):
    x = step(unicycle, [0.0, 0.0, math.pi - 0.01], [0.0, 0.5])
    assert -math.pi <= x[2] < math.pi
    assert x[2] == pytest.approx(-math.pi + 0.04)


def test_step_dimension_mismatch_raises(unicycle):
    with pytest.raises(ContractViolation):
        step(unicycle, [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ContractViolation):
        step(unicycle, [0.0, 0.0, 0.0], [0.0])


def test_step_is_bitwise_deterministic(car):
    x, u = [0.3, -1.2, 2.9, -2.5], [0.37, -0.61]
    assert step(car, x, u).tobytes() == step(car, x, u).tobytes()
    assert step(car, x, u).tolist() == step_values(car, x, u)


def test_rollout_empty_controls(unicycle):
    states, ok = rollout(unicycle, [1.0, 2.0, 0.5], np.zeros((0, 2)))
    assert ok
    assert states.shape == (1, 3)
    assert states[0].tolist() == [1.0, 2.0, 0.5]


def test_rollout_straight_unicycle(unicycle):
    states, ok = rollout(unicycle, [0.0, 0.0, 0.0], [[1.0, 0.0]] * 10)
    assert ok
    assert len(states) == 11
    assert states[-1] == pytest.approx([1.0, 0.0, 0.0])


def test_rollout_double_integrator_zero_acceleration(di3d):
    p, v = np.array([1.0, -2.0, 0.5]), np.array([0.2, -0.1, 0.3])
    states, ok = rollout(di3d, np.concatenate([p, v]), np.zeros((8, 3)))
    assert ok
    for k, x in enumerate(states):
        assert x[:3] == pytest.approx(p + k * v * di3d.dt)
        assert x[3:].tolist() == v.tolist()


def test_rollout_double_integrator_matches_closed_form_at_small_dt():
    model = make_model(ModelId.DOUBLE_INTEGRATOR_2D, dt=1e-4)
    p0, v0, a = np.array([0.0, 1.0]), np.array([0.1, -0.2]), np.array([1.0, 0.5])
    states, ok = rollout(model, np.concatenate([p0, v0]), np.tile(a, (100, 1)))
    assert ok
    for k in (0, 25, 50, 100):
        t = k * model.dt
        assert np.all(np.abs(states[k, :2] - (p0 + v0 * t + 0.5 * a * t * t)) < 1e-6)


def test_rollout_reports_velocity_violation_without_clamping(di2d):
    states, ok = rollout(di2d, [0.0, 0.0, 0.45, 0.0], [[1.0, 0.0]] * 10)
    assert not ok
    assert states[-1, 2] > 0.5


def test_distance_identity_and_wrap(unicycle):
    a = np.array([0.5, -1.0, 0.0])
    assert distance(unicycle, a, a) == 0.0
    b = np.array([0.5, -1.0, 2 * math.pi - 0.1])
    assert distance(unicycle, a, b) == pytest.approx(0.5 * 0.1)


def test_distance_euclidean_position_block(unicycle):
    assert distance(unicycle, [0.0, 0.0, 0.0], [3.0, 4.0, 0.0]) == pytest.approx(5.0)


def test_distance_many_matches_distance(car):
    rng = np.random.default_rng(3)
    states = rng.uniform(-3, 3, size=(20, 4))
    x = rng.uniform(-3, 3, size=4)
    batch = distance_many(car, states, x)
    assert batch == pytest.approx([distance(car, s, x) for s in states])


@settings(max_examples=300, deadline=None)
@given(unicycle_states, unicycle_states, unicycle_states)
def test_metric_axioms(a, b, c):
    model = make_model(ModelId.UNICYCLE_1ST)
    assert distance(model, a, a) == 0.0
    assert distance(model, a, b) == pytest.approx(distance(model, b, a), abs=1e-12)
    assert distance(model, a, c) <= distance(model, a, b) + distance(model, b, c) + 1e-9


@given(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False))
def test_wrap_angle_closure(value):
    wrapped = wrap_angle(value)
    assert -math.pi <= wrapped < math.pi
    assert math.cos(wrapped) == pytest.approx(math.cos(value), abs=1e-9)
    vectorised = wrap_angles(np.array([value]))[0]
    assert -math.pi <= vectorised < math.pi
    assert math.sin(vectorised) == pytest.approx(math.sin(wrapped), abs=1e-9)


def test_wrap_angle_leaves_range_untouched():
    for value in (-math.pi, -1.0, 0.0, 3.0):
        assert wrap_angle(value) == value
    assert wrap_angle(math.pi) == -math.pi


@pytest.mark.parametrize("kwargs", [
    {"dt": 0.0},
    {"params": {"L": 0.0}},
    {"control_lower": [1.0, 1.0]},
    {"metric_weights": [0.0, 0.0, 0.0, 0.0]},
])
def test_invalid_models_raise(kwargs):
    with pytest.raises(ContractViolation):
        make_model(ModelId.CAR_WITH_TRAILER, **kwargs)


def test_unknown_model_raises():
    with pytest.raises(ContractViolation):
        make_model("hovercraft")


def test_model_spec_restores_bounds(di2d):
    restored = model_from_spec(di2d.to_spec())
    assert restored.model_id == di2d.model_id
    assert restored.state_lower.tolist() == di2d.state_lower.tolist()
    assert restored.control_upper.tolist() == di2d.control_upper.tolist()
    assert restored.max_speed == pytest.approx(math.sqrt(0.5))


def test_stay_starts_are_fixed_points(unicycle, car, di3d):
    for model in (unicycle, car, di3d):
        for x in model.stay_starts(4):
            assert step(model, x, model.zero_control()).tolist() == x.tolist()
    assert len(car.stay_starts(4)) == 16
