import math

import pytest
from hypothesis import given, strategies as st

from dwsafe.state import (
    STRAIGHT_RADIUS,
    ObstacleState,
    RobotState,
    SafetyMode,
    Scenario,
    Vec2,
    WorldParams,
    curve_center,
    norm_2,
    norm_inf,
    validate_scenario,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


@pytest.mark.parametrize("v, want", [((3, -4), 4), ((0, 0), 0), ((1.5, 1.5), 1.5)])
def test_norm_inf(v, want):
    assert norm_inf(Vec2(*v)) == want


@pytest.mark.parametrize("v, want", [((3, 4), 5), ((0, 0), 0), ((1, 1), math.sqrt(2))])
def test_norm_2(v, want):
    assert norm_2(Vec2(*v)) == pytest.approx(want, abs=1e-15)


@given(finite, finite)
def test_norm_equivalence(x, y):
    v = Vec2(x, y)
    n2, ni = norm_2(v), norm_inf(v)
    assert n2 <= math.sqrt(2) * ni * (1 + 1e-15)
    assert math.sqrt(2) * ni <= math.sqrt(2) * n2 * (1 + 1e-15)


def _scenario(mode=SafetyMode.PASSIVE, p=None, obstacle_at=(10.0, 0.0), **kw):
    r = RobotState.at_rest(Vec2(0, 0), Vec2(1, 0), 1.0)
    o = ObstacleState(Vec2(*obstacle_at), Vec2(0, 0), 1.0)
    return Scenario(p or WorldParams(**kw), mode, r, (o,))


def test_validate_examples():
    assert validate_scenario(_scenario()) == []
    assert validate_scenario(_scenario(b=0.0)) == ["b must be > 0"]
    # distance equals V^2/(2 b_o): the friendly obstacle condition is strict
    s = _scenario(SafetyMode.PASSIVE_FRIENDLY, obstacle_at=(0.5, 0.0), V=1.0, b_o=1.0, tau=0.0)
    assert validate_scenario(s) == ["η_obs violated"]


def test_validate_rejects_moving_start_and_bad_heading():
    s = _scenario()
    bad = RobotState(Vec2(0, 0), 1.0, 0.0, Vec2(1, 0), 1.0, 1.0, curve_center(Vec2(0, 0), Vec2(1, 0), 1.0))
    assert validate_scenario(Scenario(s.params, s.safety_mode, bad, s.obstacles0))
    tilted = RobotState.at_rest(Vec2(0, 0), Vec2(1, 1), 1.0)
    assert any("unit" in m for m in validate_scenario(Scenario(s.params, s.safety_mode, tilted, s.obstacles0)))


params_st = st.builds(
    WorldParams,
    A=st.floats(-1, 3), b=st.floats(-1, 3), eps=st.floats(-0.1, 1), V=st.floats(-1, 3),
    tau=st.floats(0, 1), b_o=st.floats(0.1, 3),
)


@given(params_st, st.floats(-20, 20), st.floats(-20, 20))
def test_validate_idempotent(p, x, y):
    s = _scenario(p=p, obstacle_at=(x, y))
    first = validate_scenario(s)
    assert validate_scenario(s) == first
    assert s == _scenario(p=p, obstacle_at=(x, y))


@given(st.floats(-math.pi, math.pi), st.sampled_from([0.5, -3.0, 1e3, STRAIGHT_RADIUS]))
def test_at_rest_satisfies_robot_invariants(angle, r_c):
    r = RobotState.at_rest(Vec2(1.0, -2.0), Vec2(math.cos(angle), math.sin(angle)), r_c)
    assert r.violations() == []
