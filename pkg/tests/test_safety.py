import math
from fractions import Fraction as F

import pytest
from hypothesis import assume, given, settings, strategies as st

from dwsafe import safety
from dwsafe.safety import (
    SafetyQuery,
    accel_compensation,
    cda_ok,
    is_safe_curve,
    loop_invariant,
    max_velocity,
    passive_friendly_obstacle_can_stop,
    safe_distance,
    stopping_distance,
)
from dwsafe.state import ObstacleState, Refinement, RobotState, SafetyMode, Vec2, WorldParams

M = SafetyMode
R = Refinement
P1 = WorldParams(A=1, b=1, V=1, eps=0.05)


def q(mode, v, p=P1, refs=(), **kw):
    return SafetyQuery(mode, frozenset(refs), v, p, **kw)


def robot_at(x=0.0, y=0.0, v=0.0, d=(1.0, 0.0), r_c=1e9):
    r = RobotState.at_rest(Vec2(x, y), Vec2(*d), r_c)
    return RobotState(r.p_r, v, 0.0, r.d_r, v / r_c, r_c, r.p_c)


def obstacle(x, y, V=1.0):
    return ObstacleState(Vec2(x, y), Vec2(0, 0), V)


@pytest.mark.parametrize("v, b, want", [(1, 1, 0.5), (0, 1, 0), (2, 0.5, 4)])
def test_stopping_distance(v, b, want):
    assert stopping_distance(v, b) == want


def test_accel_compensation():
    assert accel_compensation(1, 1, 1, 0.05) == pytest.approx(0.1025, abs=1e-15)
    assert accel_compensation(3.0, 0, 2.0, 0.2) == pytest.approx(0.2 * 3.0)
    assert accel_compensation(0, 0, 1, 0.05) == 0


def test_safe_distance_examples():
    assert safe_distance(q(M.STATIC, 1.0)) == pytest.approx(0.6025, abs=1e-12)
    assert safe_distance(q(M.STATIC, 0.0, WorldParams(A=0, b=1, eps=0.05))) == 0
    assert safe_distance(q(M.PASSIVE, 1.0)) == pytest.approx(1.7025, abs=1e-12)
    p = WorldParams(A=1, b=1, V=1, eps=2.0)
    assert safe_distance(q(M.PASSIVE, 1.0, p, (R.ACTUAL_ACCEL,), a_r=-1.0)) == pytest.approx(1.5)


def test_safe_distance_rejects_bad_input():
    with pytest.raises(ValueError):
        safe_distance(q(M.PASSIVE, 1.0, WorldParams(b=0)))
    with pytest.raises(ValueError):
        safe_distance(q(M.PASSIVE, 1.0, P1, (R.ACTUAL_ACCEL,)))
    with pytest.raises(ValueError):
        safe_distance(q(M.PASSIVE, 1.0, P1, (R.ACTUAL_ACCEL,), a_r=5.0))


def _oracle(mode, v, A, b, V, eps, b_o=F(1), tau=F(0)):
    """Exact rational evaluation of the distance bounds, written out term by term."""
    stop = v * v / (2 * b)
    comp_static = (A / b + 1) * (A / 2 * eps * eps + eps * v)
    if mode is M.STATIC:
        return stop + comp_static
    d = stop + V * v / b + (A / b + 1) * (A / 2 * eps * eps + eps * (v + V))
    if mode is M.PASSIVE_FRIENDLY:
        d += V * V / (2 * b_o) + tau * V
    return d


pos = st.fractions(F(1, 10), F(5), max_denominator=64)
nonneg = st.fractions(F(0), F(5), max_denominator=64)


@given(st.sampled_from([M.STATIC, M.PASSIVE, M.PASSIVE_FRIENDLY]), nonneg, nonneg, pos, nonneg,
       st.fractions(F(1, 100), F(1), max_denominator=100), pos, nonneg)
def test_safe_distance_matches_rational_oracle(mode, v, A, b, V, eps, b_o, tau):
    p = WorldParams(A=float(A), b=float(b), V=float(V), eps=float(eps), b_o=float(b_o), tau=float(tau))
    got = safe_distance(q(mode, float(v), p))
    want = float(_oracle(mode, v, A, b, V, eps, b_o, tau))
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_is_safe_curve_examples():
    r = robot_at(v=1.0)
    assert is_safe_curve(r, obstacle(10, 10), q(M.PASSIVE, 1.0))
    assert not is_safe_curve(r, obstacle(1, 0), q(M.PASSIVE, 1.0))
    # trajectory refinement: circle clearance |2 - 5| = 3 > 1.05
    rc = robot_at(v=1.0, d=(0.0, -1.0), r_c=2.0)
    assert rc.p_c == Vec2(2.0, 0.0)
    qt = q(M.PASSIVE, 1.0, P1, (R.TRAJECTORY_DISTANCE,), a_r=0.0)
    assert safety.trajectory_bound(qt) == pytest.approx(1.05)
    assert is_safe_curve(rc, obstacle(2, 5), qt)
    # behind the robot, off the circle: only the disjunct admits it
    o = obstacle(-1.2, 0)
    assert safe_distance(qt) == pytest.approx(1.6)
    assert not is_safe_curve(rc, o, q(M.PASSIVE, 1.0, P1, (R.ACTUAL_ACCEL,), a_r=0.0))
    assert is_safe_curve(rc, o, qt)


@pytest.mark.parametrize("v, A, gamma, r_c, want", [
    (0.0, 0.0, 0.3, 1.0, True),
    (1.0, 1.0, 1.0, 1.0, True),
    (1.0, 1.0, 1.0, 0.5, False),
])
def test_cda_ok(v, A, gamma, r_c, want):
    assert cda_ok(v, r_c, WorldParams(A=A, b=1, eps=0.05, gamma=gamma)) is want


def test_loop_invariant_examples():
    p = WorldParams(b=1, V=1)
    assert loop_invariant(M.PASSIVE, robot_at(v=0.0), [obstacle(0, 0)], p)
    assert not loop_invariant(M.PASSIVE, robot_at(v=1.0), [obstacle(1.4, 0)], p)
    assert loop_invariant(M.PASSIVE, robot_at(v=1.0), [obstacle(1.6, 0)], p)
    assert loop_invariant(M.STATIC, robot_at(v=1.0), [obstacle(0.6, 0)], WorldParams(b=1, V=0))


def test_max_velocity_examples():
    assert max_velocity(M.STATIC, 1.25, P1) == pytest.approx(1.4827, abs=1e-4)
    assert max_velocity(M.STATIC, 0.25, P1) == pytest.approx(0.6107, abs=1e-4)
    assert max_velocity(M.PASSIVE, 1.25, P1) == pytest.approx(0.7721, abs=1e-4)
    # below the obstacle's own travel in one cycle nothing is admissible
    assert max_velocity(M.PASSIVE, 0.01, P1) == 0.0


def test_friendly_obstacle_can_stop():
    p = WorldParams(V=1, b_o=1, tau=1)
    r = robot_at()
    assert passive_friendly_obstacle_can_stop(r, obstacle(10, 0), p)
    assert not passive_friendly_obstacle_can_stop(r, obstacle(1.5, 0), p)
    assert passive_friendly_obstacle_can_stop(r, obstacle(0.01, 0), WorldParams(V=0, b_o=1, tau=1))
    with pytest.raises(ValueError):
        passive_friendly_obstacle_can_stop(robot_at(v=1.0), obstacle(10, 0), p)


def test_friendly_witness_run_stops_short():
    p = WorldParams(V=1, b_o=1, tau=1)
    t_stop, left = safety.obstacle_stop_witness(robot_at(), obstacle(1.6, 0), p)
    assert t_stop == pytest.approx(2.0)
    assert left == pytest.approx(0.1)


def test_table_rows_reference_values():
    rows = safety.table_rows()
    by = {}
    for r in rows:
        by.setdefault(r.table, []).append(r)
    assert all(r.matches for t in ("static-distance", "static-corridor", "static-door") for r in by[t])
    assert [r.matches for r in by["passive-corridor"]] == [True, True, True, False, False]
    assert [r.matches for r in by["passive-door"]] == [True, True, True, True, False]
    # the swap: formula values of rows 4 and 5 equal the printed values of rows 5 and 4
    c = by["passive-corridor"]
    assert round(c[3].value, 1) == c[4].reference and round(c[4].value, 1) == c[3].reference
    assert by["static-corridor"][3].value == pytest.approx(2.0894, abs=1e-4)
    assert c[2].value == pytest.approx(0.6133, abs=1e-4)


# ------------------------------------------------------------------ properties

speeds = st.floats(0, 5)
unit_pos = st.floats(0.1, 3)


def _params(A, b, V, eps, **kw):
    return WorldParams(A=A, b=b, V=V, eps=eps, **kw)


@given(speeds, speeds, st.floats(0, 3), unit_pos, st.floats(0, 3), st.floats(0.01, 0.5),
       st.sampled_from([M.STATIC, M.PASSIVE, M.PASSIVE_FRIENDLY]))
def test_monotone_in_speed(v1, v2, A, b, V, eps, mode):
    p = _params(A, b, V, eps)
    lo, hi = sorted((v1, v2))
    assert safe_distance(q(mode, lo, p)) <= safe_distance(q(mode, hi, p))


grow = st.floats(0, 2)


@given(speeds, st.floats(0, 3), unit_pos, st.floats(0, 3), st.floats(0.01, 0.5),
       st.floats(0.1, 3), st.floats(0, 1), grow,
       st.sampled_from(["V", "eps", "A", "tau", "Delta_p", "Delta_v", "b", "b_o", "Delta_a"]))
def test_monotone_in_parameters(v, A, b, V, eps, b_o, tau, step, name):
    refs = (R.LOCATION_UNCERTAINTY, R.VELOCITY_UNCERTAINTY, R.ACTUATOR_PERTURBATION)
    base = _params(A, b, V, eps, b_o=b_o, tau=tau, Delta_p=0.1, Delta_v=0.1, Delta_a=0.5)
    cur = getattr(base, name)
    if name == "Delta_a":
        bigger = base.with_overrides(Delta_a=cur + (1 - cur) * min(step, 1.0))
    else:
        bigger = base.with_overrides(**{name: cur + step})
    d0 = safe_distance(q(M.PASSIVE_FRIENDLY, v, base, refs))
    d1 = safe_distance(q(M.PASSIVE_FRIENDLY, v, bigger, refs))
    if name in ("b", "b_o", "Delta_a"):
        assert d1 <= d0 * (1 + 1e-12) + 1e-12
    else:
        assert d1 >= d0 * (1 - 1e-12) - 1e-12


@given(st.floats(0.01, 5), st.floats(0, 3), unit_pos, st.floats(0, 3), st.floats(0.01, 0.5),
       st.sampled_from([M.STATIC, M.PASSIVE, M.PASSIVE_FRIENDLY]))
def test_max_velocity_round_trip(v, A, b, V, eps, mode):
    p = _params(A, b, V, eps, tau=0.2)
    d = safe_distance(q(mode, v, p))
    assume(d > 1e-6)
    assert max_velocity(mode, d, p) <= v * (1 + 1e-9) + 1e-12
    assert max_velocity(mode, d + 1e-6, p) >= v


@given(st.floats(0.01, 10), st.floats(0, 3), unit_pos, st.floats(0, 3), st.floats(0.01, 0.5))
def test_max_velocity_against_bisection(dist, A, b, V, eps):
    p = _params(A, b, V, eps)

    def f(v):
        return safe_distance(q(M.PASSIVE, v, p)) - dist

    if f(0.0) >= 0:
        assert max_velocity(M.PASSIVE, dist, p) == 0.0
        return
    lo, hi = 0.0, 1.0
    while f(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    assert max_velocity(M.PASSIVE, dist, p) == pytest.approx(lo, rel=1e-9, abs=1e-12)


@given(speeds, st.floats(0, 3), unit_pos, st.floats(0, 3), st.floats(0.01, 0.5), st.floats(0.1, 3),
       st.floats(0, 1))
def test_mode_ordering(v, A, b, V, eps, b_o, tau):
    p = _params(A, b, V, eps, b_o=b_o, tau=tau)
    s, ps, pf = (safe_distance(q(m, v, p)) for m in (M.STATIC, M.PASSIVE, M.PASSIVE_FRIENDLY))
    assert s <= ps <= pf


@settings(max_examples=200)
@given(speeds, st.floats(0, 3), unit_pos, st.floats(0, 3), st.floats(0.01, 0.5))
def test_refinement_reductions(v, A, b, V, eps):
    p = _params(A, b, V, eps, Delta_p=0.0, Delta_a=1.0, Delta_v=0.0)
    base = safe_distance(q(M.PASSIVE, v, p))
    assert safe_distance(q(M.PASSIVE, v, p, (R.ACTUAL_ACCEL,), a_r=A)) == base
    for r in (R.LOCATION_UNCERTAINTY, R.ACTUATOR_PERTURBATION, R.VELOCITY_UNCERTAINTY):
        assert safe_distance(q(M.PASSIVE, v, p, (r,))) == base
