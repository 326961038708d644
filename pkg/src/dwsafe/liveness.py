"""Straight-line liveness controllers: waypoints, intersections and their deadline variants.

Robot and obstacle move along lines. In traces the robot drives along +x on
the line y = p_x.y, and an intersection obstacle drives along +y on the line
x = p_x.x, so the two paths meet at p_x.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .safety import accel_compensation
from .state import (
    STRAIGHT_RADIUS,
    Branch,
    ControlChoice,
    GoalKind,
    GoalSpec,
    ObstacleState,
    RobotState,
    Scenario,
    Trace,
    TraceStep,
    Vec2,
    WorldParams,
)

CONTACT_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class Line1D:
    p: float
    v: float


@dataclass(frozen=True, slots=True)
class Crossing:
    p_r: float
    v_r: float
    p_o: float
    v_o: float


def _choice(branch: Branch, a: float, reason: str) -> ControlChoice:
    return ControlChoice(branch, a, 0.0, STRAIGHT_RADIUS, Vec2(0.0, 0.0), reason=reason)


def _brake_or_stay(v: float, params: WorldParams, reason: str) -> ControlChoice:
    if v == 0:
        return _choice(Branch.STAY, 0.0, reason)
    return _choice(Branch.BRAKE, -params.b, reason)


def waypoint_params_ok(params: WorldParams) -> bool:
    p = params
    return p.V_g * p.eps + p.V_g * p.V_g / (2.0 * p.b) < 2.0 * p.Delta_g


def waypoint_decide(state: Line1D, goal: GoalSpec, params: WorldParams) -> ControlChoice:
    """Approach the waypoint at no more than V_g and brake once inside the goal region."""
    p = params
    lo = goal.p_g - p.Delta_g
    hi = goal.p_g + p.Delta_g
    if state.p > lo:
        return _brake_or_stay(state.v, p, "inside goal region")
    if state.p < lo and state.v <= p.V_g:
        a = min((p.V_g - state.v) / p.eps, p.A)
        return _choice(Branch.ACCELERATE, a, "approach")
    if state.p + state.v ** 2 / (2.0 * p.b) + accel_compensation(state.v, p.A, p.b, p.eps) < hi:
        return _choice(Branch.ACCELERATE, p.A, "accelerate")
    return _brake_or_stay(state.v, p, "brake")


def waypoint_deadline_decide(state: Line1D, goal: GoalSpec, params: WorldParams) -> ControlChoice:
    """Full acceleration while the robot can still slow to V_g before the region, else track V_g."""
    p = params
    lo = goal.p_g - p.Delta_g
    if state.p > lo:
        return _brake_or_stay(state.v, p, "inside goal region")
    v = state.v
    if state.p + (v * v - p.V_g ** 2) / (2.0 * p.b) + accel_compensation(v, p.A, p.b, p.eps) <= lo:
        return _choice(Branch.ACCELERATE, p.A, "full acceleration")
    a = min(max((p.V_g - v) / p.eps, -p.b), p.A)
    return _choice(Branch.ACCELERATE, a, "track V_g")


def after_x(s: Crossing, goal: GoalSpec) -> bool:
    return s.p_r > goal.p_x.x


def pass_front(s: Crossing, goal: GoalSpec, params: WorldParams) -> bool:
    if s.v_r <= 0:
        return False
    t = (goal.p_x.x - s.p_r) / s.v_r
    return s.p_o + s.v_o * t + params.A * t * t < goal.p_x.y


def pass_behind(s: Crossing, goal: GoalSpec, params: WorldParams) -> bool:
    return goal.p_x.y < s.p_o + params.V_min * (goal.p_x.x - s.p_r) / (s.v_r + params.A * params.eps)


def pass_faster(s: Crossing, goal: GoalSpec, params: WorldParams) -> bool:
    return s.v_r > 0 and (pass_front(s, goal, params) or pass_behind(s, goal, params))


def pass_const(s: Crossing, goal: GoalSpec, params: WorldParams) -> bool:
    return s.v_r > 0 and goal.p_x.y < s.p_o + params.V_min * (goal.p_x.x - s.p_r) / s.v_r


def crossing_safe(s: Crossing, goal: GoalSpec, params: WorldParams) -> bool:
    """Passive admissibility of full acceleration with both agents on their lines."""
    p = params
    gap = max(abs(goal.p_x.x - s.p_r), abs(s.p_o - goal.p_x.y))
    v = s.v_r
    need = (v * v / (2.0 * p.b) + p.V * v / p.b
            + (p.A / p.b + 1.0) * (p.A / 2.0 * p.eps ** 2 + p.eps * (v + p.V)))
    return gap > need


def intersection_decide(s: Crossing, goal: GoalSpec, params: WorldParams,
                        deadline_variant: Optional[bool] = None) -> ControlChoice:
    p = params
    if deadline_variant is None:
        deadline_variant = goal.kind is GoalKind.INTERSECTION_DEADLINE
    if after_x(s, goal):
        return _choice(Branch.ACCELERATE, p.A, "after intersection")
    if deadline_variant and s.p_o > goal.p_x.y:
        return _choice(Branch.ACCELERATE, p.A, "obstacle passed")
    if pass_faster(s, goal, p):
        return _choice(Branch.ACCELERATE, p.A, "pass faster")
    if pass_const(s, goal, p):
        return _choice(Branch.ACCELERATE, 0.0, "pass at constant speed")
    if crossing_safe(s, goal, p):
        return _choice(Branch.ACCELERATE, p.A, "passive accelerate")
    return _brake_or_stay(s.v_r, p, "passive fallback")


def deadline_feasible(goal: GoalSpec, state, params: WorldParams) -> bool:
    p = params
    if goal.kind in (GoalKind.WAYPOINT, GoalKind.WAYPOINT_DEADLINE):
        need = ((p.V_g - state.v) / p.A + (goal.p_g - p.Delta_g - state.p) / p.V_g
                + p.V_g / p.b + p.eps)
        return goal.deadline > need and waypoint_params_ok(p) and p.A > 0
    D = goal.deadline
    return D >= p.eps and goal.p_x.x - state.p_r < p.A / 2.0 * (D - p.eps) ** 2


def intersection_timer(s: Crossing, goal: GoalSpec, params: WorldParams) -> float:
    """Clock start so that it reads 0 by the time the obstacle has surely crossed."""
    return min(0.0, (s.p_o - goal.p_x.y) / params.V_min)


def flow_line(p: float, v: float, a: float, dt: float) -> tuple[float, float, float]:
    """(position, speed, elapsed) after dt; ends early when braking reaches zero speed."""
    if a < 0 and v + a * dt <= 0:
        t = -v / a
        return p + v * v / (-2.0 * a), 0.0, t
    return p + v * dt + 0.5 * a * dt * dt, v + a * dt, dt


@dataclass
class LivenessOutcome:
    kind: GoalKind
    success: bool
    reached: bool = False
    overshoot: bool = False
    deadline_met: Optional[bool] = None
    contact_while_moving: bool = False
    min_distance_moving: float = math.inf
    time: float = 0.0
    final_p: float = 0.0
    final_v: float = 0.0
    trace: Optional[Trace] = None
    notes: list = field(default_factory=list)


def _robot_state(p: float, y: float, v: float, a: float, t: float) -> RobotState:
    return RobotState(Vec2(p, y), v, a, Vec2(1.0, 0.0), v / STRAIGHT_RADIUS, STRAIGHT_RADIUS,
                      Vec2(p, y + STRAIGHT_RADIUS), 0.0, t)


def run_waypoint(scenario: Scenario, record: bool = False, max_time: Optional[float] = None) -> LivenessOutcome:
    """Drive toward a waypoint until stopped inside the goal region (or time runs out)."""
    p = scenario.params
    goal = scenario.goal
    deadline = goal.kind is GoalKind.WAYPOINT_DEADLINE
    rng = random.Random(scenario.seed)
    y = scenario.robot0.p_r.y
    pos, v = scenario.robot0.p_r.x, 0.0
    lo, hi = goal.p_g - p.Delta_g, goal.p_g + p.Delta_g
    T = goal.deadline
    horizon = scenario.horizon if max_time is None else max_time
    out = LivenessOutcome(goal.kind, False)
    trace = Trace() if record else None
    t = 0.0
    step = 0
    while t < horizon:
        st = Line1D(pos, v)
        ch = waypoint_deadline_decide(st, goal, p) if deadline else waypoint_decide(st, goal, p)
        dur = p.eps if scenario.deterministic else p.eps * (1.0 - rng.random())
        if deadline and T > 0:
            dur = min(dur, T)
        # the chosen control must not carry the robot beyond the region within eps
        reach, _, _ = flow_line(pos, v, ch.a_r, p.eps)
        if reach >= hi:
            out.overshoot = True
            out.notes.append(f"step {step}: choice can pass p_g + Delta_g")
        pos1, v1, el = flow_line(pos, v, ch.a_r, dur)
        if record:
            pre = _robot_state(pos, y, v, 0.0, 0.0)
            post = _robot_state(pos, y, v, ch.a_r, 0.0)
            trace.steps.append(TraceStep(step, t, pre, post, (), (), ch))
        pos, v = pos1, v1
        t += el
        T -= el
        step += 1
        if pos >= hi:
            out.overshoot = True
        if deadline and T <= 0:
            ok = v == 0 and lo < pos < hi
            out.deadline_met = ok if out.deadline_met is None else (out.deadline_met and ok)
            if not ok:
                out.notes.append(f"t={t:.6g}: deadline passed at p={pos:.6g}, v={v:.6g}")
        if v == 0 and lo < pos < hi:
            out.reached = True
            if not deadline or T <= 0:
                break
    out.time, out.final_p, out.final_v = t, pos, v
    out.success = out.reached and not out.overshoot and (out.deadline_met is not False)
    if deadline and out.deadline_met is None:
        out.success = False
        out.notes.append("horizon ended before the deadline")
    if record:
        trace.final_robot = _robot_state(pos, y, v, 0.0, 0.0)
        trace.final_t = t
        out.trace = trace
    return out


def obstacle_accel(rng: random.Random, v_o: float, dt: float, params: WorldParams) -> float:
    """Random obstacle acceleration in [-b, A] keeping its speed within [V_min, V] over dt."""
    lo = max(-params.b, (params.V_min - v_o) / dt)
    hi = min(params.A, (params.V - v_o) / dt)
    if hi < lo:
        return 0.0
    return lo + (hi - lo) * rng.random()


def run_intersection(scenario: Scenario, record: bool = False) -> LivenessOutcome:
    """Cross the intersection against an obstacle that keeps moving at >= V_min."""
    p = scenario.params
    goal = scenario.goal
    deadline = goal.kind is GoalKind.INTERSECTION_DEADLINE
    rng = random.Random(scenario.seed)
    o0 = scenario.obstacles0[0]
    s = Crossing(scenario.robot0.p_r.x, 0.0, o0.p_o.y, o0.v_o.y)
    T = intersection_timer(s, goal, p)
    out = LivenessOutcome(goal.kind, False)
    trace = Trace() if record else None
    px, py = goal.p_x
    t = 0.0
    step = 0
    passed_at = None
    while t < scenario.horizon:
        ch = intersection_decide(s, goal, p, deadline)
        dur = p.eps if scenario.deterministic else p.eps * (1.0 - rng.random())
        if deadline and T < goal.deadline:
            dur = min(dur, goal.deadline - T)
        a_o = obstacle_accel(rng, s.v_o, dur, p)
        pr1, vr1, el = flow_line(s.p_r, s.v_r, ch.a_r, dur)
        if el == 0:
            el = dur  # already at rest: the robot holds its position
        po1 = s.p_o + s.v_o * el + 0.5 * a_o * el * el
        vo1 = s.v_o + a_o * el
        dmin = _crossing_min_distance(s, ch.a_r, a_o, el, goal)
        if s.v_r > 0 or ch.a_r > 0:
            out.min_distance_moving = min(out.min_distance_moving, dmin)
            if dmin <= CONTACT_TOL:
                out.contact_while_moving = True
                out.notes.append(f"t={t:.6g}: contact while moving")
        if record:
            pre = _robot_state(s.p_r, py, s.v_r, 0.0, 0.0)
            post = _robot_state(s.p_r, py, s.v_r, ch.a_r, 0.0)
            ob = (ObstacleState(Vec2(px, s.p_o), Vec2(0.0, s.v_o), p.V, Vec2(0.0, 1.0), a_o),)
            trace.steps.append(TraceStep(step, t, pre, post, ob, ob, ch))
        s = Crossing(pr1, vr1, po1, vo1)
        t += el
        T += el
        step += 1
        if passed_at is None and s.p_r > px:
            passed_at = T
        if deadline and T >= goal.deadline:
            out.deadline_met = s.p_r > px
            break
        if not deadline and passed_at is not None:
            break
    out.reached = passed_at is not None
    out.time, out.final_p, out.final_v = t, s.p_r, s.v_r
    out.success = out.reached and not out.contact_while_moving
    if deadline:
        out.success = out.success and bool(out.deadline_met)
    if record:
        trace.final_robot = _robot_state(s.p_r, py, s.v_r, 0.0, 0.0)
        trace.final_obstacles = (ObstacleState(Vec2(px, s.p_o), Vec2(0.0, s.v_o), p.V, Vec2(0.0, 1.0)),)
        trace.final_t = t
        out.trace = trace
    return out


def _crossing_min_distance(s: Crossing, a_r: float, a_o: float, dur: float, goal: GoalSpec,
                           samples: int = 16) -> float:
    """Smallest Euclidean robot-obstacle distance over the interval (sampled, then refined)."""
    def dist(t):
        if a_r < 0 and s.v_r + a_r * t <= 0:
            x = s.p_r + s.v_r * s.v_r / (-2.0 * a_r)
        else:
            x = s.p_r + s.v_r * t + 0.5 * a_r * t * t
        y = s.p_o + s.v_o * t + 0.5 * a_o * t * t
        return math.hypot(x - goal.p_x.x, y - goal.p_x.y)

    ts = [dur * k / samples for k in range(samples + 1)]
    ds = [dist(t) for t in ts]
    k = min(range(len(ds)), key=ds.__getitem__)
    # both coordinates move monotonically; unless both cross the intersection
    # the endpoint gaps bound the distance from below
    x1 = flow_line(s.p_r, s.v_r, a_r, dur)[0] - goal.p_x.x
    y1 = s.p_o + s.v_o * dur + 0.5 * a_o * dur * dur - goal.p_x.y
    x0 = s.p_r - goal.p_x.x
    y0 = s.p_o - goal.p_x.y
    gx = 0.0 if x0 * x1 <= 0 else min(abs(x0), abs(x1))
    gy = 0.0 if y0 * y1 <= 0 else min(abs(y0), abs(y1))
    if max(gx, gy) > 1e-3:
        return ds[k]
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, samples)]
    from scipy.optimize import minimize_scalar

    if hi > lo:
        r = minimize_scalar(dist, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        return min(ds[k], float(r.fun))
    return ds[k]
