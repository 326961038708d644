"""Safe-distance formulas, admissibility predicates and loop invariants.

All distances are compared in the infinity norm with strict inequality.
The infinity norm never exceeds the Euclidean norm, so every bound checked
here also holds for the Euclidean distance.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .state import (
    ObstacleState,
    Refinement,
    RobotState,
    SafetyMode,
    Vec2,
    WorldParams,
)

R = Refinement


@dataclass(frozen=True, slots=True)
class SafetyQuery:
    mode: SafetyMode
    refinements: frozenset
    v_r: float
    params: WorldParams
    a_r: Optional[float] = None
    v_hat: Optional[float] = None

    def __post_init__(self):
        if self.v_r < 0:
            raise ValueError("v_r must be >= 0")


def stopping_distance(v: float, b: float) -> float:
    if v < 0 or b <= 0:
        raise ValueError("need v >= 0 and b > 0")
    return v * v / (2.0 * b)


def accel_compensation(v: float, acc: float, b: float, eps: float) -> float:
    """Distance covered while accelerating at ``acc`` for eps and then braking off the gain."""
    if b <= 0 or eps <= 0:
        raise ValueError("need b > 0 and eps > 0")
    return (acc / b + 1.0) * (acc / 2.0 * eps * eps + eps * v)


def uses_actual_accel(refinements) -> bool:
    return R.ACTUAL_ACCEL in refinements or R.TRAJECTORY_DISTANCE in refinements


def effective_speed(q: SafetyQuery) -> float:
    """Upper bound on the true speed available to the controller."""
    if R.VELOCITY_UNCERTAINTY in q.refinements:
        v_hat = q.v_r if q.v_hat is None else q.v_hat
        return v_hat + q.params.Delta_v
    return q.v_r


def effective_braking(q: SafetyQuery) -> float:
    if R.ACTUATOR_PERTURBATION in q.refinements:
        return q.params.b * q.params.Delta_a
    return q.params.b


def _accel(q: SafetyQuery) -> float:
    p = q.params
    if not uses_actual_accel(q.refinements):
        return p.A
    if q.a_r is None:
        raise ValueError("actual-acceleration query needs a_r")
    if not -p.b <= q.a_r <= p.A:
        raise ValueError("a_r must lie in [-b, A]")
    return q.a_r


@functools.lru_cache(maxsize=256)
def _param_errors(p: WorldParams) -> tuple:
    return tuple(p.violations())


def _require_valid(p: WorldParams) -> None:
    bad = _param_errors(p)
    if bad:
        raise ValueError("; ".join(bad))


def safe_distance(q: SafetyQuery, V: Optional[float] = None) -> float:
    """Strict lower bound on norm_inf(p_r - p_o) that admits the chosen acceleration.

    ``V`` overrides the obstacle speed bound (per-obstacle bounds).
    """
    _require_valid(q.params)
    return safe_distance_unchecked(q, V)


def safe_distance_unchecked(q: SafetyQuery, V: Optional[float] = None) -> float:
    """safe_distance for callers that already validated the parameters."""
    return safe_distances(q, (_accel(q),), V)[0]


def safe_distances(q: SafetyQuery, accs, V: Optional[float] = None) -> list[float]:
    """safe_distance of ``q`` for each acceleration in ``accs`` (parameters assumed valid).

    Without the actual-acceleration refinements the formula uses A whatever ``accs`` holds.
    """
    p = q.params
    V = p.V if V is None else V
    v = effective_speed(q)
    b = effective_braking(q)
    eps = p.eps
    refs = q.refinements
    actual = uses_actual_accel(refs)
    extra = 0.0
    if q.mode is SafetyMode.PASSIVE_FRIENDLY:
        extra += V * V / (2.0 * p.b_o) + p.tau * V
    if R.LOCATION_UNCERTAINTY in refs:
        extra += p.Delta_p
    static = q.mode is SafetyMode.STATIC
    out = []
    for acc in accs:
        if not actual:
            acc = p.A
        if static:
            d = v * v / (2.0 * b) + (acc / b + 1.0) * (acc / 2.0 * eps * eps + eps * v)
        elif actual and v + acc * eps < 0:
            # the robot stops inside this cycle under its own (negative) acceleration
            d = -v * v / (2.0 * acc) - V * v / acc
        else:
            d = (v * v / (2.0 * b) + V * v / b
                 + (acc / b + 1.0) * (acc / 2.0 * eps * eps + eps * (v + V)))
        out.append(d + extra)
    return out


def trajectory_bound(q: SafetyQuery, V: Optional[float] = None) -> float:
    """How far the obstacle may travel toward the robot's circle before the robot stops."""
    return trajectory_bounds(q, (_accel(q),), V)[0]


def trajectory_bounds(q: SafetyQuery, accs, V: Optional[float] = None) -> list[float]:
    p = q.params
    V = p.V if V is None else V
    v = effective_speed(q)
    b = effective_braking(q)
    eps = p.eps
    extra = p.Delta_p if R.LOCATION_UNCERTAINTY in q.refinements else 0.0
    out = []
    for acc in accs:
        if v + acc * eps >= 0:
            d = V * (eps + (v + acc * eps) / b)
        else:
            d = -V * v / acc
        out.append(d + extra)
    return out


def circle_clearance(p_r: Vec2, d_r: Vec2, r_c: float, p_o: Vec2) -> float:
    """| |r_c| - |p_o - p_c| | for the circle through p_r with tangent d_r.

    Computed without forming p_c, which loses all precision for the very
    large radii that represent straight motion.
    """
    # p_o - p_c = w - r_c n with w = p_o - p_r and n = d_r^perp
    wx = p_o[0] - p_r[0]
    wy = p_o[1] - p_r[1]
    nx, ny = -d_r[1], d_r[0]
    wn = wx * nx + wy * ny
    ww = wx * wx + wy * wy
    ox = wx - r_c * nx
    oy = wy - r_c * ny
    denom = abs(r_c) + math.hypot(ox, oy)
    return abs((2.0 * r_c * wn - ww) / denom)


def visibility(robot: RobotState, p_o: Vec2, gamma: float) -> bool:
    """Obstacle lies inside the sector of half-angle gamma/2 around the heading (inclusive)."""
    rx = p_o[0] - robot.p_r[0]
    ry = p_o[1] - robot.p_r[1]
    if rx == 0 and ry == 0:
        return True
    dx, dy = robot.d_r
    angle = abs(math.atan2(dx * ry - dy * rx, dx * rx + dy * ry))
    return angle <= gamma / 2.0 + 1e-12


def cda_ok(v_r: float, r_c: float, params: WorldParams) -> bool:
    """Clear distance ahead: the stopping arc fits inside the visible sector."""
    if r_c == 0:
        raise ValueError("r_c must be nonzero")
    p = params
    return p.gamma * abs(r_c) > (v_r * v_r / (2.0 * p.b)
                                 + accel_compensation(v_r, p.A, p.b, p.eps))


def is_safe_curve(robot: RobotState, obstacle: ObstacleState, q: SafetyQuery,
                  V: Optional[float] = None, kappa: float = 1.0) -> bool:
    """Admissibility of the candidate curve carried by ``robot`` against one obstacle.

    ``robot`` holds the (observed) position, heading and the candidate r_c.
    ``kappa`` scales every threshold; 1 is the verified controller.
    """
    p = q.params
    if q.mode is SafetyMode.PASSIVE_ORIENTATION:
        if not cda_ok(q.v_r, robot.r_c, p):
            return False
        if not visibility(robot, obstacle.p_o, p.gamma):
            return True
    dx = robot.p_r[0] - obstacle.p_o[0]
    dy = robot.p_r[1] - obstacle.p_o[1]
    if max(abs(dx), abs(dy)) > kappa * safe_distance(q, V):
        return True
    if R.TRAJECTORY_DISTANCE in q.refinements:
        clearance = circle_clearance(robot.p_r, robot.d_r, robot.r_c, obstacle.p_o)
        return clearance > kappa * trajectory_bound(q, V)
    return False


def eta_obs(p_r: Vec2, p_o: Vec2, V: float, params: WorldParams) -> bool:
    """Room for the obstacle to react within tau and brake with b_o before reaching p_r."""
    dx = p_r[0] - p_o[0]
    dy = p_r[1] - p_o[1]
    return max(abs(dx), abs(dy)) > V * V / (2.0 * params.b_o) + params.tau * V


def passive_friendly_obstacle_can_stop(robot: RobotState, obstacle: ObstacleState,
                                       params: WorldParams, V: Optional[float] = None) -> bool:
    if robot.v_r != 0:
        raise ValueError("the robot must be stopped")
    return eta_obs(robot.p_r, obstacle.p_o, params.V if V is None else V, params)


def obstacle_stop_witness(robot: RobotState, obstacle: ObstacleState, params: WorldParams,
                          V: Optional[float] = None) -> tuple[float, float]:
    """Worst-case friendly obstacle run toward a stopped robot.

    The obstacle heads straight at the robot at speed V, keeps going for tau,
    then brakes with b_o. Returns (time until it stands still, Euclidean
    distance left at that moment).
    """
    from .dynamics import flow_refined_obstacle

    V = params.V if V is None else V
    rel = robot.p_r - obstacle.p_o
    dist = rel.norm()
    d_o = rel * (1.0 / dist) if dist > 0 else Vec2(1.0, 0.0)
    o = ObstacleState(obstacle.p_o, d_o * V, V, d_o, 0.0)
    o = flow_refined_obstacle(o, params.tau)
    o = replace(o, a_o=-params.b_o)
    t_stop = V / params.b_o
    o = flow_refined_obstacle(o, t_stop)
    return params.tau + t_stop, (robot.p_r - o.p_o).norm()


def obstacle_bounds(obstacles: Iterable[ObstacleState], params: WorldParams, refinements) -> list[float]:
    if R.MULTI_OBSTACLE in refinements:
        return [o.v_max for o in obstacles]
    return [params.V for _ in obstacles]


def loop_invariant(mode: SafetyMode, robot: RobotState, obstacles, params: WorldParams,
                   refinements=frozenset()) -> bool:
    """Inductive invariant at a control-cycle boundary, on true (not observed) values."""
    v = robot.v_r
    b = params.b * params.Delta_a if R.ACTUATOR_PERTURBATION in refinements else params.b
    bounds = obstacle_bounds(obstacles, params, refinements)
    if mode is SafetyMode.STATIC:
        need = v * v / (2.0 * b)
        return all(_dist_inf(robot.p_r, o.p_o) > need for o in obstacles)
    if v == 0:
        return True
    if mode is SafetyMode.PASSIVE_ORIENTATION:
        if not (params.gamma - abs(robot.beta)) * abs(robot.r_c) > v * v / (2.0 * b):
            return False
    for o, V in zip(obstacles, bounds):
        if mode is SafetyMode.PASSIVE_ORIENTATION and o.visible_flag <= 0:
            continue
        need = v * v / (2.0 * b) + V * v / b
        if mode is SafetyMode.PASSIVE_FRIENDLY:
            need += V * V / (2.0 * params.b_o) + params.tau * V
        if _dist_inf(robot.p_r, o.p_o) > need:
            continue
        if R.TRAJECTORY_DISTANCE in refinements:
            if circle_clearance(robot.p_r, robot.d_r, robot.r_c, o.p_o) > V * v / b:
                continue
        return False
    return True


def _dist_inf(a: Vec2, c: Vec2) -> float:
    return max(abs(a[0] - c[0]), abs(a[1] - c[1]))


def max_velocity(mode: SafetyMode, distance: float, params: WorldParams,
                 refinements=frozenset()) -> float:
    """Supremum of speeds whose safe distance stays below ``distance``.

    Solves the quadratic safe_distance(v) = distance for its positive root.
    Valid for the formulas driven by the full acceleration A.
    """
    if not distance > 0:
        raise ValueError("distance must be > 0")
    bad = params.violations()
    if bad:
        raise ValueError("; ".join(bad))
    if uses_actual_accel(refinements):
        raise ValueError("max_velocity applies to the A-driven formulas")
    p = params
    b = p.b * p.Delta_a if R.ACTUATOR_PERTURBATION in refinements else p.b
    A, eps = p.A, p.eps
    k = A / b + 1.0
    if mode is SafetyMode.STATIC:
        c1 = k * eps
        c0 = k * A / 2.0 * eps * eps
    else:
        V = p.V
        c1 = V / b + k * eps
        c0 = k * (A / 2.0 * eps * eps + eps * V)
        if mode is SafetyMode.PASSIVE_FRIENDLY:
            c0 += V * V / (2.0 * p.b_o) + p.tau * V
    if R.LOCATION_UNCERTAINTY in refinements:
        c0 += p.Delta_p
    c2 = 1.0 / (2.0 * b)
    c0 -= distance
    # root in u = v + Delta_v under velocity uncertainty
    if c0 >= 0:
        u = 0.0
    else:
        u = -2.0 * c0 / (c1 + math.sqrt(c1 * c1 - 4.0 * c2 * c0))
    if R.VELOCITY_UNCERTAINTY in refinements:
        u -= p.Delta_v
    return max(0.0, u)


# Reference configurations: (v, A, b, eps) and (v, A, b, V, eps) rows, with the
# two-decimal values they are commonly published with.
STATIC_DISTANCE_ROWS = [
    ((1.0, 1.0, 1.0, 0.05), 0.61),
    ((0.5, 0.5, 0.5, 0.025), 0.28),
    ((2.0, 2.0, 2.0, 0.1), 1.42),
    ((1.0, 1.0, 2.0, 0.05), 0.33),
    ((1.0, 2.0, 1.0, 0.05), 0.66),
]
STATIC_SPEED_CONFIGS = [(1.0, 1.0, 0.05), (0.5, 0.5, 0.025), (2.0, 2.0, 0.1),
                        (1.0, 2.0, 0.05), (2.0, 1.0, 0.05)]
STATIC_CORRIDOR_SPEEDS = [1.48, 1.09, 1.85, 2.08, 1.43]
STATIC_DOOR_SPEEDS = [0.61, 0.47, 0.63, 0.85, 0.56]
PASSIVE_DISTANCE_ROWS = [
    ((1.0, 1.0, 1.0, 1.0, 0.05), 0.61),
    ((0.5, 0.5, 0.5, 0.5, 0.025), 0.28),
    ((2.0, 2.0, 2.0, 2.0, 0.1), 1.42),
    ((1.0, 1.0, 2.0, 1.0, 0.05), 0.33),
    ((1.0, 2.0, 1.0, 2.0, 0.05), 0.66),
]
PASSIVE_SPEED_CONFIGS = [(1.0, 1.0, 1.0, 0.05), (0.5, 0.5, 0.5, 0.025), (2.0, 2.0, 2.0, 0.1),
                         (1.0, 2.0, 1.0, 0.05), (2.0, 1.0, 2.0, 0.05)]
PASSIVE_CORRIDOR_SPEEDS = [0.77, 0.69, 0.61, 0.4, 1.3]
PASSIVE_DOOR_SPEEDS = [0.12, 0.18, 0.0, 0.26, 1.0]
CORRIDOR = 1.25
DOOR = 0.25


def round2_matches(value: float, reference: float) -> bool:
    return abs(round(value, 2) - reference) <= 0.01 + 1e-9


@dataclass(frozen=True)
class TableRow:
    table: str
    config: tuple
    value: float
    reference: float

    @property
    def matches(self) -> bool:
        return round2_matches(self.value, self.reference)


def table_rows() -> list[TableRow]:
    rows = []
    for (v, A, b, eps), ref in STATIC_DISTANCE_ROWS:
        q = SafetyQuery(SafetyMode.STATIC, frozenset(), v, WorldParams(A=A, b=b, eps=eps, V=0.0))
        rows.append(TableRow("static-distance", (v, A, b, eps), safe_distance(q), ref))
    for width, name, refs in ((CORRIDOR, "static-corridor", STATIC_CORRIDOR_SPEEDS),
                              (DOOR, "static-door", STATIC_DOOR_SPEEDS)):
        for (A, b, eps), ref in zip(STATIC_SPEED_CONFIGS, refs):
            p = WorldParams(A=A, b=b, eps=eps, V=0.0)
            rows.append(TableRow(name, (A, b, eps), max_velocity(SafetyMode.STATIC, width, p), ref))
    for (v, A, b, V, eps), ref in PASSIVE_DISTANCE_ROWS:
        q = SafetyQuery(SafetyMode.PASSIVE, frozenset(), v, WorldParams(A=A, b=b, eps=eps, V=V))
        rows.append(TableRow("passive-distance", (v, A, b, V, eps), safe_distance(q), ref))
    for width, name, refs in ((CORRIDOR, "passive-corridor", PASSIVE_CORRIDOR_SPEEDS),
                              (DOOR, "passive-door", PASSIVE_DOOR_SPEEDS)):
        for (A, b, V, eps), ref in zip(PASSIVE_SPEED_CONFIGS, refs):
            p = WorldParams(A=A, b=b, eps=eps, V=V)
            rows.append(TableRow(name, (A, b, V, eps), max_velocity(SafetyMode.PASSIVE, width, p), ref))
    return rows
