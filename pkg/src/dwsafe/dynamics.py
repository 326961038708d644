"""Closed-form motion of the robot along circular arcs and of the obstacles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .state import LINK_TOL, ObstacleState, RobotState, Vec2

# Below this turning angle sin(x)/x and (1-cos x)/x are evaluated by series.
SMALL_ANGLE = 1e-6


@dataclass(frozen=True, slots=True)
class FlowResult:
    post: RobotState
    stopped_at: Optional[float]
    elapsed: float


def _arc_factors(phi: float) -> tuple[float, float]:
    """(sin(phi)/phi, (1-cos(phi))/phi) without cancellation."""
    if abs(phi) < SMALL_ANGLE:
        p2 = phi * phi
        return 1.0 - p2 / 6.0, phi / 2.0 - phi * p2 / 24.0
    h = math.sin(phi / 2.0)
    return math.sin(phi) / phi, 2.0 * h * h / phi


def flow_robot(pre: RobotState, a: float, omega0: float, r_c: float, dt: float) -> FlowResult:
    """Evolve the robot for up to dt with acceleration a on the curve of radius r_c.

    The interval ends early when the speed reaches zero under braking; the
    robot never drives backwards.
    """
    if not dt >= 0:
        raise ValueError("dt must be >= 0")
    if r_c == 0:
        raise ValueError("r_c must be nonzero")
    dx, dy = pre.d_r
    if abs(math.hypot(dx, dy) - 1.0) > LINK_TOL:
        raise ValueError("d_r must be a unit vector")
    v0 = pre.v_r
    if v0 < 0:
        raise ValueError("v_r must be >= 0")
    if abs(omega0 * r_c - v0) > LINK_TOL * max(1.0, v0):
        raise ValueError("omega0 * r_c must equal v_r")
    stopped_at = None
    T = dt
    if a < 0 and v0 + a * dt <= 0:
        T = -v0 / a
        stopped_at = T
    if stopped_at is None:
        v = v0 + a * T
        s = v0 * T + 0.5 * a * T * T
    else:
        v = 0.0
        s = v0 * v0 / (-2.0 * a)
    phi = s / r_c
    sf, cf = _arc_factors(phi)
    # displacement = s * (sinc(phi) d + (1-cos)/phi d^perp), with d^perp = (-dy, dx)
    px = pre.p_r[0] + s * (sf * dx - cf * dy)
    py = pre.p_r[1] + s * (sf * dy + cf * dx)
    c = math.cos(phi)
    sn = math.sin(phi)
    d = Vec2(c * dx - sn * dy, c * dy + sn * dx)
    p_c = Vec2(pre.p_r[0] - r_c * dy, pre.p_r[1] + r_c * dx)
    post = RobotState(Vec2(px, py), v, a, d, v / r_c, r_c, p_c, pre.beta + phi, pre.t + T)
    return FlowResult(post, stopped_at, T)


def robot_position_at(pre: RobotState, a: float, r_c: float, t: float) -> tuple[float, float]:
    """Position only, for distance sampling inside an interval (no validation)."""
    v0 = pre.v_r
    if a < 0 and v0 + a * t <= 0:
        s = v0 * v0 / (-2.0 * a)
    else:
        s = v0 * t + 0.5 * a * t * t
    phi = s / r_c
    sf, cf = _arc_factors(phi)
    dx, dy = pre.d_r
    return pre.p_r[0] + s * (sf * dx - cf * dy), pre.p_r[1] + s * (sf * dy + cf * dx)


def flow_obstacle(pre: ObstacleState, dt: float) -> ObstacleState:
    if not dt >= 0:
        raise ValueError("dt must be >= 0")
    p = pre.p_o
    v = pre.v_o
    return ObstacleState(Vec2(p[0] + dt * v[0], p[1] + dt * v[1]), v, pre.v_max,
                         pre.d_o, pre.a_o, pre.visible_flag)


def flow_refined_obstacle(pre: ObstacleState, dt: float) -> ObstacleState:
    """Straight motion along d_o with speed changing at a_o, stopping at zero speed."""
    if not dt >= 0:
        raise ValueError("dt must be >= 0")
    d = pre.d_o
    if abs(d.norm() - 1.0) > LINK_TOL:
        raise ValueError("d_o must be a unit vector")
    speed0 = pre.v_o.norm()
    a = pre.a_o
    if speed0 + max(a, 0.0) * dt > pre.v_max + LINK_TOL:
        raise ValueError("obstacle would exceed its speed bound")
    if a < 0 and speed0 + a * dt <= 0:
        s = speed0 * speed0 / (-2.0 * a)
        speed = 0.0
    else:
        s = speed0 * dt + 0.5 * a * dt * dt
        speed = speed0 + a * dt
    p = Vec2(pre.p_o[0] + s * d[0], pre.p_o[1] + s * d[1])
    return ObstacleState(p, Vec2(speed * d[0], speed * d[1]), pre.v_max, d, a, pre.visible_flag)


def refined_obstacle_position(pre: ObstacleState, t: float) -> tuple[float, float]:
    speed0 = pre.v_o.norm()
    a = pre.a_o
    if a < 0 and speed0 + a * t <= 0:
        s = speed0 * speed0 / (-2.0 * a)
    else:
        s = speed0 * t + 0.5 * a * t * t
    return pre.p_o[0] + s * pre.d_o[0], pre.p_o[1] + s * pre.d_o[1]


@dataclass
class DiffReport:
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok


def check_differential_invariants(pre: RobotState, post: RobotState, V_bound: float,
                                  pre_obs: Sequence[ObstacleState] | ObstacleState = (),
                                  post_obs: Sequence[ObstacleState] | ObstacleState = (),
                                  obstacle_time: Optional[float] = None) -> DiffReport:
    """Check the per-interval invariants of a flow from pre to post.

    The elapsed time is post.t - pre.t and the acceleration is post.a_r.
    ``obstacle_time`` overrides the elapsed time for the obstacle squares, for
    intervals in which the robot stopped early and then stood still.
    """
    if isinstance(pre_obs, ObstacleState):
        pre_obs = (pre_obs,)
    if isinstance(post_obs, ObstacleState):
        post_obs = (post_obs,)
    rep = DiffReport()
    t = post.t - pre.t
    a = post.a_r
    if not t >= 0:
        rep.failures.append(f"time: t = {t!r} < 0")
        return rep
    dn = abs(math.hypot(post.d_r[0], post.d_r[1]) - 1.0)
    if dn > 1e-9:
        rep.failures.append(f"orientation: |d| off by {dn:.3g}")
    dv = abs(post.v_r - (pre.v_r + a * t))
    if dv > 1e-12:
        rep.failures.append(f"speed: v - (v0 + a t) = {dv:.3g}")
    half = t * (post.v_r - a / 2.0 * t)
    for k, name in ((0, "x"), (1, "y")):
        disp = abs(post.p_r[k] - pre.p_r[k])
        if disp > half + 1e-9:
            rep.failures.append(f"robot bounding square {name}: {disp:.6g} > {half:.6g}")
    for i, (o0, o1) in enumerate(zip(pre_obs, post_obs)):
        lim = (t if obstacle_time is None else obstacle_time) * V_bound
        for k, name in ((0, "x"), (1, "y")):
            disp = abs(o1.p_o[k] - o0.p_o[k])
            if disp > lim + 1e-9:
                rep.failures.append(f"obstacle {i} bounding square {name}: {disp:.6g} > {lim:.6g}")
    return rep
