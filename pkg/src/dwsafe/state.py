"""Shared value types: vectors, robot/obstacle states, parameters, scenarios."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

# Geometric link tolerance (unit heading, rigid-body link, curve center).
LINK_TOL = 1e-9

# Radius used to represent straight-line motion as a very flat arc.
STRAIGHT_RADIUS = 1e9


class Vec2(NamedTuple):
    x: float
    y: float

    def __add__(self, o):  # type: ignore[override]
        return Vec2(self.x + o.x, self.y + o.y)

    def __sub__(self, o):
        return Vec2(self.x - o.x, self.y - o.y)

    def __mul__(self, k):  # type: ignore[override]
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __neg__(self):
        return Vec2(-self.x, -self.y)

    def dot(self, o) -> float:
        return self.x * o.x + self.y * o.y

    def perp(self) -> "Vec2":
        """Counter-clockwise quarter turn: (x, y) -> (-y, x)."""
        return Vec2(-self.y, self.x)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


ZERO = Vec2(0.0, 0.0)


def norm_inf(v: Vec2) -> float:
    return max(abs(v[0]), abs(v[1]))


def norm_2(v: Vec2) -> float:
    return math.hypot(v[0], v[1])


def unit(angle: float) -> Vec2:
    return Vec2(math.cos(angle), math.sin(angle))


class SafetyMode(str, enum.Enum):
    STATIC = "static"
    PASSIVE = "passive"
    PASSIVE_FRIENDLY = "friendly"
    PASSIVE_ORIENTATION = "orientation"


class Refinement(str, enum.Enum):
    ACTUAL_ACCEL = "ActualAccel"
    TRAJECTORY_DISTANCE = "TrajectoryDistance"
    LOCATION_UNCERTAINTY = "LocationUncertainty"
    ACTUATOR_PERTURBATION = "ActuatorPerturbation"
    VELOCITY_UNCERTAINTY = "VelocityUncertainty"
    NON_SYNC = "NonSync"
    MULTI_OBSTACLE = "MultiObstacle"


class PolicyKind(str, enum.Enum):
    RANDOM = "Random"
    HEAD_ON = "HeadOn"
    PURSUIT = "Pursuit"
    REFINED_ACCEL = "RefinedAccel"
    BLOCKER = "Blocker"


class Branch(str, enum.Enum):
    BRAKE = "Brake"
    STAY = "Stay"
    ACCELERATE = "Accelerate"


class GoalKind(str, enum.Enum):
    POINT = "point"
    WAYPOINT = "waypoint"
    WAYPOINT_DEADLINE = "waypoint-deadline"
    INTERSECTION = "intersection"
    INTERSECTION_DEADLINE = "intersection-deadline"


def parse_mode(text: str) -> SafetyMode:
    t = text.strip().lower()
    aliases = {"passive-friendly": "friendly", "passivefriendly": "friendly",
               "passive-orientation": "orientation", "passiveorientation": "orientation"}
    return SafetyMode(aliases.get(t, t))


def parse_refinement(text: str) -> Refinement:
    t = text.strip().lower().replace("-", "").replace("_", "")
    for r in Refinement:
        if r.value.lower() == t:
            return r
    raise ValueError(f"unknown refinement {text!r}")


def parse_policy(text: str) -> PolicyKind:
    t = text.strip().lower().replace("-", "").replace("_", "")
    for p in PolicyKind:
        if p.value.lower() == t:
            return p
    raise ValueError(f"unknown obstacle policy {text!r}")


@dataclass(frozen=True, slots=True)
class RobotState:
    p_r: Vec2
    v_r: float
    a_r: float
    d_r: Vec2
    omega_r: float
    r_c: float
    p_c: Vec2
    beta: float = 0.0
    t: float = 0.0

    @staticmethod
    def at_rest(p: Vec2, d: Vec2, r_c: float = STRAIGHT_RADIUS) -> "RobotState":
        """Stationary robot at p facing d, on a curve of signed radius r_c."""
        p = Vec2(float(p[0]), float(p[1]))
        d = Vec2(float(d[0]), float(d[1]))
        return RobotState(p, 0.0, 0.0, d, 0.0, r_c, curve_center(p, d, r_c))

    def violations(self, track_center: bool = True) -> list[str]:
        out = []
        if not (self.p_r.is_finite() and self.d_r.is_finite() and self.p_c.is_finite()):
            out.append("non-finite vector component")
        for name in ("v_r", "a_r", "omega_r", "r_c", "beta", "t"):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} must be finite")
        if self.v_r < 0:
            out.append("v_r must be >= 0")
        if abs(self.d_r.norm() - 1.0) > LINK_TOL:
            out.append("d_r must be a unit vector")
        if self.r_c == 0:
            out.append("r_c must be nonzero")
            return out
        if abs(self.r_c * self.omega_r - self.v_r) > LINK_TOL * max(1.0, self.v_r):
            out.append("rigid-body link r_c*omega_r = v_r violated")
        if track_center:
            # relative tolerance: a center 1e9 m away cannot be stored to 1e-9 m
            tol = LINK_TOL * max(1.0, abs(self.r_c))
            rel = self.p_r - self.p_c
            if abs(abs(self.r_c) - rel.norm()) > tol:
                out.append("|r_c| = |p_r - p_c| violated")
            d_back = rel.perp() * (1.0 / self.r_c)
            if (d_back - self.d_r).norm() > tol / abs(self.r_c) + LINK_TOL:
                out.append("d_r = (p_r - p_c)^perp / r_c violated")
        return out


def curve_center(p: Vec2, d: Vec2, r_c: float) -> Vec2:
    """Center of the circle through p with tangent d and signed radius r_c."""
    # d = (p - p_c)^perp / r_c  =>  p_c = p + r_c * d^perp
    return Vec2(p.x - r_c * d.y, p.y + r_c * d.x)


@dataclass(frozen=True, slots=True)
class ObstacleState:
    p_o: Vec2
    v_o: Vec2
    v_max: float
    d_o: Vec2 = Vec2(1.0, 0.0)
    a_o: float = 0.0
    visible_flag: float = 1.0

    def violations(self) -> list[str]:
        out = []
        if not (self.p_o.is_finite() and self.v_o.is_finite()):
            out.append("non-finite obstacle vector")
        if self.v_max < 0:
            out.append("v_max must be >= 0")
        if self.v_o.norm() > self.v_max + LINK_TOL:
            out.append("obstacle speed exceeds its bound")
        if abs(self.d_o.norm() - 1.0) > LINK_TOL:
            out.append("d_o must be a unit vector")
        return out

    @property
    def speed(self) -> float:
        return self.v_o.norm()


@dataclass(frozen=True)
class WorldParams:
    A: float = 1.0
    b: float = 1.0
    b_o: float = 1.0
    eps: float = 0.05
    V: float = 1.0
    Omega: float = 1.0
    tau: float = 0.0
    gamma: float = math.pi
    Delta_p: float = 0.0
    Delta_a: float = 1.0
    Delta_v: float = 0.0
    V_min: float = 0.5
    V_g: float = 1.0
    Delta_g: float = 1.0
    eps_o: Optional[float] = None

    @property
    def obstacle_eps(self) -> float:
        return self.eps if self.eps_o is None else self.eps_o

    def violations(self) -> list[str]:
        out = []
        for name in ("A", "b", "b_o", "eps", "V", "Omega", "tau", "gamma", "Delta_p",
                     "Delta_a", "Delta_v", "V_min", "V_g", "Delta_g"):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} must be finite")
        if out:
            return out
        positive = ("b", "b_o", "eps", "gamma", "V_min", "V_g", "Delta_g")
        nonneg = ("A", "V", "Omega", "tau", "Delta_p", "Delta_v")
        for name in positive:
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0")
        for name in nonneg:
            if not getattr(self, name) >= 0:
                out.append(f"{name} must be >= 0")
        if not 0 < self.Delta_a <= 1:
            out.append("Delta_a must be in (0, 1]")
        if self.eps_o is not None and not self.eps_o > 0:
            out.append("eps_o must be > 0")
        return out

    def with_overrides(self, **kw) -> "WorldParams":
        return replace(self, **kw)


PARAM_FIELDS = ("A", "b", "b_o", "eps", "V", "Omega", "tau", "gamma", "Delta_p", "Delta_a",
                "Delta_v", "V_min", "V_g", "Delta_g", "eps_o")


@dataclass(frozen=True, slots=True)
class ControlChoice:
    branch: Branch
    a_r: float
    omega_r: float
    r_c: float
    p_c: Vec2
    d_flip: bool = False
    reason: str = ""
    visible: tuple = ()

    def violations(self, v_r: float, params: WorldParams) -> list[str]:
        out = []
        if self.branch is Branch.BRAKE and self.a_r != -params.b:
            out.append("Brake requires a_r = -b")
        if self.branch is Branch.STAY and (self.a_r != 0 or self.omega_r != 0):
            out.append("Stay requires a_r = 0 and omega_r = 0")
        if self.branch is Branch.ACCELERATE:
            if not -params.b <= self.a_r <= params.A:
                out.append("Accelerate requires -b <= a_r <= A")
            if abs(self.omega_r) > params.Omega + LINK_TOL:
                out.append("Accelerate requires |omega_r| <= Omega")
            if self.r_c == 0:
                out.append("Accelerate requires r_c != 0")
            elif abs(self.r_c * self.omega_r - v_r) > LINK_TOL * max(1.0, v_r):
                out.append("Accelerate requires r_c*omega_r = v_r")
        return out


@dataclass(frozen=True)
class GoalSpec:
    """Goal of an episode.

    POINT goals steer the 2-D safety episodes. The 1-D liveness goals use
    ``p_g`` (waypoint on the robot's line), ``p_x`` (intersection point:
    x on the robot's road, y on the obstacle's road), ``deadline`` (D for
    intersections, initial countdown T for waypoints). Speeds V_g, V_min
    and the region half-width Delta_g live in WorldParams.
    """

    kind: GoalKind = GoalKind.POINT
    point: Vec2 = ZERO
    p_g: float = 0.0
    p_x: Vec2 = ZERO
    deadline: float = 0.0


@dataclass(frozen=True)
class Scenario:
    params: WorldParams
    safety_mode: SafetyMode
    robot0: RobotState
    obstacles0: tuple[ObstacleState, ...]
    refinements: frozenset = frozenset()
    obstacle_policy: PolicyKind = PolicyKind.RANDOM
    horizon: float = 30.0
    seed: int = 0
    goal: Optional[GoalSpec] = None
    deterministic: bool = True
    nonsync_cap: int = 8

    def has(self, r: Refinement) -> bool:
        return r in self.refinements

    def obstacle_bound(self, o: ObstacleState) -> float:
        if Refinement.MULTI_OBSTACLE in self.refinements:
            return o.v_max
        return self.params.V


# Refinement pairs whose combined safe distance is not covered by a single argument.
UNSUPPORTED_PAIRS = (
    (Refinement.ACTUAL_ACCEL, Refinement.ACTUATOR_PERTURBATION),
    (Refinement.TRAJECTORY_DISTANCE, Refinement.ACTUATOR_PERTURBATION),
)


def validate_scenario(s: Scenario) -> list[str]:
    """Parameter bounds plus the mode's initial condition; empty when valid."""
    from . import safety  # local import: safety depends on this module

    p = s.params
    out = p.violations()
    if out:
        return out
    if not s.horizon > 0 or not math.isfinite(s.horizon):
        out.append("horizon must be > 0")
    if s.nonsync_cap < 0:
        out.append("nonsync_cap must be >= 0")
    refs = set(s.refinements)
    if refs and s.safety_mode is not SafetyMode.PASSIVE:
        out.append("refinements require passive mode")
    for r1, r2 in UNSUPPORTED_PAIRS:
        if r1 in refs and r2 in refs:
            out.append(f"{r1.value} cannot be combined with {r2.value}")
    r = s.robot0
    goal = s.goal
    liveness = goal is not None and goal.kind is not GoalKind.POINT
    out.extend(r.violations(track_center=not liveness))
    if r.v_r != 0:
        out.append("robot must start at rest (v_r = 0)")
    if r.omega_r != 0:
        out.append("robot must start with omega_r = 0")
    if not s.obstacles0 and not liveness:
        out.append("at least one obstacle is required")
    for i, o in enumerate(s.obstacles0):
        for msg in o.violations():
            out.append(f"obstacle {i}: {msg}")
        bound = s.obstacle_bound(o)
        if o.v_o.norm() > bound + LINK_TOL:
            out.append(f"obstacle {i}: initial speed exceeds V")
        if s.safety_mode is SafetyMode.STATIC and (o.v_o.norm() > 0 or bound > 0):
            out.append(f"obstacle {i}: static mode requires V = 0")
    if liveness:
        out.extend(_validate_goal(s))
        return out
    if out:
        return out
    if s.safety_mode is SafetyMode.PASSIVE_FRIENDLY:
        for o in s.obstacles0:
            if not safety.eta_obs(r.p_r, o.p_o, s.obstacle_bound(o), p):
                out.append("η_obs violated")
                break
    if not safety.loop_invariant(s.safety_mode, r, s.obstacles0, p, s.refinements):
        out.append("initial state violates the loop invariant")
    return out


def _validate_goal(s: Scenario) -> list[str]:
    from . import liveness

    p = s.params
    g = s.goal
    out = []
    if g.kind in (GoalKind.WAYPOINT, GoalKind.WAYPOINT_DEADLINE):
        if not liveness.waypoint_params_ok(p):
            out.append("waypoint requires V_g*eps + V_g^2/(2b) < 2*Delta_g")
        if not p.A > 0:
            out.append("waypoint requires A > 0")
        if not s.robot0.p_r.x < g.p_g - p.Delta_g:
            out.append("robot must start before the goal region")
        if g.kind is GoalKind.WAYPOINT_DEADLINE and not liveness.deadline_feasible(
                g, liveness.Line1D(s.robot0.p_r.x, s.robot0.v_r), p):
            out.append("deadline is not achievable")
    else:
        if len(s.obstacles0) != 1:
            out.append("intersection scenarios need exactly one obstacle")
        else:
            o = s.obstacles0[0]
            if not p.V_min <= o.v_o.y <= p.V + LINK_TOL:
                out.append("obstacle speed must lie in [V_min, V]")
        if not p.V >= p.V_min:
            out.append("intersection requires V >= V_min")
        if g.kind is GoalKind.INTERSECTION_DEADLINE and out == []:
            o = s.obstacles0[0]
            st = liveness.Crossing(s.robot0.p_r.x, s.robot0.v_r, o.p_o.y, o.v_o.y)
            if not liveness.deadline_feasible(g, st, p):
                out.append("deadline is not achievable")
    return out


@dataclass(slots=True)
class TraceStep:
    step: int
    t_model: float
    robot_pre: RobotState
    robot_post: RobotState
    obstacles_pre: tuple
    obstacles_post: tuple
    choice: Optional[ControlChoice] = None
    verdict: object = None
    # model time of the post-control sample when it differs from t_model (read-back traces)
    t_post: Optional[float] = None


@dataclass
class Trace:
    steps: list = field(default_factory=list)
    final_robot: Optional[RobotState] = None
    final_obstacles: tuple = ()
    final_t: float = 0.0
    events: dict = field(default_factory=dict)
