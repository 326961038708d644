"""Seeded scenario samplers for the safety suites and liveness grids."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional

from . import liveness, sim
from .state import (
    GoalKind,
    GoalSpec,
    ObstacleState,
    PolicyKind,
    Refinement,
    RobotState,
    SafetyMode,
    Scenario,
    Vec2,
    WorldParams,
    validate_scenario,
)

R = Refinement
M = SafetyMode

# (label, mode, refinements) of every safety suite
SUITES = (
    ("static", M.STATIC, ()),
    ("passive", M.PASSIVE, ()),
    ("passive+ActualAccel", M.PASSIVE, (R.ACTUAL_ACCEL,)),
    ("passive+TrajectoryDistance", M.PASSIVE, (R.TRAJECTORY_DISTANCE,)),
    ("passive+LocationUncertainty", M.PASSIVE, (R.LOCATION_UNCERTAINTY,)),
    ("passive+ActuatorPerturbation", M.PASSIVE, (R.ACTUATOR_PERTURBATION,)),
    ("passive+VelocityUncertainty", M.PASSIVE, (R.VELOCITY_UNCERTAINTY,)),
    ("passive+NonSync", M.PASSIVE, (R.NON_SYNC,)),
    ("passive+MultiObstacle", M.PASSIVE, (R.MULTI_OBSTACLE,)),
    ("friendly", M.PASSIVE_FRIENDLY, ()),
    ("orientation", M.PASSIVE_ORIENTATION, ()),
)
SUITE_BY_LABEL = {s[0]: s for s in SUITES}


def suite_scenario(label: str, policy: PolicyKind, index: int, seed: int = 0,
                   horizon: float = 30.0) -> Scenario:
    """Episode ``index`` of a safety suite, with parameters and placement drawn from the seed."""
    _, mode, refs = SUITE_BY_LABEL[label]
    refs = frozenset(refs)
    rng = random.Random(f"{label}/{policy.value}/{seed}/{index}")
    static = mode is M.STATIC
    kw = dict(
        A=rng.uniform(0.5, 2.0),
        b=rng.uniform(0.5, 2.0),
        eps=rng.uniform(0.1, 0.5),
        V=0.0 if static else rng.uniform(0.5, 2.0),
        Omega=rng.uniform(0.5, 2.0),
    )
    if mode is M.PASSIVE_FRIENDLY:
        kw.update(b_o=rng.uniform(0.5, 2.0), tau=rng.uniform(0.0, 0.5))
    if mode is M.PASSIVE_ORIENTATION:
        kw.update(gamma=rng.uniform(math.pi / 3, 2 * math.pi))
    if R.LOCATION_UNCERTAINTY in refs:
        kw.update(Delta_p=rng.uniform(0.05, 0.5))
    if R.ACTUATOR_PERTURBATION in refs:
        kw.update(Delta_a=rng.uniform(0.3, 1.0))
    if R.VELOCITY_UNCERTAINTY in refs:
        kw.update(Delta_v=rng.uniform(0.05, 0.5))
    p = WorldParams(**kw)
    heading = rng.uniform(-math.pi, math.pi)
    robot = RobotState.at_rest(Vec2(0.0, 0.0), Vec2(math.cos(heading), math.sin(heading)))
    n = 3 if R.MULTI_OBSTACLE in refs else 1
    for _ in range(1000):
        obs = []
        for _k in range(n):
            dist = rng.uniform(1.0, 12.0)
            ang = rng.uniform(-math.pi, math.pi)
            v_max = rng.uniform(0.1, p.V) if R.MULTI_OBSTACLE in refs else p.V
            obs.append(ObstacleState(Vec2(dist * math.cos(ang), dist * math.sin(ang)), Vec2(0.0, 0.0),
                                     v_max))
        g_dist = rng.uniform(10.0, 30.0)
        g_ang = heading + rng.uniform(-math.pi / 2, math.pi / 2)
        goal = GoalSpec(GoalKind.POINT, Vec2(g_dist * math.cos(g_ang), g_dist * math.sin(g_ang)))
        s = Scenario(p, mode, robot, tuple(obs), refs, policy, horizon, rng.getrandbits(32), goal,
                     deterministic=index % 2 == 0)
        if not validate_scenario(s):
            return s
    raise RuntimeError("no valid placement found")  # pragma: no cover


@dataclass
class EpisodeSummary:
    label: str
    policy: str
    index: int
    violations: list
    invariant_failures: int
    diff_failures: int
    monitor_checked: int
    monitor_failures: list
    min_distance_moving: float
    near_misses: int
    cycles: int


def run_suite_episode(args) -> EpisodeSummary:
    """Worker entry: (label, policy, index, seed, monitor) -> summary."""
    label, policy, index, seed, monitor = args
    s = suite_scenario(label, policy, index, seed)
    r = sim.simulate(s, record=False, check=True, monitor=monitor)
    return EpisodeSummary(label, policy.value, index, r.violations[:3], len(r.invariant_failures),
                          len(r.diff_failures), r.monitor_checked,
                          [(st, v.clause_ids) for st, v in r.monitor_failures[:3]],
                          r.min_distance_moving, r.near_misses, r.cycles)


# ---------------------------------------------------------------- liveness grids

LIVENESS_KINDS = (GoalKind.WAYPOINT, GoalKind.WAYPOINT_DEADLINE, GoalKind.INTERSECTION,
                  GoalKind.INTERSECTION_DEADLINE)


def _waypoint_point(kind: GoalKind, rng: random.Random, index: int) -> tuple[Optional[Scenario], str]:
    A = rng.uniform(0.2, 3.0)
    b = rng.uniform(0.2, 3.0)
    eps = rng.uniform(0.01, 0.5)
    V_g = rng.uniform(0.1, 3.0)
    D_g = rng.uniform(0.05, 3.0)
    p = WorldParams(A=A, b=b, eps=eps, V_g=V_g, Delta_g=D_g)
    if not liveness.waypoint_params_ok(p):
        return None, "V_g*eps + V_g^2/(2b) >= 2*Delta_g"
    p_g = rng.uniform(D_g + 0.1, 30.0)
    # approach time bound: reach V_g, cover the distance at V_g, brake, one cycle of reaction
    need = V_g / A + (p_g - D_g) / V_g + V_g / b + eps
    deadline = need * rng.uniform(1.0001, 1.5) if kind is GoalKind.WAYPOINT_DEADLINE else 0.0
    s = Scenario(p, M.PASSIVE, RobotState.at_rest(Vec2(0.0, 0.0), Vec2(1.0, 0.0)), (),
                 goal=GoalSpec(kind, p_g=p_g, deadline=deadline), horizon=3 * need + 10,
                 seed=rng.getrandbits(32), deterministic=index % 2 == 0)
    bad = validate_scenario(s)
    return (None, "; ".join(bad)) if bad else (s, "")


def _intersection_point(kind: GoalKind, rng: random.Random, index: int) -> tuple[Optional[Scenario], str]:
    A = rng.uniform(0.2, 3.0)
    b = rng.uniform(0.2, 3.0)
    eps = rng.uniform(0.01, 0.5)
    V_min = rng.uniform(0.1, 1.5)
    V = V_min + rng.uniform(0.0, 2.0)
    p = WorldParams(A=A, b=b, eps=eps, V=V, V_min=V_min)
    p_x = Vec2(rng.uniform(1.0, 30.0), rng.uniform(1.0, 30.0))
    p_o = rng.uniform(-10.0, p_x.y + 10.0)
    v_o = rng.uniform(V_min, V)
    deadline = 0.0
    if kind is GoalKind.INTERSECTION_DEADLINE:
        deadline = eps + math.sqrt(2.0 * p_x.x / A) * rng.uniform(1.0001, 1.5)
    s = Scenario(p, M.PASSIVE, RobotState.at_rest(Vec2(0.0, p_x.y), Vec2(1.0, 0.0)),
                 (ObstacleState(Vec2(p_x.x, p_o), Vec2(0.0, v_o), V, Vec2(0.0, 1.0)),),
                 goal=GoalSpec(kind, p_x=p_x, deadline=deadline), horizon=500.0,
                 seed=rng.getrandbits(32), deterministic=index % 2 == 0)
    bad = validate_scenario(s)
    return (None, "; ".join(bad)) if bad else (s, "")


def liveness_point(kind: GoalKind, index: int, seed: int = 0) -> tuple[Optional[Scenario], str]:
    """Grid point ``index``: a scenario, or None with the reason it is infeasible."""
    rng = random.Random(f"{kind.value}/{seed}/{index}")
    if kind in (GoalKind.WAYPOINT, GoalKind.WAYPOINT_DEADLINE):
        return _waypoint_point(kind, rng, index)
    return _intersection_point(kind, rng, index)


def liveness_grid(kind: GoalKind, n: int, seed: int = 0, feasible_only: bool = True) -> list:
    """``n`` grid points; with ``feasible_only`` infeasible draws are skipped and replaced."""
    out = []
    k = 0
    while len(out) < n:
        s, why = liveness_point(kind, k, seed)
        k += 1
        if s is not None or not feasible_only:
            out.append((s, why))
    return out


def run_liveness(s: Scenario, record: bool = False) -> liveness.LivenessOutcome:
    if s.goal is None or s.goal.kind is GoalKind.POINT:
        raise ValueError("not a liveness scenario")
    if s.goal.kind in (GoalKind.WAYPOINT, GoalKind.WAYPOINT_DEADLINE):
        return liveness.run_waypoint(s, record=record)
    return liveness.run_intersection(s, record=record)


def run_liveness_point(args) -> tuple[bool, list]:
    kind, index, seed = args
    s, why = liveness_point(kind, index, seed)
    if s is None:
        return False, [why]
    o = run_liveness(s)
    return o.success, o.notes[:3]
