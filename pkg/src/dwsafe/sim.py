"""Episode execution: obstacle policies, sensing and actuation noise, flow, per-cycle checks."""

from __future__ import annotations

import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import safety
from .controllers import CandidateSet, Observation, decide
from .dynamics import (
    check_differential_invariants,
    flow_obstacle,
    flow_refined_obstacle,
    flow_robot,
    refined_obstacle_position,
    robot_position_at,
)
from .state import (
    Branch,
    ControlChoice,
    GoalKind,
    ObstacleState,
    PolicyKind,
    Refinement,
    RobotState,
    SafetyMode,
    Scenario,
    Trace,
    TraceStep,
    Vec2,
    WorldParams,
    curve_center,
    validate_scenario,
)

R = Refinement

# Two points closer than this count as touching.
CONTACT_TOL = 1e-9
# Distances below this are reported as near misses.
NEAR_MISS = 1e-3
# Slower than this counts as stopped for the contact check: at the stop instant the
# distance may equal the invariant's margin, which can be far below CONTACT_TOL.
MOVING_SPEED = 1e-6


class InvalidScenario(ValueError):
    pass


# ---------------------------------------------------------------- policies

def _toward(p: Vec2, target, speed: float) -> Vec2:
    dx = target[0] - p[0]
    dy = target[1] - p[1]
    n = math.hypot(dx, dy)
    if n == 0 or speed == 0:
        return Vec2(0.0, 0.0)
    k = speed / n
    return Vec2(dx * k, dy * k)


def _clip_speed(v: Vec2, bound: float) -> Vec2:
    n = math.hypot(v[0], v[1])
    if n <= bound:
        return v
    k = bound / n
    return Vec2(v[0] * k, v[1] * k)


def policy_act(kind: PolicyKind, o: ObstacleState, bound: float, robot: RobotState,
               goal: Vec2, params: WorldParams, rng: random.Random) -> ObstacleState:
    """One obstacle control decision; the returned velocity never exceeds ``bound``."""
    p = o.p_o
    if kind is PolicyKind.RANDOM:
        r = bound * math.sqrt(rng.random())
        th = 2.0 * math.pi * rng.random()
        v = _clip_speed(Vec2(r * math.cos(th), r * math.sin(th)), bound)
    elif kind is PolicyKind.PURSUIT:
        v = _toward(p, robot.p_r, bound)
    elif kind is PolicyKind.HEAD_ON:
        ahead = (robot.p_r[0] + robot.v_r * params.eps * robot.d_r[0],
                 robot.p_r[1] + robot.v_r * params.eps * robot.d_r[1])
        v = _toward(p, ahead, bound)
    elif kind is PolicyKind.BLOCKER:
        # park on the robot's route to its goal, a little ahead of the robot
        gx = goal[0] - robot.p_r[0]
        gy = goal[1] - robot.p_r[1]
        n = math.hypot(gx, gy)
        k = min(n, robot.v_r * robot.v_r / (2.0 * params.b) + 1.0)
        target = robot.p_r if n == 0 else (robot.p_r[0] + gx / n * k, robot.p_r[1] + gy / n * k)
        gap = math.hypot(target[0] - p[0], target[1] - p[1])
        v = _toward(p, target, min(bound, gap / params.eps))
    elif kind is PolicyKind.REFINED_ACCEL:
        return _refined_act(o, bound, robot, params, rng)
    else:  # pragma: no cover
        raise ValueError(kind)
    return ObstacleState(p, v, o.v_max, o.d_o, 0.0, o.visible_flag)


def _refined_act(o: ObstacleState, bound: float, robot: RobotState, params: WorldParams,
                 rng: random.Random) -> ObstacleState:
    speed = min(o.v_o.norm(), bound)
    base = math.atan2(robot.p_r[1] - o.p_o[1], robot.p_r[0] - o.p_o[0])
    th = base + rng.uniform(-0.5, 0.5)
    d = Vec2(math.cos(th), math.sin(th))
    # the speed must stay within [0, bound] for a whole obstacle cycle
    h = max(params.obstacle_eps, params.eps)
    a_hi = (bound - speed) / h
    a_lo = -params.b_o
    a = a_lo + (a_hi - a_lo) * rng.random() if a_hi > a_lo else a_hi
    return ObstacleState(o.p_o, Vec2(speed * d[0], speed * d[1]), o.v_max, d, a, o.visible_flag)


def _obstacle_flow(kind: PolicyKind, o: ObstacleState, dt: float) -> ObstacleState:
    if kind is PolicyKind.REFINED_ACCEL:
        return flow_refined_obstacle(o, dt)
    return flow_obstacle(o, dt)


def _obstacle_pos(kind: PolicyKind, o: ObstacleState, t: float):
    if kind is PolicyKind.REFINED_ACCEL:
        return refined_obstacle_position(o, t)
    return o.p_o[0] + o.v_o[0] * t, o.p_o[1] + o.v_o[1] * t


# ---------------------------------------------------------------- sensing / actuation

def observe(robot: RobotState, obstacles, refinements, params: WorldParams,
            rng: random.Random) -> Observation:
    """Measured robot position and speed; exact when the uncertainty refinements are off."""
    r = robot
    if R.LOCATION_UNCERTAINTY in refinements and params.Delta_p > 0:
        rad = params.Delta_p * math.sqrt(rng.random())
        th = 2.0 * math.pi * rng.random()
        p_hat = Vec2(robot.p_r[0] + rad * math.cos(th), robot.p_r[1] + rad * math.sin(th))
        r = RobotState(p_hat, robot.v_r, robot.a_r, robot.d_r, robot.omega_r, robot.r_c,
                       curve_center(p_hat, robot.d_r, robot.r_c), robot.beta, robot.t)
    v_hat = robot.v_r
    if R.VELOCITY_UNCERTAINTY in refinements and params.Delta_v > 0:
        lo = max(0.0, robot.v_r - params.Delta_v)
        v_hat = lo + (robot.v_r + params.Delta_v - lo) * rng.random()
    return Observation(r, tuple(obstacles), v_hat)


def actuate(choice: ControlChoice, refinements, params: WorldParams, rng: random.Random) -> float:
    """Effective acceleration: the command scaled by a factor drawn from [Delta_a, 1]."""
    if R.ACTUATOR_PERTURBATION in refinements:
        delta = params.Delta_a + (1.0 - params.Delta_a) * rng.random()
        return delta * choice.a_r
    return choice.a_r


# ---------------------------------------------------------------- episode

@dataclass
class EpisodeResult:
    trace: Optional[Trace]
    cycles: int = 0
    violations: list = field(default_factory=list)
    invariant_failures: list = field(default_factory=list)
    diff_failures: list = field(default_factory=list)
    monitor_failures: list = field(default_factory=list)
    monitor_checked: int = 0
    min_distance_moving: float = math.inf
    near_misses: int = 0
    stops: int = 0
    t_end: float = 0.0
    first_violation_step: Optional[int] = None

    @property
    def ok(self) -> bool:
        return not (self.violations or self.invariant_failures or self.diff_failures
                    or self.monitor_failures)


def _goal_point(s: Scenario) -> Vec2:
    if s.goal is not None and s.goal.kind is GoalKind.POINT:
        return s.goal.point
    r = s.robot0
    return Vec2(r.p_r[0] + 1e3 * r.d_r[0], r.p_r[1] + 1e3 * r.d_r[1])


def _apply_choice(robot: RobotState, ch: ControlChoice) -> RobotState:
    """Post-control robot state (true values)."""
    if ch.branch is Branch.ACCELERATE:
        v = robot.v_r
        return RobotState(robot.p_r, v, ch.a_r, robot.d_r, v / ch.r_c, ch.r_c,
                          curve_center(robot.p_r, robot.d_r, ch.r_c), 0.0, 0.0)
    if ch.branch is Branch.STAY:
        d = robot.d_r
        if ch.d_flip:
            d = Vec2(-d[0], -d[1])
        return RobotState(robot.p_r, robot.v_r, 0.0, d, 0.0, ch.r_c, robot.p_c, robot.beta, 0.0)
    return RobotState(robot.p_r, robot.v_r, ch.a_r, robot.d_r, robot.omega_r, robot.r_c,
                      robot.p_c, robot.beta, 0.0)


def _piece_min(dist: Callable[[float], float], t0: float, t1: float, lip: float,
               samples: int = 8):
    """(min distance, argmin) over [t0, t1].

    ``lip`` bounds the rate of change of ``dist``. When the sampled minimum is
    provably above NEAR_MISS the sample is returned as is; otherwise the
    minimum is refined with a bounded scalar search.
    """
    h = (t1 - t0) / samples
    ts = [t0 + h * k for k in range(samples + 1)]
    ds = [dist(t) for t in ts]
    k = min(range(samples + 1), key=ds.__getitem__)
    best, arg = ds[k], ts[k]
    if best - lip * h / 2.0 > NEAR_MISS:
        return best, arg
    from scipy.optimize import minimize_scalar

    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, samples)]
    if hi > lo:
        r = minimize_scalar(dist, bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-14, "maxiter": 200})
        if r.fun < best:
            best, arg = float(r.fun), float(r.x)
    return best, arg


def simulate(scenario: Scenario, kappa: float = 1.0, record: bool = True,
             check: bool = True, monitor: bool = False,
             candidates: Optional[CandidateSet] = None) -> EpisodeResult:
    """Run one episode; with ``check`` every cycle is tested against the safety condition,
    the loop invariant and the per-interval invariants."""
    bad = validate_scenario(scenario)
    if bad:
        raise InvalidScenario("; ".join(bad))
    if scenario.goal is not None and scenario.goal.kind is not GoalKind.POINT:
        raise InvalidScenario("liveness goals run through the liveness module")
    if not 0 < kappa <= 1:
        raise ValueError("kappa must be in (0, 1]")
    if monitor:
        from .monitor import Sample, eval_monitor

    s = scenario
    p = s.params
    refs = frozenset(s.refinements)
    mode = s.safety_mode
    kind = s.obstacle_policy
    rng = random.Random(s.seed)
    goal = _goal_point(s)
    cands = candidates or CandidateSet.grid(p)
    nonsync = R.NON_SYNC in refs
    orientation = mode is SafetyMode.PASSIVE_ORIENTATION
    static = mode is SafetyMode.STATIC
    friendly = mode is SafetyMode.PASSIVE_FRIENDLY
    robot = s.robot0
    obstacles = tuple(s.obstacles0)
    bounds = [s.obstacle_bound(o) for o in obstacles]
    n_cycles = max(1, math.ceil(s.horizon / p.eps - 1e-9))
    res = EpisodeResult(Trace() if record else None)
    t_model = 0.0

    for step in range(n_cycles):
        # obstacle control (synchronous mode: once, before the robot decides)
        if nonsync:
            obs_ctrl = obstacles
        else:
            obs_ctrl = tuple(policy_act(kind, o, V, robot, goal, p, rng)
                             for o, V in zip(obstacles, bounds))
        ob = observe(robot, obs_ctrl, refs, p, rng)
        ch = decide(mode, refs, ob, p, cands, goal, bounds, kappa)
        post = _apply_choice(robot, ch)
        if ch.branch is Branch.ACCELERATE and ch.visible:
            obs_ctrl = tuple(ObstacleState(o.p_o, o.v_o, o.v_max, o.d_o, o.a_o, f)
                             for o, f in zip(obs_ctrl, ch.visible))
        a_eff = actuate(ch, refs, p, rng)
        dur = p.eps if s.deterministic else p.eps * (1.0 - rng.random())
        fr = flow_robot(post, a_eff, post.omega_r, post.r_c, dur)
        flowed = fr.post
        a_move = a_eff if fr.elapsed > 0 else 0.0
        el = dur
        nxt = flowed
        if fr.elapsed < dur:
            # stopped before the interval ended: hold position for the rest of it
            nxt = RobotState(flowed.p_r, 0.0, 0.0, flowed.d_r, 0.0, flowed.r_c, flowed.p_c,
                             flowed.beta, dur)
        moving = post.v_r > 0 or a_move > 0

        # obstacle motion, possibly re-decided at sampled instants
        if nonsync:
            k = rng.randint(0, s.nonsync_cap)
            instants = sorted(el * rng.random() for _ in range(k))
        else:
            instants = []
        pieces = []  # (t0, t1, obstacle states at t0)
        cur = obs_ctrl
        t0 = 0.0
        for ti in instants + [el]:
            if ti > t0:
                pieces.append((t0, ti, cur))
                cur = tuple(_obstacle_flow(kind, o, ti - t0) for o in cur)
                t0 = ti
            if ti < el:
                here = _robot_at(post, a_move, ti)
                cur = tuple(policy_act(kind, o, V, here, goal, p, rng) for o, V in zip(cur, bounds))
        obs_next = cur

        if check:
            self_check(res, s, step, t_model, post, a_move, el, pieces, nxt, flowed, obs_ctrl, obs_next,
                       bounds, moving, static, orientation, friendly, fr.stopped_at is not None
                       and post.v_r > 0, refs, mode, p, kind)
        if monitor:
            verdict = eval_monitor(Sample(robot, obstacles, t_model), Sample(post, obs_ctrl, t_model),
                                   p, bounds=bounds)
            res.monitor_checked += 1
            if not verdict.passed:
                res.monitor_failures.append((step, verdict))
        if record:
            res.trace.steps.append(TraceStep(step, t_model, robot, post, obstacles, obs_ctrl, ch))
        robot = nxt
        obstacles = obs_next
        t_model += el
    res.cycles = n_cycles
    res.t_end = t_model
    if record:
        tr = res.trace
        tr.final_robot = robot
        tr.final_obstacles = obstacles
        tr.final_t = t_model
    return res


def _robot_at(post: RobotState, a: float, t: float) -> RobotState:
    """Robot state t into the interval (used when obstacles react mid-interval)."""
    return flow_robot(post, a, post.omega_r, post.r_c, t).post


def self_check(res: EpisodeResult, s: Scenario, step: int, t_model: float, post: RobotState,
               a: float, el: float, pieces, nxt: RobotState, flowed: RobotState, obs_ctrl,
               obs_next, bounds,
               moving: bool, static: bool, orientation: bool, friendly: bool, came_to_stop: bool,
               refs, mode, p: WorldParams, kind: PolicyKind) -> None:
    # continuous-time contact check over the part of the interval where the robot moves
    window = (0.0, el) if static else _moving_window(post.v_r, a, el)
    if window is not None:
        w0, w1 = window
        travel = post.v_r * el + 0.5 * max(a, 0.0) * el * el
        for t0, t1, obs in pieces:
            c0, c1 = max(t0, w0), min(t1, w1)
            if c1 < c0:
                continue
            for j, o in enumerate(obs):
                def dist(t, o=o, t0=t0):
                    x, y = robot_position_at(post, a, post.r_c, t)
                    ox_, oy_ = _obstacle_pos(kind, o, t - t0)
                    return math.hypot(x - ox_, y - oy_)

                d0 = dist(c0)
                if d0 - travel - bounds[j] * (c1 - c0) > NEAR_MISS:
                    dmin = min(d0, dist(c1))
                    if moving:
                        res.min_distance_moving = min(res.min_distance_moving, dmin)
                    continue
                lip = post.v_r + max(a, 0.0) * el + bounds[j]
                dmin, targ = _piece_min(dist, c0, c1, lip)
                if moving:
                    res.min_distance_moving = min(res.min_distance_moving, dmin)
                if dmin < NEAR_MISS:
                    res.near_misses += 1
                if dmin <= CONTACT_TOL:
                    if orientation:
                        s_arc = post.v_r * targ + 0.5 * a * targ * targ
                        beta = post.beta + s_arc / post.r_c
                        if o.visible_flag <= 0 and abs(beta) < p.gamma:
                            continue
                    res.violations.append(f"step {step} t={t_model + targ:.9g}: contact with obstacle {j}"
                                          f" (distance {dmin:.3g}) while moving")
                    if res.first_violation_step is None:
                        res.first_violation_step = step
    if friendly and came_to_stop:
        res.stops += 1
        # obstacles at the instant the robot came to rest
        t_stop = flowed.t - post.t
        t0, _, obs = next((pc for pc in pieces if pc[0] <= t_stop <= pc[1]), pieces[-1])
        for j, o in enumerate(obs):
            if not safety.eta_obs(flowed.p_r, Vec2(*_obstacle_pos(kind, o, t_stop - t0)), bounds[j], p):
                res.violations.append(f"step {step}: robot stopped without room for obstacle {j}")
                if res.first_violation_step is None:
                    res.first_violation_step = step
    elif came_to_stop:
        res.stops += 1
    if not safety.loop_invariant(mode, nxt, obs_next, p, refs):
        res.invariant_failures.append(step)
    # robot squares over the flow up to any stop, obstacle squares over the whole interval
    for j, (o0, o1) in enumerate(zip(obs_ctrl, obs_next)):
        rep = check_differential_invariants(post, flowed, bounds[j], o0, o1, obstacle_time=el)
        if not rep.ok:
            res.diff_failures.append((step, rep.failures))
            break
    else:
        if not obs_ctrl:
            rep = check_differential_invariants(post, flowed, 0.0)
            if not rep.ok:
                res.diff_failures.append((step, rep.failures))


def _moving_window(v0: float, a: float, el: float):
    """Sub-interval of [0, el] on which v0 + a t >= MOVING_SPEED, or None."""
    if a > 0:
        lo = max(0.0, (MOVING_SPEED - v0) / a)
        return (lo, el) if lo <= el else None
    if v0 < MOVING_SPEED:
        return None
    if a < 0:
        return 0.0, min(el, (v0 - MOVING_SPEED) / -a)
    return 0.0, el


def run(scenario: Scenario, kappa: float = 1.0) -> Trace:
    """Run an episode and return its trace; check results are attached as ``trace.events``."""
    r = simulate(scenario, kappa=kappa, record=True, check=True)
    r.trace.events = {
        "violations": r.violations,
        "invariant_failures": r.invariant_failures,
        "diff_failures": r.diff_failures,
        "min_distance_moving": r.min_distance_moving,
        "near_misses": r.near_misses,
        "stops": r.stops,
    }
    return r.trace


def worker_count(requested: Optional[int] = None) -> int:
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("DWSAFE_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)


def run_batch(fn: Callable, items: Sequence, workers: Optional[int] = None) -> list:
    """Apply ``fn`` to independent items, in parallel when more than one worker is allowed.

    Results come back in input order regardless of completion order.
    """
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * n))))
