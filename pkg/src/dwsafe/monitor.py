"""Controller monitor over sampled (pre, post) state pairs, trace compliance, fail-safe fallback."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import safety
from .state import Branch, ControlChoice, ObstacleState, RobotState, SafetyMode, WorldParams

TOL = 1e-9

BRANCHES = ("mon_b", "mon_s", "mon_a")


@dataclass(frozen=True, slots=True)
class Sample:
    """One sampled world state: robot, obstacles and model time of the sample."""

    robot: RobotState
    obstacles: tuple
    t: float = 0.0

    @staticmethod
    def of(robot: RobotState, obstacles: Iterable[ObstacleState], t: float = 0.0) -> "Sample":
        return Sample(robot, tuple(obstacles), t)


@dataclass
class MonitorVerdict:
    passed: bool
    branch: Optional[str]
    # first failing clause of every failing group, as (clause id, residual)
    failed_clauses: list = field(default_factory=list)
    # every failing clause, grouped by branch
    details: dict = field(default_factory=dict)

    @property
    def clause_ids(self) -> list[str]:
        return [c for c, _ in self.failed_clauses]


def _eq(name: str, got: float, want: float, out: list) -> None:
    r = abs(got - want)
    if not r <= TOL:
        out.append((name, r))


def _unchanged_pos(pre: RobotState, post: RobotState, out: list) -> None:
    r = max(abs(post.p_r[0] - pre.p_r[0]), abs(post.p_r[1] - pre.p_r[1]))
    if not r <= TOL:
        out.append(("position", r))


def _unchanged_dir(pre: RobotState, post: RobotState, out: list) -> None:
    r = max(abs(post.d_r[0] - pre.d_r[0]), abs(post.d_r[1] - pre.d_r[1]))
    if not r <= TOL:
        out.append(("orientation", r))


def _unchanged_obstacles(pre: Sample, post: Sample, out: list) -> None:
    if len(pre.obstacles) != len(post.obstacles):
        out.append(("obstacle_position", math.inf))
        return
    r = 0.0
    for a, b in zip(pre.obstacles, post.obstacles):
        r = max(r, abs(b.p_o[0] - a.p_o[0]), abs(b.p_o[1] - a.p_o[1]))
    if not r <= TOL:
        out.append(("obstacle_position", r))


def eval_monitor(pre: Sample, post: Sample, params: WorldParams, strict: bool = False,
                 bounds: Optional[Sequence[float]] = None) -> MonitorVerdict:
    """Evaluate mon_o, mon_dyn and the three controller branches on one sampled pair.

    ``strict`` also demands unchanged obstacle positions in the brake and stay
    branches; the relaxed default exempts them.
    """
    r0, r1 = pre.robot, post.robot
    p = params
    if bounds is None:
        bounds = [p.V] * len(post.obstacles)
    groups: dict[str, list] = {}

    g: list = []
    for i, (o, V) in enumerate(zip(post.obstacles, bounds)):
        sp = math.hypot(o.v_o[0], o.v_o[1])
        if not sp <= V + TOL:
            g.append((f"speed[{i}]", sp - V))
    groups["mon_o"] = g

    g = []
    if not p.eps >= 0:
        g.append(("eps", -p.eps))
    if not r0.v_r >= 0:
        g.append(("speed_nonneg", -r0.v_r))
    _eq("time", post.t - pre.t, 0.0, g)
    groups["mon_dyn"] = g

    # accelerate on a new curve
    g = []
    a = r1.a_r
    if not -p.b - TOL <= a <= p.A + TOL:
        g.append(("accel", max(-p.b - a, a - p.A)))
    if r1.r_c == 0:
        g.append(("curve_nonzero", 0.0))
    _eq("rigid_link", r1.omega_r * r1.r_c, r0.v_r, g)
    _unchanged_pos(r0, r1, g)
    _unchanged_dir(r0, r1, g)
    _eq("speed", r1.v_r, r0.v_r, g)
    q = safety.SafetyQuery(SafetyMode.PASSIVE, frozenset(), r0.v_r, p)
    for i, (o, V) in enumerate(zip(post.obstacles, bounds)):
        gap = max(abs(r0.p_r[0] - o.p_o[0]), abs(r0.p_r[1] - o.p_o[1]))
        need = safety.safe_distance(q, V)
        if not gap > need:
            g.append((f"safedist[{i}]" if len(post.obstacles) > 1 else "safedist", need - gap))
    groups["mon_a"] = g

    # brake on the current curve
    g = []
    _eq("accel", a, -p.b, g)
    if strict:
        _unchanged_obstacles(pre, post, g)
    _unchanged_pos(r0, r1, g)
    _unchanged_dir(r0, r1, g)
    _eq("speed", r1.v_r, r0.v_r, g)
    _eq("rotation", r1.omega_r, r0.omega_r, g)
    _eq("curve", r1.r_c, r0.r_c, g)
    groups["mon_b"] = g

    # stay in place
    g = []
    _eq("velocity", r0.v_r, 0.0, g)
    _eq("accel", a, 0.0, g)
    _eq("rotation", r1.omega_r, 0.0, g)
    if strict:
        _unchanged_obstacles(pre, post, g)
    _unchanged_pos(r0, r1, g)
    _unchanged_dir(r0, r1, g)
    _eq("speed", r1.v_r, r0.v_r, g)
    _eq("curve", r1.r_c, r0.r_c, g)
    groups["mon_s"] = g

    branch = next((b for b in BRANCHES if not groups[b]), None)
    passed = not groups["mon_o"] and not groups["mon_dyn"] and branch is not None
    failed = []
    if not passed:
        for name in ("mon_o", "mon_dyn", "mon_a", "mon_b", "mon_s"):
            if groups[name]:
                c, r = groups[name][0]
                failed.append((f"{name}.{c}", r))
    details = {k: [(f"{k}.{c}", r) for c, r in v] for k, v in groups.items() if v}
    return MonitorVerdict(passed, branch, failed, details)


@dataclass
class ComplianceReport:
    verdicts: list
    strict: bool = False

    @property
    def passed(self) -> bool:
        return all(v.passed for _, v in self.verdicts)

    @property
    def first_failure(self) -> Optional[int]:
        for step, v in self.verdicts:
            if not v.passed:
                return step
        return None

    def lines(self) -> list[str]:
        out = []
        for step, v in self.verdicts:
            if v.passed:
                continue
            clauses = ", ".join(f"{c} ({r:.3g})" for c, r in v.failed_clauses)
            out.append(f"step {step}: FAIL {clauses}")
        mode = "strict" if self.strict else "relaxed"
        if self.passed:
            out.append(f"compliant ({len(self.verdicts)} transitions, {mode})")
        else:
            bad = sum(1 for _, v in self.verdicts if not v.passed)
            out.append(f"violation at step {self.first_failure} ({bad} of {len(self.verdicts)} "
                       f"transitions fail, {mode})")
        return out


def trace_pairs(trace) -> list[tuple[int, Sample, Sample]]:
    """(step, pre, post) sample pairs of a recorded trace."""
    return [(st.step, Sample(st.robot_pre, tuple(st.obstacles_pre), st.t_model),
             Sample(st.robot_post, tuple(st.obstacles_post),
                    st.t_model if st.t_post is None else st.t_post)) for st in trace.steps]


def check_trace(trace, params: WorldParams, strict: bool = False,
                bounds: Optional[Sequence[float]] = None) -> ComplianceReport:
    """Evaluate the monitor on every control transition of ``trace``.

    ``trace`` is a Trace or an iterable of (step, pre Sample, post Sample).
    """
    pairs = trace_pairs(trace) if hasattr(trace, "steps") else list(trace)
    return ComplianceReport([(step, eval_monitor(a, b, params, strict, bounds)) for step, a, b in pairs],
                            strict)


def fallback(last: Optional[ControlChoice], params: WorldParams) -> ControlChoice:
    """Fail-safe action: brake on the previous curve."""
    if last is None:
        raise ValueError("fallback needs the last applied choice to keep its curve")
    return ControlChoice(Branch.BRAKE, -params.b, last.omega_r, last.r_c, last.p_c,
                         reason="monitor fallback")
