"""Trace CSV: one pre-control row and one post-control row per cycle, plus the final state."""

from __future__ import annotations

import csv
import math
from typing import TextIO

from .state import ObstacleState, RobotState, Trace, TraceStep, Vec2

ROBOT_COLUMNS = ["step", "t_model", "pr_x", "pr_y", "vr", "ar", "drx", "dry", "wr", "rc",
                 "pcx", "pcy", "beta"]
OBSTACLE_FIELDS = ("po{i}_x", "po{i}_y", "vo{i}_x", "vo{i}_y", "visible_{i}")


class TraceFormatError(ValueError):
    pass


def header(n_obstacles: int) -> list[str]:
    cols = list(ROBOT_COLUMNS)
    for i in range(n_obstacles):
        cols.extend(f.format(i=i) for f in OBSTACLE_FIELDS)
    return cols


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _row(step: int, t: float, r: RobotState, obstacles) -> list[str]:
    out = [str(step), _f(t), _f(r.p_r[0]), _f(r.p_r[1]), _f(r.v_r), _f(r.a_r), _f(r.d_r[0]),
           _f(r.d_r[1]), _f(r.omega_r), _f(r.r_c), _f(r.p_c[0]), _f(r.p_c[1]), _f(r.beta)]
    for o in obstacles:
        out.extend((_f(o.p_o[0]), _f(o.p_o[1]), _f(o.v_o[0]), _f(o.v_o[1]), _f(o.visible_flag)))
    return out


def write_trace(trace: Trace, fh: TextIO) -> None:
    """Write ``trace`` as CSV; the pre and post rows of a cycle share step and t_model."""
    n = len(trace.final_obstacles) if trace.final_obstacles else (
        len(trace.steps[0].obstacles_pre) if trace.steps else 0)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header(n))
    for st in trace.steps:
        w.writerow(_row(st.step, st.t_model, st.robot_pre, st.obstacles_pre))
        t_post = st.t_model if st.t_post is None else st.t_post
        w.writerow(_row(st.step, t_post, st.robot_post, st.obstacles_post))
    if trace.final_robot is not None:
        step = trace.steps[-1].step + 1 if trace.steps else 0
        w.writerow(_row(step, trace.final_t, trace.final_robot, trace.final_obstacles))


def save_trace(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        write_trace(trace, fh)


def _parse(row: list[str], n: int, lineno: int):
    if len(row) != len(ROBOT_COLUMNS) + 5 * n:
        raise TraceFormatError(f"line {lineno}: expected {len(ROBOT_COLUMNS) + 5 * n} fields, got {len(row)}")
    try:
        step = int(row[0])
        x = [float(v) for v in row[1:]]
    except ValueError as e:
        raise TraceFormatError(f"line {lineno}: {e}") from None
    if not all(math.isfinite(v) for v in x):
        raise TraceFormatError(f"line {lineno}: non-finite value")
    t, prx, pry, vr, ar, drx, dry, wr, rc, pcx, pcy, beta = x[:12]
    robot = RobotState(Vec2(prx, pry), vr, ar, Vec2(drx, dry), wr, rc, Vec2(pcx, pcy), beta, 0.0)
    obs = []
    for i in range(n):
        px, py, vx, vy, vis = x[12 + 5 * i: 17 + 5 * i]
        # the file does not carry speed bounds
        obs.append(ObstacleState(Vec2(px, py), Vec2(vx, vy), math.inf, visible_flag=vis))
    return step, t, robot, tuple(obs)


def read_trace(fh: TextIO) -> Trace:
    """Parse a trace CSV written by :func:`write_trace`.

    Raises TraceFormatError on any structural problem.
    """
    rows = csv.reader(fh)
    try:
        head = next(rows)
    except StopIteration:
        raise TraceFormatError("empty trace file") from None
    extra = len(head) - len(ROBOT_COLUMNS)
    if extra < 0 or extra % 5 or head != header(extra // 5):
        raise TraceFormatError("unexpected header")
    n = extra // 5
    parsed = [_parse(r, n, k + 2) for k, r in enumerate(rows) if r]
    trace = Trace()
    k = 0
    last_t = -math.inf
    while k < len(parsed):
        step, t, robot, obs = parsed[k]
        if k + 1 < len(parsed) and parsed[k + 1][0] == step:
            _, t2, robot2, obs2 = parsed[k + 1]
            if k + 2 < len(parsed) and parsed[k + 2][0] == step:
                raise TraceFormatError(f"step {step}: more than two rows")
            if trace.steps and step <= trace.steps[-1].step:
                raise TraceFormatError(f"step {step}: steps must increase")
            if not t > last_t:
                raise TraceFormatError(f"step {step}: model time must increase")
            last_t = t
            trace.steps.append(TraceStep(step, t, robot, robot2, obs, obs2,
                                         t_post=None if t2 == t else t2))
            k += 2
        else:
            if k != len(parsed) - 1:
                raise TraceFormatError(f"step {step}: missing post-control row")
            trace.final_robot, trace.final_obstacles, trace.final_t = robot, obs, t
            k += 1
    return trace


def load_trace(path) -> Trace:
    with open(path, newline="") as fh:
        return read_trace(fh)
