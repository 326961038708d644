"""Scenario files: INI-style key/value sections.

Example::

    [scenario]
    mode = passive
    refinements = ActualAccel, NonSync
    policy = Pursuit
    horizon = 30
    seed = 7
    deterministic = true

    [params]
    A = 1
    b = 1
    eps = 0.05

    [robot]
    p = 0, 0
    d = 1, 0

    [obstacle.0]
    p = 6, 2
    v = 0, 0

    [goal]
    kind = point
    point = 20, 0

Liveness goals use ``kind = waypoint|waypoint-deadline|intersection|intersection-deadline``
with ``p_g``, ``p_x`` and ``deadline``. Lengths are meters, times seconds, angles radians.
"""

from __future__ import annotations

import configparser
import io
import math

from .state import (
    PARAM_FIELDS,
    STRAIGHT_RADIUS,
    GoalKind,
    GoalSpec,
    ObstacleState,
    RobotState,
    Scenario,
    Vec2,
    WorldParams,
    parse_mode,
    parse_policy,
    parse_refinement,
)


class ScenarioFormatError(ValueError):
    pass


def _vec(text: str) -> Vec2:
    parts = [x for x in text.replace("(", "").replace(")", "").split(",")]
    if len(parts) != 2:
        raise ScenarioFormatError(f"expected 'x, y', got {text!r}")
    return Vec2(float(parts[0]), float(parts[1]))


def parse_overrides(items) -> dict:
    """``key=value`` strings to a WorldParams keyword dict."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ScenarioFormatError(f"override {item!r} is not key=value")
        k, v = (x.strip() for x in item.split("=", 1))
        if k not in PARAM_FIELDS:
            raise ScenarioFormatError(f"unknown parameter {k!r}")
        if k == "gamma" and v.lower() in ("pi", "π"):
            out[k] = math.pi
        else:
            out[k] = float(v)
    return out


def loads_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ScenarioFormatError(str(e)) from None
    try:
        return _build(cp)
    except (KeyError, ValueError) as e:
        if isinstance(e, ScenarioFormatError):
            raise
        raise ScenarioFormatError(str(e)) from None


def _build(cp: configparser.ConfigParser) -> Scenario:
    sc = cp["scenario"] if cp.has_section("scenario") else {}
    params = WorldParams(**parse_overrides(f"{k}={v}" for k, v in
                                           (cp["params"].items() if cp.has_section("params") else [])))
    mode = parse_mode(sc.get("mode", "passive"))
    refs = frozenset(parse_refinement(x) for x in sc.get("refinements", "").split(",") if x.strip())
    policy = parse_policy(sc.get("policy", "Random"))
    rb = cp["robot"] if cp.has_section("robot") else {}
    p = _vec(rb.get("p", "0, 0"))
    d = _vec(rb.get("d", "1, 0"))
    n = math.hypot(*d)
    if n == 0:
        raise ScenarioFormatError("robot heading d must be nonzero")
    d = Vec2(d[0] / n, d[1] / n)
    robot = RobotState.at_rest(p, d, float(rb.get("r_c", STRAIGHT_RADIUS)))
    obstacles = []
    names = sorted((s for s in cp.sections() if s.startswith("obstacle")),
                   key=lambda s: int(s.split(".", 1)[1]) if "." in s else 0)
    for name in names:
        o = cp[name]
        v = _vec(o.get("v", "0, 0"))
        d_o = _vec(o["d"]) if "d" in o else Vec2(1.0, 0.0)
        obstacles.append(ObstacleState(_vec(o["p"]), v, float(o.get("v_max", params.V)), d_o,
                                       float(o.get("a", 0.0)), float(o.get("visible", 1.0))))
    goal = None
    if cp.has_section("goal"):
        g = cp["goal"]
        kind = GoalKind(g.get("kind", "point").strip().lower())
        goal = GoalSpec(kind, _vec(g.get("point", "0, 0")), float(g.get("p_g", 0.0)),
                        _vec(g.get("p_x", "0, 0")), float(g.get("deadline", 0.0)))
    return Scenario(params, mode, robot, tuple(obstacles), refs, policy,
                    float(sc.get("horizon", 30.0)), int(sc.get("seed", 0)), goal,
                    str(sc.get("deterministic", "true")).strip().lower() in ("1", "true", "yes"),
                    int(sc.get("nonsync_cap", 8)))


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return loads_scenario(fh.read())


def _fmt(v: Vec2) -> str:
    return f"{v[0]!r}, {v[1]!r}"


def dumps_scenario(s: Scenario) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["scenario"] = {
        "mode": s.safety_mode.value,
        "refinements": ", ".join(sorted(r.value for r in s.refinements)),
        "policy": s.obstacle_policy.value,
        "horizon": repr(s.horizon),
        "seed": str(s.seed),
        "deterministic": str(s.deterministic).lower(),
        "nonsync_cap": str(s.nonsync_cap),
    }
    cp["params"] = {k: repr(getattr(s.params, k)) for k in PARAM_FIELDS
                    if getattr(s.params, k) is not None}
    cp["robot"] = {"p": _fmt(s.robot0.p_r), "d": _fmt(s.robot0.d_r), "r_c": repr(s.robot0.r_c)}
    for i, o in enumerate(s.obstacles0):
        cp[f"obstacle.{i}"] = {"p": _fmt(o.p_o), "v": _fmt(o.v_o), "v_max": repr(o.v_max),
                               "d": _fmt(o.d_o), "a": repr(o.a_o), "visible": repr(o.visible_flag)}
    if s.goal is not None:
        g = s.goal
        cp["goal"] = {"kind": g.kind.value, "point": _fmt(g.point), "p_g": repr(g.p_g),
                      "p_x": _fmt(g.p_x), "deadline": repr(g.deadline)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
