"""Command-line entry point: ``dwsafe <subcommand> ...``.

Exit status: 0 success or compliant, 1 property violation found, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from typing import Optional

from . import experiments, safety, sim
from .falsify import falsify, write_counterexample
from .monitor import check_trace
from .scenario_io import ScenarioFormatError, load_scenario, parse_overrides
from .state import (
    GoalKind,
    GoalSpec,
    ObstacleState,
    PolicyKind,
    RobotState,
    SafetyMode,
    Scenario,
    Vec2,
    WorldParams,
    parse_mode,
    parse_policy,
    parse_refinement,
    validate_scenario,
)
from .trace_io import TraceFormatError, load_trace, save_trace

OK, VIOLATION, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", metavar="PATH", help="scenario file")
    p.add_argument("--seed", type=int, help="random seed (overrides the scenario's)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a world parameter (repeatable)")
    p.add_argument("--mode", choices=["static", "passive", "friendly", "orientation"],
                   help="safety mode")
    p.add_argument("--refine", action="append", default=[], metavar="FLAG",
                   help="add a refinement, e.g. ActualAccel (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dwsafe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and write its trace")
    _common(p)
    p.add_argument("--out", metavar="PATH", help="trace CSV output")
    p.add_argument("--policy", help="obstacle policy (Random, HeadOn, Pursuit, RefinedAccel, Blocker)")
    p.add_argument("--horizon", type=float)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--strict-monitor", action="store_true",
                   help="also require unchanged obstacle positions in brake/stay transitions")

    p = sub.add_parser("tables", help="minimum safe distance and maximum velocity tables")
    _common(p)
    p.add_argument("--speed", type=float, action="append", default=[],
                   help="extra row: safe distance at this speed (repeatable)")
    p.add_argument("--dist", type=float, action="append", default=[],
                   help="extra row: maximum velocity for this distance (repeatable)")

    p = sub.add_parser("check-trace", help="run the controller monitor over a trace CSV")
    _common(p)
    p.add_argument("trace", metavar="TRACE", help="trace CSV")
    p.add_argument("--strict-monitor", action="store_true")

    p = sub.add_parser("falsify", help="search for safety violations")
    _common(p)
    p.add_argument("--out", metavar="PATH", help="counterexample CSV (sidecar JSON alongside)")
    p.add_argument("--policy", default=None)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--horizon", type=float)

    p = sub.add_parser("liveness", help="run a liveness grid")
    p.add_argument("kind", choices=[k.value for k in experiments.LIVENESS_KINDS])
    p.add_argument("--budget", type=int, default=100, help="number of grid draws")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH", help="per-point CSV report")

    p = sub.add_parser("validate", help="check a scenario's parameters and initial condition")
    _common(p)
    return ap


def _scenario(args, policy: Optional[str] = None, horizon: Optional[float] = None) -> Scenario:
    over = parse_overrides(args.overrides)
    refs = frozenset(parse_refinement(r) for r in args.refine)
    if args.scenario:
        s = load_scenario(args.scenario)
        if over:
            s = replace(s, params=replace(s.params, **over))
        if args.mode:
            s = replace(s, safety_mode=parse_mode(args.mode))
        if refs:
            s = replace(s, refinements=s.refinements | refs)
    else:
        mode = parse_mode(args.mode or "passive")
        params = WorldParams(**over)
        if mode is SafetyMode.STATIC and "V" not in over:
            params = replace(params, V=0.0)
        v_max = params.V
        robot = RobotState.at_rest(Vec2(0.0, 0.0), Vec2(1.0, 0.0))
        s = Scenario(params, mode, robot, (ObstacleState(Vec2(8.0, 0.0), Vec2(0.0, 0.0), v_max),),
                     refs, PolicyKind.HEAD_ON, 30.0, 0, GoalSpec(GoalKind.POINT, Vec2(20.0, 0.0)))
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    if policy:
        s = replace(s, obstacle_policy=parse_policy(policy))
    if horizon is not None:
        s = replace(s, horizon=horizon)
    return s


def cmd_validate(args) -> int:
    s = _scenario(args)
    bad = validate_scenario(s)
    for msg in bad:
        print(msg)
    if not bad:
        print("valid")
    return VIOLATION if bad else OK


def cmd_simulate(args) -> int:
    s = _scenario(args, args.policy, args.horizon)
    bad = validate_scenario(s)
    if bad:
        raise UsageError("invalid scenario: " + "; ".join(bad))
    if s.goal is not None and s.goal.kind is not GoalKind.POINT:
        out = experiments.run_liveness(s, record=bool(args.out))
        if args.out:
            save_trace(out.trace, args.out)
        print(f"goal: {s.goal.kind.value}")
        if s.goal.kind in (GoalKind.WAYPOINT, GoalKind.WAYPOINT_DEADLINE):
            print(f"stopped inside goal region = {str(out.reached and not out.overshoot).lower()}")
        else:
            print(f"passed intersection = {str(out.reached).lower()}")
            print(f"contact while moving = {str(out.contact_while_moving).lower()}")
        if out.deadline_met is not None:
            print(f"passed before deadline = {str(out.deadline_met).lower()}")
        print(f"time = {out.time:.6g}")
        for n in out.notes:
            print(f"note: {n}")
        return OK if out.success else VIOLATION
    if not 0 < args.kappa <= 1:
        raise UsageError("--kappa must be in (0, 1]")
    r = sim.simulate(s, kappa=args.kappa, record=True, check=True)
    if args.out:
        save_trace(r.trace, args.out)
    plain = s.safety_mode is SafetyMode.PASSIVE and not s.refinements
    print(f"mode = {s.safety_mode.value}; refinements = "
          f"{','.join(sorted(x.value for x in s.refinements)) or 'none'}; "
          f"policy = {s.obstacle_policy.value}; seed = {s.seed}")
    print(f"cycles = {r.cycles}; model time = {r.t_end:.6g} s")
    print(f"min distance while moving = {r.min_distance_moving:.6g}")
    print(f"stops = {r.stops}; near misses (< 1e-3 m) = {r.near_misses}")
    print(f"safety violations = {len(r.violations)}")
    print(f"loop invariant failures = {len(r.invariant_failures)}")
    print(f"differential invariant failures = {len(r.diff_failures)}")
    if plain:
        rep = check_trace(r.trace, s.params, strict=args.strict_monitor)
        print("monitor: " + rep.lines()[-1])
    for v in r.violations[:5]:
        print(f"violation: {v}")
    return VIOLATION if not r.ok else OK


TABLE_TITLES = {
    "static-distance": ("Static safety: minimum safe distance", ("v", "A", "b", "eps")),
    "static-corridor": ("Static safety: maximum velocity, corridor 1.25 m", ("A", "b", "eps")),
    "static-door": ("Static safety: maximum velocity, door 0.25 m", ("A", "b", "eps")),
    "passive-distance": ("Passive safety: minimum safe distance", ("v", "A", "b", "V", "eps")),
    "passive-corridor": ("Passive safety: maximum velocity, corridor 1.25 m", ("A", "b", "V", "eps")),
    "passive-door": ("Passive safety: maximum velocity, door 0.25 m", ("A", "b", "V", "eps")),
}


def cmd_tables(args) -> int:
    groups: dict = {}
    for r in safety.table_rows():
        groups.setdefault(r.table, []).append(r)
    for name, items in groups.items():
        title, labels = TABLE_TITLES[name]
        print(title)
        print(f"  {'configuration':34s} {'full':>10} {'2dp':>6} {'ref':>6}")
        for r in items:
            cfg = " ".join(f"{k}={v:g}" for k, v in zip(labels, r.config))
            status = "match" if r.matches else "differs"
            print(f"  {cfg:34s} {r.value:10.6f} {r.value:6.2f} {r.reference:6.2f}  {status}")
        print()
    if args.speed or args.dist:
        over = parse_overrides(args.overrides)
        mode = parse_mode(args.mode or "passive")
        params = WorldParams(**over)
        refs = frozenset(parse_refinement(x) for x in args.refine)
        print(f"Custom rows ({mode.value}): " + " ".join(f"{k}={getattr(params, k):g}"
                                                        for k in ("A", "b", "V", "eps")))
        for v in args.speed:
            a = params.A if safety.uses_actual_accel(refs) else None
            d = safety.safe_distance(safety.SafetyQuery(mode, refs, v, params, a_r=a))
            print(f"  safe distance at v={v:g}: {d:.6f} ({d:.2f})")
        for d in args.dist:
            v = safety.max_velocity(mode, d, params, refs)
            print(f"  max velocity for distance {d:g}: {v:.6f} ({v:.2f})")
    return OK


def cmd_check_trace(args) -> int:
    try:
        trace = load_trace(args.trace)
    except OSError as e:
        raise UsageError(str(e)) from None
    if args.scenario:
        params = _scenario(args).params
    else:
        params = WorldParams(**parse_overrides(args.overrides))
    strict = check_trace(trace, params, strict=True)
    relaxed = check_trace(trace, params, strict=False)
    chosen = strict if args.strict_monitor else relaxed
    for line in chosen.lines():
        print(line)
    other = relaxed if args.strict_monitor else strict
    print(f"({other.lines()[-1]})")
    return OK if chosen.passed else VIOLATION


def cmd_falsify(args) -> int:
    s = _scenario(args, args.policy, args.horizon if args.horizon is not None else
                  (None if args.scenario else 6.0))
    bad = validate_scenario(s)
    if bad:
        raise UsageError("invalid template: " + "; ".join(bad))
    if not 0 < args.kappa <= 1:
        raise UsageError("--kappa must be in (0, 1]")
    if args.budget < 0:
        raise UsageError("--budget must be >= 0")
    seed = 0 if args.seed is None else args.seed
    res = falsify(s, args.budget, seed=seed, kappa=args.kappa)
    print(f"found = {str(res.found).lower()}")
    print(f"trials = {res.trials}")
    print(f"best objective (min distance while moving) = {res.best_objective:.6g}")
    print(f"near misses (< 1e-3 m) = {res.near_misses}")
    if res.found:
        print(f"counterexample trial = {res.trial_index}; episode seed = {res.scenario.seed}")
        for v in res.violations[:3]:
            print(f"violation: {v}")
    if args.out:
        side = write_counterexample(res, args.out)
        print(f"wrote {side}")
    return VIOLATION if res.found else OK


def cmd_liveness(args) -> int:
    kind = GoalKind(args.kind)
    ok = fail = skipped = 0
    rows = []
    for k in range(args.budget):
        s, why = experiments.liveness_point(kind, k, args.seed)
        if s is None:
            skipped += 1
            rows.append((k, "skipped-infeasible", why))
            continue
        out = experiments.run_liveness(s)
        if out.success:
            ok += 1
            rows.append((k, "pass", f"t={out.time:.6g}"))
        else:
            fail += 1
            rows.append((k, "fail", "; ".join(out.notes[:2])))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["point", "result", "detail"])
            w.writerows(rows)
    print(f"{kind.value}: {ok} passed, {fail} failed, {skipped} skipped-infeasible "
          f"of {args.budget} grid draws")
    for k, res, detail in rows:
        if res == "fail":
            print(f"point {k}: {detail}")
    return VIOLATION if fail else OK


COMMANDS = {
    "simulate": cmd_simulate,
    "tables": cmd_tables,
    "check-trace": cmd_check_trace,
    "falsify": cmd_falsify,
    "liveness": cmd_liveness,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return USAGE if e.code not in (0, None) else OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ScenarioFormatError, TraceFormatError, sim.InvalidScenario, ValueError,
            OSError) as e:
        print(f"dwsafe: error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
