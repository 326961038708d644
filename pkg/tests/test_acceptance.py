"""Acceptance suite: one PASS/FAIL line per criterion."""

import math
import random
import time

import numpy as np
import pytest

from dwsafe import experiments, safety, sim
from dwsafe.dynamics import flow_robot
from dwsafe.falsify import falsify
from dwsafe.monitor import check_trace, eval_monitor, trace_pairs
from dwsafe.state import (
    GoalKind,
    GoalSpec,
    ObstacleState,
    PolicyKind,
    RobotState,
    SafetyMode,
    Scenario,
    Vec2,
    WorldParams,
    curve_center,
)

import faults
from oracles import rk4_arc

EPISODES_PER_POLICY = 500
SUITE_SEED = 0


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")


def _rows(table):
    return [r for r in safety.table_rows() if r.table == table]


def _close(r):
    return abs(round(r.value, 2) - r.reference) <= 0.01 + 1e-9


def test_1_static_tables(capsys):
    t0 = time.perf_counter()
    rows = _rows("static-distance") + _rows("static-corridor") + _rows("static-door")
    bad = [r for r in rows if not _close(r)]
    dt = time.perf_counter() - t0
    ok = len(rows) == 15 and not bad and dt < 1.0
    report(capsys, 1, ok, f"{len(rows) - len(bad)}/15 rows within 0.01, {dt:.3f} s")
    assert ok, bad


def test_2_passive_speed_tables(capsys):
    t0 = time.perf_counter()
    corridor, door = _rows("passive-corridor"), _rows("passive-door")
    checked = corridor[:3] + [door[0], door[2]]
    bad = [r for r in checked if not _close(r)]
    unchecked = [r for r in corridor[3:] + [door[1], door[3], door[4]] + _rows("passive-distance")
                 if not _close(r)]
    dt = time.perf_counter() - t0
    ok = not bad and dt < 1.0
    report(capsys, 2, ok, f"{5 - len(bad)}/5 rows within 0.01, {len(unchecked)} other rows differ "
                          f"from the formula, {dt:.3f} s")
    assert ok, bad


@pytest.fixture(scope="module")
def suite_runs():
    jobs = [(label, policy, i, SUITE_SEED, label == "passive")
            for label, _, _ in experiments.SUITES
            for policy in (PolicyKind.PURSUIT, PolicyKind.RANDOM)
            for i in range(EPISODES_PER_POLICY)]
    t0 = time.perf_counter()
    out = sim.run_batch(experiments.run_suite_episode, jobs)
    return out, time.perf_counter() - t0


def test_3_safety_suites(capsys, suite_runs):
    out, dt = suite_runs
    per = {}
    for e in out:
        per.setdefault(e.label, [0, 0])
        per[e.label][0] += 1
        per[e.label][1] += bool(e.violations)
    bad = {k: v[1] for k, v in per.items() if v[1]}
    ok = len(per) == 11 and all(v[0] == 2 * EPISODES_PER_POLICY for v in per.values()) \
        and not bad and dt < 300
    report(capsys, 3, ok, f"{len(out)} episodes, violating episodes per suite {bad or 'none'}, "
                          f"{dt:.1f} s")
    assert ok, [e.violations for e in out if e.violations][:3]


def test_4_invariants(capsys, suite_runs):
    out, _ = suite_runs
    inv = sum(e.invariant_failures for e in out)
    diff = sum(e.diff_failures for e in out)
    cycles = sum(e.cycles for e in out)
    ok = inv == 0 and diff == 0
    report(capsys, 4, ok, f"{cycles} cycles, loop invariant failures {inv}, "
                          f"differential invariant failures {diff}")
    assert ok


def test_5_integrator_oracle(capsys):
    rng = np.random.default_rng(2024)
    n = 10_000
    v = rng.uniform(0, 10, n)
    a = rng.uniform(-10, 10, n)
    r = 10 ** rng.uniform(-1, 6, n) * rng.choice([-1, 1], n)
    h = rng.uniform(-math.pi, math.pi, n)
    dt = rng.uniform(0, 1, n)
    d = np.column_stack([np.cos(h), np.sin(h)])
    p = rng.uniform(-5, 5, (n, 2))
    ref = rk4_arc(p, v, d, a, r, dt)
    worst = 0.0
    for i in range(n):
        pi, di = Vec2(*p[i]), Vec2(*d[i])
        pre = RobotState(pi, v[i], 0.0, di, v[i] / r[i], r[i], curve_center(pi, di, r[i]))
        got = flow_robot(pre, a[i], pre.omega_r, r[i], dt[i]).post.p_r
        worst = max(worst, math.hypot(got[0] - ref[i, 0], got[1] - ref[i, 1]))
    ok = worst < 1e-6
    report(capsys, 5, ok, f"{n} intervals, max deviation {worst:.2e} m")
    assert ok


def _monitor_trace(seed):
    p = WorldParams(A=1, b=1, V=1, eps=0.1)
    s = Scenario(p, SafetyMode.PASSIVE, RobotState.at_rest(Vec2(0, 0), Vec2(1, 0)),
                 (ObstacleState(Vec2(6, 2), Vec2(0, 0), 1.0),), frozenset(), PolicyKind.PURSUIT, 10.0,
                 seed, GoalSpec(point=Vec2(20, 0)), seed % 2 == 0)
    return s, sim.run(s)


def test_6_monitor(capsys, suite_runs):
    out, _ = suite_runs
    passive = [e for e in out if e.label == "passive"]
    checked = sum(e.monitor_checked for e in passive)
    rejected = sum(bool(e.monitor_failures) for e in passive)

    rng = random.Random(6)
    traces = [_monitor_trace(k) for k in range(20)]
    pool = []
    for s, tr in traces:
        for _, pre, post in trace_pairs(tr):
            v = eval_monitor(pre, post, s.params)
            if v.passed:
                pool.append((s.params, pre, post, v.branch))
    missed = []
    n_mut = 10_000
    for k in range(n_mut):
        params, pre, post, branch = pool[rng.randrange(len(pool))]
        var = faults.VARIABLES[k % len(faults.VARIABLES)]
        bad = faults.mutate(post, var, rng, params, params.V)
        if not faults.identified(eval_monitor(pre, bad, params), var, branch):
            missed.append((var, branch))

    canned = []
    s, tr = traces[0]
    for inject in (lambda t: faults.teleport(t, 17), lambda t: faults.over_accelerate(t, 17, s.params),
                   lambda t: faults.obstacle_overspeed(t, 17, s.params.V)):
        rep = check_trace(inject(sim.run(s)), s.params)
        canned.append(rep.first_failure == 17)

    ok = checked > 0 and rejected == 0 and not missed and all(canned)
    report(capsys, 6, ok, f"{checked} compliant transitions checked, {rejected} rejected runs; "
                          f"{n_mut - len(missed)}/{n_mut} mutants identified; "
                          f"canned faults at step 17: {sum(canned)}/3")
    assert ok, missed[:5]


def _falsify_template():
    p = WorldParams(A=1, b=1, V=1, eps=0.1)
    return Scenario(p, SafetyMode.PASSIVE, RobotState.at_rest(Vec2(0, 0), Vec2(1, 0)),
                    (ObstacleState(Vec2(5, 0), Vec2(0, 0), 1.0),), frozenset(), PolicyKind.HEAD_ON, 6.0, 0,
                    GoalSpec(point=Vec2(20, 0)))


def test_7_margin_mutation(capsys):
    t0 = time.perf_counter()
    weak = falsify(_falsify_template(), 10_000, seed=42, kappa=0.5)
    full = falsify(_falsify_template(), 10_000, seed=42, kappa=1.0)
    dt = time.perf_counter() - t0
    ok = weak.found and not full.found and full.trials == 10_000
    report(capsys, 7, ok, f"kappa=0.5 found={weak.found} at trial {weak.trial_index}; "
                          f"kappa=1 found={full.found} in {full.trials} trials, "
                          f"best objective {full.best_objective:.3g}; {dt:.1f} s")
    assert ok


def test_8_liveness(capsys):
    t0 = time.perf_counter()
    results = {}
    for kind in experiments.LIVENESS_KINDS:
        grid = experiments.liveness_grid(kind, 100)
        outcomes = [experiments.run_liveness(s) for s, _ in grid]
        results[kind] = [o for o in outcomes if not o.success]
        if kind is GoalKind.INTERSECTION:
            results[kind] += [o for o in outcomes if o.contact_while_moving]
    dt = time.perf_counter() - t0
    ok = all(not v for v in results.values()) and dt < 120
    summary = ", ".join(f"{k.value} {100 - len(v)}/100" for k, v in results.items())
    report(capsys, 8, ok, f"{summary}; {dt:.1f} s")
    assert ok, {k.value: [o.notes[:2] for o in v[:2]] for k, v in results.items() if v}
