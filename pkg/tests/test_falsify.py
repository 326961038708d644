import io
import json
import math
import random

import pytest

from dwsafe import safety, sim
from dwsafe.falsify import falsify, mutate_margin, write_counterexample
from dwsafe.safety import SafetyQuery
from dwsafe.state import (
    GoalSpec,
    ObstacleState,
    PolicyKind,
    RobotState,
    SafetyMode,
    Scenario,
    Vec2,
    WorldParams,
)
from dwsafe.trace_io import read_trace

M = SafetyMode


def template(kappa_mode=M.PASSIVE, V=1.0, policy=PolicyKind.HEAD_ON, at=(5.0, 0.0), seed=0):
    p = WorldParams(A=1, b=1, V=V, eps=0.1)
    return Scenario(p, kappa_mode, RobotState.at_rest(Vec2(0, 0), Vec2(1, 0)),
                    (ObstacleState(Vec2(*at), Vec2(0, 0), V),), frozenset(), policy, 6.0, seed,
                    GoalSpec(point=Vec2(20.0, 0.0)))


def test_margin_threshold_example():
    m = mutate_margin(M.PASSIVE, 0.5)
    q = SafetyQuery(M.PASSIVE, frozenset(), 1.0, WorldParams(A=1, b=1, V=1, eps=0.05))
    assert m.threshold(q) == pytest.approx(0.85125)
    assert mutate_margin(M.PASSIVE, 1).threshold(q) == pytest.approx(1.7025)


@pytest.mark.parametrize("kappa", [0, -0.5, 1.01, float("nan"), "0.5"])
def test_margin_out_of_range(kappa):
    with pytest.raises(ValueError):
        mutate_margin(M.PASSIVE, kappa)


def test_kappa_one_is_the_unmutated_controller():
    for seed in range(3):
        s = template(policy=PolicyKind.PURSUIT, at=(4.0, 1.5), seed=seed)
        a, b = sim.run(s), sim.run(s, kappa=1.0)
        assert [(x.robot_post.a_r, x.robot_post.r_c) for x in a.steps] == \
               [(x.robot_post.a_r, x.robot_post.r_c) for x in b.steps]
    m = mutate_margin(M.PASSIVE, 1.0)
    r = RobotState(Vec2(0, 0), 1.0, 1.0, Vec2(1, 0), 0.5, 2.0, Vec2(0, 2))
    q = SafetyQuery(M.PASSIVE, frozenset(), 1.0, WorldParams(A=1, b=1, V=1, eps=0.05))
    for x in (0.1, 1.0, 1.7, 1.71, 3.0):
        o = ObstacleState(Vec2(x, 0.0), Vec2(0, 0), 1.0)
        assert m.is_safe(r, o, q) == safety.is_safe_curve(r, o, q)


def test_static_world_not_falsified():
    res = falsify(template(M.STATIC, V=0.0, policy=PolicyKind.RANDOM), 200, seed=1)
    assert not res.found and res.trials == 200
    assert res.best_objective > 0


def test_invalid_template_and_budget():
    bad = template()
    bad = Scenario(WorldParams(A=1, b=0, V=1, eps=0.1), *[getattr(bad, f) for f in
                   ("safety_mode", "robot0", "obstacles0", "refinements", "obstacle_policy")])
    with pytest.raises(sim.InvalidScenario):
        falsify(bad, 10)
    with pytest.raises(ValueError):
        falsify(template(), -1)
    with pytest.raises(ValueError):
        falsify(template(), 10, kappa=0.0)
    assert falsify(template(), 0).trials == 0


def test_counterexample_replays_exactly():
    res = falsify(template(), 500, seed=42, kappa=0.5)
    assert res.found and res.violations
    again = sim.run(res.scenario, kappa=0.5)
    assert again.events["violations"] == res.violations
    assert [x.robot_post.p_r for x in again.steps] == [x.robot_post.p_r for x in res.counterexample.steps]
    # same seed, same answer
    twice = falsify(template(), 500, seed=42, kappa=0.5)
    assert twice.trial_index == res.trial_index


def test_counterexample_files(tmp_path):
    res = falsify(template(), 500, seed=42, kappa=0.5)
    side = write_counterexample(res, tmp_path / "cex.csv")
    meta = json.loads(side.read_text())
    assert meta["found"] and meta["kappa"] == 0.5 and meta["seed"] == 42
    assert meta["mutation"] == "margin x0.5"
    assert meta["objective"] == res.best_objective
    back = read_trace(io.StringIO((tmp_path / "cex.csv").read_text()))
    assert len(back.steps) == len(res.counterexample.steps)


def test_violation_frequency_monotone_in_kappa():
    rng = random.Random(7)
    placements = [(rng.uniform(1.0, 8.0), rng.getrandbits(32)) for _ in range(30)]
    counts = []
    for kappa in (0.25, 0.5, 0.75, 1.0):
        hits = 0
        for dist, seed in placements:
            r = sim.simulate(template(at=(dist, 0.0), seed=seed), kappa=kappa, record=False)
            hits += bool(r.violations)
        counts.append(hits)
    assert counts[-1] == 0
    assert counts[0] > 0
    # per-seed outcomes need not be monotone; allow two standard errors of sampling noise
    n = len(placements)
    for lo, hi in zip(counts, counts[1:]):
        p = (lo + hi) / (2 * n)
        assert lo >= hi - 2 * math.sqrt(2 * n * p * (1 - p)), counts
