"""Randomized search for safety violations, with margin-weakened controller mutants."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import safety, sim
from .safety import SafetyQuery
from .state import (
    ObstacleState,
    PolicyKind,
    RobotState,
    Scenario,
    Trace,
    Vec2,
    validate_scenario,
)

# Trials evaluated per hill-climb generation, fixed so results do not depend on worker count.
GENERATION = 16


@dataclass(frozen=True)
class MarginMutant:
    """Controller guard with every admissibility threshold scaled by kappa."""

    mode: object
    kappa: float

    def threshold(self, q: SafetyQuery, V: Optional[float] = None) -> float:
        return self.kappa * safety.safe_distance(q, V)

    def is_safe(self, robot: RobotState, obstacle: ObstacleState, q: SafetyQuery,
                V: Optional[float] = None) -> bool:
        return safety.is_safe_curve(robot, obstacle, q, V, self.kappa)


def mutate_margin(mode, kappa: float) -> MarginMutant:
    if not (isinstance(kappa, (int, float)) and 0 < kappa <= 1):
        raise ValueError("kappa must be in (0, 1]")
    return MarginMutant(mode, float(kappa))


@dataclass
class FalsificationResult:
    found: bool
    counterexample: Optional[Trace]
    trials: int
    best_objective: float
    scenario: Optional[Scenario] = None
    trial_index: Optional[int] = None
    kappa: float = 1.0
    seed: int = 0
    violations: list = field(default_factory=list)
    near_misses: int = 0

    def sidecar(self) -> dict:
        from .scenario_io import dumps_scenario

        return {
            "found": self.found,
            "seed": self.seed,
            "trial": self.trial_index,
            "episode_seed": self.scenario.seed if self.scenario else None,
            "kappa": self.kappa,
            "mutation": "none" if self.kappa == 1.0 else f"margin x{self.kappa:g}",
            "objective": self.best_objective,
            "trials": self.trials,
            "near_misses": self.near_misses,
            "violations": self.violations,
            "scenario": dumps_scenario(self.scenario) if self.scenario else None,
        }


def _place(template: Scenario, rng: random.Random, base: Optional[list] = None) -> list:
    """Obstacle placements as (distance, bearing) pairs relative to the robot's heading."""
    head_on = template.obstacle_policy is PolicyKind.HEAD_ON
    out = []
    for k in range(len(template.obstacles0)):
        if base is None:
            dist = rng.uniform(0.5, 15.0)
            bearing = 0.0 if head_on else rng.uniform(-math.pi, math.pi)
        else:
            dist = min(20.0, max(0.2, base[k][0] + rng.gauss(0.0, 1.0)))
            bearing = base[k][1] if head_on else base[k][1] + rng.gauss(0.0, 0.3)
        out.append((dist, bearing))
    return out


def _instance(template: Scenario, placement: list, episode_seed: int) -> Scenario:
    r = template.robot0
    h = math.atan2(r.d_r[1], r.d_r[0])
    obs = []
    for o, (dist, bearing) in zip(template.obstacles0, placement):
        a = h + bearing
        p = Vec2(r.p_r[0] + dist * math.cos(a), r.p_r[1] + dist * math.sin(a))
        obs.append(ObstacleState(p, o.v_o, o.v_max, o.d_o, o.a_o, o.visible_flag))
    return replace(template, obstacles0=tuple(obs), seed=episode_seed)


def _trial(args) -> tuple:
    s, kappa = args
    r = sim.simulate(s, kappa=kappa, record=False, check=True)
    return (bool(r.violations), r.min_distance_moving, r.violations[:3], r.near_misses)


def falsify(template: Scenario, budget: int, seed: int = 0, kappa: float = 1.0,
            workers: Optional[int] = None) -> FalsificationResult:
    """Search up to ``budget`` episodes for a violation of the template mode's safety condition.

    Half of each generation samples fresh placements; the other half mutates the
    placement with the smallest distance-while-moving seen so far. The returned
    counterexample is the violating trial with the lowest index, replayed with
    full recording.
    """
    bad = validate_scenario(template)
    if bad:
        raise sim.InvalidScenario("; ".join(bad))
    mutate_margin(template.safety_mode, kappa)
    if budget < 0:
        raise ValueError("budget must be >= 0")
    rng = random.Random(seed)
    best = (math.inf, None)
    trials = 0
    near = 0
    result = FalsificationResult(False, None, 0, math.inf, kappa=kappa, seed=seed)
    while trials < budget:
        batch = []
        for _ in range(min(GENERATION, budget - trials)):
            for _attempt in range(100):
                fresh = best[1] is None or rng.random() < 0.5
                placement = _place(template, rng, None if fresh else best[1])
                s = _instance(template, placement, rng.getrandbits(32))
                if not validate_scenario(s):
                    break
            else:
                raise sim.InvalidScenario("could not sample a valid initial placement")
            batch.append((placement, s))
        outcomes = sim.run_batch(_trial, [(s, kappa) for _, s in batch], workers)
        for k, ((placement, s), (hit, obj, viol, nm)) in enumerate(zip(batch, outcomes)):
            near += nm
            if obj < best[0]:
                best = (obj, placement)
            if hit:
                trace = sim.run(s, kappa=kappa)
                result.found = True
                result.counterexample = trace
                result.scenario = s
                result.trial_index = trials + k
                result.violations = list(trace.events["violations"])
                result.trials = trials + k + 1
                result.best_objective = min(best[0], obj)
                result.near_misses = near
                return result
        trials += len(batch)
    result.trials = trials
    result.best_objective = best[0]
    result.near_misses = near
    return result


def write_counterexample(result: FalsificationResult, csv_path) -> Path:
    """Write the counterexample trace CSV and a JSON sidecar next to it; returns the sidecar path."""
    from .trace_io import save_trace

    csv_path = Path(csv_path)
    if result.counterexample is not None:
        save_trace(result.counterexample, csv_path)
    side = csv_path.with_suffix(".json")
    side.write_text(json.dumps(result.sidecar(), indent=2, default=float) + "\n")
    return side
