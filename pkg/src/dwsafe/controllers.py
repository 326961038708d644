"""Dynamic-window controller: candidate generation, admissibility, progress scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import safety
from .safety import SafetyQuery, circle_clearance, uses_actual_accel
from .state import (
    STRAIGHT_RADIUS,
    Branch,
    ControlChoice,
    ObstacleState,
    Refinement,
    RobotState,
    SafetyMode,
    Vec2,
    WorldParams,
    curve_center,
)

visibility = safety.visibility

# Curves tighter than this are treated like spinning in place and not offered.
MIN_RADIUS = 1e-6


@dataclass(frozen=True)
class CandidateSet:
    accelerations: tuple
    omegas: tuple

    @staticmethod
    def grid(params: WorldParams, n_accel: int = 9, n_omega: int = 21) -> "CandidateSet":
        accs = tuple(float(x) for x in np.linspace(-params.b, params.A, n_accel))
        if n_omega == 1:
            omegas = (0.0,)
        else:
            omegas = tuple(float(x) for x in np.linspace(-params.Omega, params.Omega, n_omega))
        # exact zero so the straight candidate is always present for odd grids
        omegas = tuple(0.0 if abs(w) < 1e-15 else w for w in omegas)
        return CandidateSet(accs, omegas)

    def violations(self, params: WorldParams) -> list[str]:
        out = []
        if any(not -params.b <= a <= params.A for a in self.accelerations):
            out.append("acceleration outside [-b, A]")
        if any(abs(w) > params.Omega for w in self.omegas):
            out.append("rotational velocity outside [-Omega, Omega]")
        return out


@dataclass(frozen=True, slots=True)
class Observation:
    """What the controller sees.

    ``robot`` carries the measured position and the true speed, heading and
    curve (the curve link is stated on true values); ``v_hat`` is the
    measured speed used in the distance bounds.
    """

    robot: RobotState
    obstacles: tuple
    v_hat: float


def _straight_or(v: float, w: float) -> Optional[tuple[float, float]]:
    """(omega, r_c) for candidate rotational velocity w at speed v."""
    if w == 0.0:
        return v / STRAIGHT_RADIUS, STRAIGHT_RADIUS
    r_c = v / w
    if abs(r_c) < MIN_RADIUS:
        # v == 0 would mean spinning in place, which is not modeled
        return None
    return w, r_c


def _scores(robot: RobotState, accs: np.ndarray, radii: np.ndarray, eps: float,
            goal: Vec2) -> np.ndarray:
    """Negative distance to goal after eps for every (acceleration, radius) pair."""
    v = robot.v_r
    s = v * eps + 0.5 * eps * eps * accs
    stops = accs * eps + v < 0
    if stops.any():
        s[stops] = v * v / (-2.0 * accs[stops])
    sm = s[:, None]
    phi = sm / radii
    # zero arc length: any finite angle gives the same (zero) displacement
    phi[phi == 0.0] = 1.0
    half = np.sin(0.5 * phi)
    # sin(phi)/phi and (1 - cos(phi))/phi = 2 sin^2(phi/2)/phi stay accurate for tiny phi
    sf = np.sin(phi) / phi
    cf = 2.0 * half * half / phi
    dx, dy = robot.d_r
    px = (robot.p_r[0] - goal[0]) + sm * (sf * dx - cf * dy)
    py = (robot.p_r[1] - goal[1]) + sm * (sf * dy + cf * dx)
    return -np.hypot(px, py)


_TIE_KEYS: dict = {}


def _tie_keys(accs: tuple, omegas: tuple):
    key = (accs, omegas)
    hit = _TIE_KEYS.get(key)
    if hit is None:
        n_a, n_w = len(accs), len(omegas)
        a = np.abs(np.asarray(accs, dtype=float))
        w = np.asarray(omegas, dtype=float)
        hit = (np.repeat(a, n_w), np.tile(np.abs(w), n_a), np.tile(w < 0, n_a))
        if len(_TIE_KEYS) > 64:
            _TIE_KEYS.clear()
        _TIE_KEYS[key] = hit
    return hit


def decide(mode: SafetyMode, refinements, obs: Observation, params: WorldParams,
           candidates: Optional[CandidateSet] = None, goal: Optional[Vec2] = None,
           bounds: Optional[Sequence[float]] = None, kappa: float = 1.0) -> ControlChoice:
    """One controller step: the best admissible Accelerate candidate, else Stay or Brake.

    ``bounds`` are the per-obstacle speed bounds (default V for all).
    ``kappa`` scales the admissibility thresholds (1 is the verified controller).
    """
    refinements = frozenset(refinements)
    robot = obs.robot
    v = robot.v_r
    obstacles = obs.obstacles
    if bounds is None:
        bounds = [params.V] * len(obstacles)
    if candidates is None:
        candidates = CandidateSet.grid(params)
    if goal is None:
        goal = Vec2(robot.p_r[0] + 1e3 * robot.d_r[0], robot.p_r[1] + 1e3 * robot.d_r[1])
    safety._require_valid(params)
    actual = uses_actual_accel(refinements)
    accs = list(candidates.accelerations) if actual else [params.A]
    trajectory = Refinement.TRAJECTORY_DISTANCE in refinements
    orientation = mode is SafetyMode.PASSIVE_ORIENTATION

    if trajectory and v == 0:
        gx = goal[0] - robot.p_r[0]
        gy = goal[1] - robot.p_r[1]
        if gx * robot.d_r[0] + gy * robot.d_r[1] < 0:
            return ControlChoice(Branch.STAY, 0.0, 0.0, -robot.r_c, robot.p_c, d_flip=True,
                                 reason="turn in place")

    curves = []
    for w in candidates.omegas:
        c = _straight_or(v, w)
        if c is not None:
            curves.append((w, c[0], c[1]))

    if curves:
        # obstacle-side quantities that do not depend on the candidate
        visible = [visibility(robot, o.p_o, params.gamma) if orientation else True
                   for o in obstacles]
        gaps = [max(abs(robot.p_r[0] - o.p_o[0]), abs(robot.p_r[1] - o.p_o[1])) for o in obstacles]
        base = SafetyQuery(mode, refinements, v, params, a_r=accs[0] if actual else None,
                           v_hat=obs.v_hat)
        # per obstacle: threshold for every acceleration
        need = [safety.safe_distances(base, accs, V) for V in bounds]
        inf_ok = [[(not vis) or g > kappa * need[j][i]
                   for j, (g, vis) in enumerate(zip(gaps, visible))] for i in range(len(accs))]
        traj_bounds = None
        if trajectory:
            tb = [safety.trajectory_bounds(base, accs, V) for V in bounds]
            traj_bounds = [[kappa * tb[j][i] for j in range(len(bounds))] for i in range(len(accs))]

        # without the trajectory disjunct a row's admissibility does not depend on the curve
        rows = list(range(len(accs))) if trajectory else [i for i, f in enumerate(inf_ok) if all(f)]
        order = []
        n_w = len(curves)
        if rows:
            sub = tuple(accs[i] for i in rows)
            r_arr = np.asarray([c[2] for c in curves], dtype=float)
            score = _scores(robot, np.asarray(sub, dtype=float), r_arr, params.eps, goal).ravel()
            abs_a, abs_w, neg_w = _tie_keys(sub, tuple(c[0] for c in curves))
            # best score first, then smaller |a|, smaller |w|, positive w
            order = np.lexsort((neg_w, abs_w, abs_a, -score))
            if len(rows) < len(accs):
                order = np.asarray(rows)[order // n_w] * n_w + order % n_w
            order = order.tolist()
        clear_cache: dict = {}
        cda_cache: dict = {}
        for flat in order:
            ia, iw = divmod(flat, n_w)
            w, omega, r_c = curves[iw]
            if orientation:
                ok = cda_cache.get(iw)
                if ok is None:
                    ok = cda_cache[iw] = safety.cda_ok(v, r_c, params)
                if not ok:
                    continue
            flags = inf_ok[ia]
            admissible = True
            for j, f in enumerate(flags):
                if f:
                    continue
                if not trajectory:
                    admissible = False
                    break
                key = (iw, j)
                cl = clear_cache.get(key)
                if cl is None:
                    cl = clear_cache[key] = circle_clearance(robot.p_r, robot.d_r, r_c,
                                                             obstacles[j].p_o)
                if not cl > traj_bounds[ia][j]:
                    admissible = False
                    break
            if not admissible:
                continue
            a = accs[ia]
            cand = replace(robot, r_c=r_c, omega_r=omega,
                           p_c=curve_center(robot.p_r, robot.d_r, r_c))
            q = SafetyQuery(mode, refinements, v, params, a_r=a if actual else None, v_hat=obs.v_hat)
            if not all(safety.is_safe_curve(cand, o, q, V, kappa) for o, V in zip(obstacles, bounds)):
                continue  # defensive: the cached tests and the predicate must agree
            vis = tuple(1.0 if x else -1.0 for x in visible)
            return ControlChoice(Branch.ACCELERATE, a, omega, r_c, cand.p_c,
                                 reason=f"w={w:g}", visible=vis)
    if v == 0:
        return ControlChoice(Branch.STAY, 0.0, 0.0, robot.r_c, robot.p_c)
    return ControlChoice(Branch.BRAKE, -params.b, robot.omega_r, robot.r_c, robot.p_c)
