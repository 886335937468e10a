"""Independent plan validator.

Re-checks a plan against the scene from scratch: endpoints, velocity limits,
the pick -> handoff(s) -> place ordering, grasp consistency at every
transition, and collisions at half the planning resolution using the
pure-Python kernels by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    COLLISION_STEP,
    OPPOSITE_FACE,
    CollisionChecker,
    Scene,
    duration,
    object_pose_from_grasp,
    pose_error,
)
from .plan import TRANSITION_KINDS, Plan

POSE_TOL = 1e-6
TIME_TOL = 1e-9


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        return self.ok


def _pose_close(a, b) -> bool:
    pos, ang = pose_error(a, b)
    return pos <= POSE_TOL and ang <= POSE_TOL


def validate_plan(scene: Scene, plan: Plan, step: float = COLLISION_STEP / 2,
                  backend: str = "python", check_collisions: bool = True) -> ValidationReport:
    rep = ValidationReport()
    err = rep.errors.append
    n = scene.n_arms
    if not plan.times:
        err("plan has no waypoints")
        return rep
    for k, Q in enumerate(plan.configs):
        if len(Q) != n:
            err(f"waypoint {k}: expected {n} arm configurations")
            return rep
        for i, (arm, q) in enumerate(zip(scene.arms, Q)):
            if not arm.within_limits(q):
                err(f"waypoint {k}: arm {i} outside joint limits")
    if rep.errors:
        return rep
    if plan.times[0] != 0.0:
        err("plan does not start at t = 0")
    if abs(plan.cost - plan.times[-1]) > TIME_TOL * max(1.0, plan.cost):
        err(f"cost {plan.cost} differs from final time {plan.times[-1]}")
    for i in range(n):
        if np.max(np.abs(plan.configs[0][i] - scene.q_init[i])) > 1e-9:
            err(f"arm {i} does not start at its initial configuration")
        if np.max(np.abs(plan.configs[-1][i] - scene.q_goal[i])) > 1e-9:
            err(f"arm {i} does not end at its goal configuration")
    for k in range(len(plan.times) - 1):
        dt = plan.times[k + 1] - plan.times[k]
        need = duration(scene.arms, plan.configs[k], plan.configs[k + 1])
        if dt < need - TIME_TOL * max(1.0, need):
            err(f"segment {k}: duration {dt} shorter than velocity limit allows ({need})")

    # transition ordering and grasp consistency
    events = sorted((e for e in plan.events if e["kind"] in TRANSITION_KINDS), key=lambda e: e["index"])
    kinds = [e["kind"] for e in events]
    if not kinds or kinds[0] != "pick" or kinds[-1] != "place" or len(kinds) < 3 \
            or any(k != "handoff" for k in kinds[1:-1]):
        err(f"transition sequence {kinds} is not pick, handoff+, place")
        return rep
    ts = [0.0] + [plan.times[e["index"]] for e in events] + [plan.times[-1]]
    if any(not (a < b) for a, b in zip(ts, ts[1:])):
        err(f"transition times {ts} are not strictly increasing")
    for e in events:
        if abs(e["t"] - plan.times[e["index"]]) > TIME_TOL:
            err(f"{e['kind']} event time does not match its waypoint")
    ev_at = {e["index"]: e for e in events}
    state = None
    for k in range(len(plan.times)):
        e = ev_at.get(k)
        Q = plan.configs[k]
        if e is None:
            if not _same_held(plan.held[k], state):
                err(f"waypoint {k}: held object changes without a transition")
            continue
        after = plan.held[k]
        if e["kind"] == "pick":
            if state is not None or after is None:
                err("pick must move the object from rest into a grasp")
            else:
                i, g = after
                if not _scene_grasp(scene, g):
                    err("pick uses a grasp not declared by the scene")
                if not _pose_close(object_pose_from_grasp(scene.arms[i], Q[i], g), scene.p_init):
                    err(f"pick: arm {i} grasp does not match the initial object pose")
        elif e["kind"] == "handoff":
            if state is None or after is None:
                err("handoff needs a holder before and a receiver after")
            else:
                (i, gi), (j, gj) = state, after
                if i == j:
                    err("handoff to the same arm")
                if gj.face != OPPOSITE_FACE[gi.face]:
                    err("handoff grasps are not on opposite faces")
                if not _scene_grasp(scene, gj):
                    err("handoff uses a grasp not declared by the scene")
                pi = object_pose_from_grasp(scene.arms[i], Q[i], gi)
                pj = object_pose_from_grasp(scene.arms[j], Q[j], gj)
                if not _pose_close(pi, pj):
                    err(f"handoff {i}->{j}: the two grasps imply different object poses")
        else:
            if state is None or after is not None:
                err("place must release a held object")
            else:
                i, g = state
                if not _pose_close(object_pose_from_grasp(scene.arms[i], Q[i], g), scene.p_goal):
                    err(f"place: arm {i} does not hold the object at the goal pose")
        state = after
    if state is not None:
        err("object still held at the end of the plan")
    if rep.errors or not check_collisions:
        return rep

    checker = CollisionChecker(scene, step=step, backend=backend)
    for k in range(len(plan.times)):
        before = plan.held[k - 1] if k > 0 else None
        for h in {id(before): before, id(plan.held[k]): plan.held[k]}.values():
            if not checker.config_valid(plan.configs[k], held=h):
                err(f"waypoint {k}: configuration in collision")
        if k + 1 < len(plan.times):
            if not checker.edge_valid(plan.configs[k], plan.configs[k + 1], held=plan.held[k]):
                err(f"segment {k}: motion in collision")
    return rep


def _same_held(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a[0] == b[0] and a[1].face == b[1].face and a[1].offset == b[1].offset


def _scene_grasp(scene: Scene, g) -> bool:
    return any(s.face == g.face and s.offset == g.offset for s in scene.grasps)
