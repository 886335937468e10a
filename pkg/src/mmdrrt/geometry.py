"""Planar kinematic chains, SE(2) poses, and collision checking.

Poses are ``(x, y, theta)`` tuples. An arm configuration is a 1-D float array
of joint angles; a composite configuration is a tuple of those, one per arm,
always in scene order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kernels import get_model_class

IK_TOL = 1e-6
COLLISION_STEP = 0.05
LINK_THICKNESS = 0.05
IK_MAX_RESTARTS = 32
FACES = ("top", "bottom")
OPPOSITE_FACE = {"top": "bottom", "bottom": "top"}


class GeometryError(ValueError):
    """Invalid geometric input (joint limits, degenerate links, bad polygons)."""


# --------------------------------------------------------------------- SE(2)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def compose(a, b):
    x, y, th = a
    c, s = math.cos(th), math.sin(th)
    return (x + c * b[0] - s * b[1], y + s * b[0] + c * b[1], th + b[2])


def inverse(a):
    x, y, th = a
    c, s = math.cos(th), math.sin(th)
    return (-(c * x + s * y), s * x - c * y, -th)


def pose_error(a, b):
    """Position distance and absolute wrapped angle difference."""
    return math.hypot(a[0] - b[0], a[1] - b[1]), abs(wrap_angle(a[2] - b[2]))


# --------------------------------------------------------------------- types


@dataclass(frozen=True)
class ArmModel:
    base_pose: tuple
    link_lengths: tuple
    joint_limits: tuple
    max_joint_velocity: float = 1.0
    thickness: float = LINK_THICKNESS

    def __post_init__(self):
        object.__setattr__(self, "base_pose", tuple(float(v) for v in self.base_pose))
        object.__setattr__(self, "link_lengths", tuple(float(v) for v in self.link_lengths))
        object.__setattr__(
            self, "joint_limits", tuple((float(lo), float(hi)) for lo, hi in self.joint_limits)
        )
        if len(self.base_pose) != 3:
            raise GeometryError("base_pose must be (x, y, theta)")
        if not self.link_lengths:
            raise GeometryError("arm needs at least one link")
        if any(not (l > 0.0) for l in self.link_lengths):
            raise GeometryError("link lengths must be positive")
        if len(self.joint_limits) != len(self.link_lengths):
            raise GeometryError("one joint limit pair per link required")
        if any(not (lo < hi) for lo, hi in self.joint_limits):
            raise GeometryError("joint limits need lo < hi")
        if not (self.max_joint_velocity > 0.0):
            raise GeometryError("max_joint_velocity must be positive")
        if self.thickness < 0.0:
            raise GeometryError("thickness must be non-negative")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits])

    @property
    def reach(self) -> float:
        return sum(self.link_lengths)

    def within_limits(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        return q.shape == (self.dof,) and bool(np.all(q >= self.lower) and np.all(q <= self.upper))


@dataclass(frozen=True)
class Grasp:
    """Object pose relative to the end-effector frame, tagged by the grasped face."""

    offset: tuple
    face: str

    def __post_init__(self):
        object.__setattr__(self, "offset", tuple(float(v) for v in self.offset))
        if len(self.offset) != 3 or not all(math.isfinite(v) for v in self.offset):
            raise GeometryError("grasp offset must be 3 finite numbers")
        if self.face not in FACES:
            raise GeometryError(f"unknown grasp face {self.face!r}")


@dataclass(frozen=True)
class ObjectPose:
    """Object pose with its support: ('stable', surface) or ('picked', arm, grasp face)."""

    pose: tuple
    support: tuple


@dataclass
class Scene:
    arms: list
    obstacles: list  # ("polygon", ndarray[k, 2] CCW) | ("circle", (cx, cy, r))
    object_shape: np.ndarray
    p_init: tuple
    p_goal: tuple
    grasps: list
    q_init: list
    q_goal: list
    surfaces: list = field(default_factory=list)
    name: str = "scene"
    chain: Optional[list] = None

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def grasp(self, face: str) -> Grasp:
        for g in self.grasps:
            if g.face == face:
                return g
        raise KeyError(face)

    def to_dict(self) -> dict:
        d = {
            "schema": "mmdrrt.scene/1",
            "name": self.name,
            "arms": [
                {
                    "base": list(a.base_pose),
                    "links": list(a.link_lengths),
                    "limits": [list(l) for l in a.joint_limits],
                    "vmax": a.max_joint_velocity,
                    "thickness": a.thickness,
                    "q_init": [float(v) for v in qi],
                    "q_goal": [float(v) for v in qg],
                }
                for a, qi, qg in zip(self.arms, self.q_init, self.q_goal)
            ],
            "obstacles": [_obstacle_to_dict(o) for o in self.obstacles],
            "object": {
                "shape": np.asarray(self.object_shape).tolist(),
                "init": list(self.p_init),
                "goal": list(self.p_goal),
                "grasps": [{"offset": list(g.offset), "face": g.face} for g in self.grasps],
            },
            "surfaces": [[list(p) for p in s] for s in self.surfaces],
        }
        if self.chain is not None:
            d["chain"] = list(self.chain)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _obstacle_to_dict(o):
    kind, data = o
    if kind == "polygon":
        return {"type": "polygon", "points": np.asarray(data).tolist()}
    cx, cy, r = data
    return {"type": "circle", "center": [cx, cy], "radius": r}


def ccw(points) -> np.ndarray:
    """Return the convex polygon with counter-clockwise vertex order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise GeometryError("polygon needs at least 3 vertices")
    x, y = pts[:, 0], pts[:, 1]
    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if area2 == 0.0:
        raise GeometryError("degenerate polygon")
    return pts if area2 > 0 else pts[::-1].copy()


# ---------------------------------------------------------------- kinematics


def forward_kinematics(arm: ArmModel, q, check_limits: bool = True):
    """Link segments and end-effector pose of one arm.

    Returns ``(segments, ee_pose)`` where ``segments`` is a list of
    ``((x0, y0), (x1, y1))`` pairs, one per link.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (arm.dof,):
        raise GeometryError(f"expected {arm.dof} joints, got shape {q.shape}")
    if check_limits and not arm.within_limits(q):
        raise GeometryError("joint-limit violation")
    x, y, th = arm.base_pose
    segments = []
    for length, qj in zip(arm.link_lengths, q.tolist()):
        th += qj
        nx = x + length * math.cos(th)
        ny = y + length * math.sin(th)
        segments.append(((x, y), (nx, ny)))
        x, y = nx, ny
    return segments, (x, y, th)


def end_effector_pose(arm: ArmModel, q):
    return forward_kinematics(arm, q, check_limits=False)[1]


def _fit_limits(angle: float, lo: float, hi: float) -> Optional[float]:
    """Shift ``angle`` by a multiple of 2*pi into [lo, hi] (IK_TOL slack), or None."""
    k = math.ceil((lo - IK_TOL - angle) / (2.0 * math.pi))
    a = angle + 2.0 * math.pi * k
    if a > hi + IK_TOL:
        return None
    return min(max(a, lo), hi)


def _two_link(l1, l2, x, y):
    """Joint pairs (t1, t2) placing a 2R chain tip at (x, y); [] if out of reach."""
    r2 = x * x + y * y
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if c2 > 1.0 or c2 < -1.0:
        r = math.sqrt(r2)
        if abs(r - (l1 + l2)) <= IK_TOL or abs(r - abs(l1 - l2)) <= IK_TOL:
            c2 = max(-1.0, min(1.0, c2))
        else:
            return []
    out = []
    for sign in (1.0, -1.0):
        t2 = sign * math.acos(c2)
        k1 = l1 + l2 * math.cos(t2)
        k2 = l2 * math.sin(t2)
        t1 = math.atan2(y, x) - math.atan2(k2, k1)
        out.append((t1, t2))
    return out


def _dedupe(solutions, tol=1e-9):
    out = []
    for q in solutions:
        if not any(np.max(np.abs(q - p)) <= tol for p in out):
            out.append(q)
    return out


def _solve_tail(arm: ArmModel, prefix, target):
    """Analytic IK of the last min(dof, 3) joints given fixed leading joints."""
    d = arm.dof
    n_tail = min(d, 3)
    n_pre = d - n_tail
    x, y, th = arm.base_pose
    for length, qj in zip(arm.link_lengths[:n_pre], prefix):
        th += qj
        x += length * math.cos(th)
        y += length * math.sin(th)
    # target expressed in the frame at the start of the tail
    lx, ly, lth = compose(inverse((x, y, th)), target)
    lengths = arm.link_lengths[n_pre:]
    raw = []
    if n_tail == 1:
        if abs(math.hypot(lx, ly) - lengths[0]) <= IK_TOL:
            raw.append((math.atan2(ly, lx),))
    elif n_tail == 2:
        raw.extend(_two_link(lengths[0], lengths[1], lx, ly))
    else:
        wx = lx - lengths[2] * math.cos(lth)
        wy = ly - lengths[2] * math.sin(lth)
        for t1, t2 in _two_link(lengths[0], lengths[1], wx, wy):
            raw.append((t1, t2, lth - t1 - t2))
    sols = []
    for tail in raw:
        q = list(prefix) + list(tail)
        fitted = []
        for a, (lo, hi) in zip(q, arm.joint_limits):
            f = _fit_limits(a, lo, hi)
            if f is None:
                break
            fitted.append(f)
        else:
            sols.append(np.array(fitted))
    return sols


def ik_error(arm: ArmModel, q, target):
    ee = end_effector_pose(arm, q)
    pos, ang = pose_error(ee, target)
    if arm.dof < 3:
        ang = 0.0
    return pos, ang


def inverse_kinematics(arm: ArmModel, target, rng=None, max_restarts: int = IK_MAX_RESTARTS):
    """All IK solutions found for an SE(2) end-effector target.

    Chains with fewer than three joints only match the target position.
    Redundant chains (more than three joints) fix the leading joints to values
    drawn uniformly within limits and solve the trailing 3R sub-chain
    analytically, ``max_restarts`` times. Returns a list of joint arrays, empty
    if the target is unreachable.
    """
    target = tuple(float(v) for v in target)
    if len(target) != 3 or not all(math.isfinite(v) for v in target):
        return []
    d = arm.dof
    if d <= 3:
        candidates = _solve_tail(arm, (), target)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        candidates = []
        lo, hi = arm.lower[: d - 3], arm.upper[: d - 3]
        for _ in range(max_restarts):
            prefix = rng.uniform(lo, hi)
            candidates.extend(_solve_tail(arm, prefix.tolist(), target))
    good = []
    for q in candidates:
        pos, ang = ik_error(arm, q, target)
        if pos <= IK_TOL and ang <= IK_TOL:
            good.append(q)
    return _dedupe(good)


def object_pose_from_grasp(arm: ArmModel, q, grasp: Grasp):
    """Pose of an object held by ``arm`` at ``q`` with ``grasp``."""
    return compose(end_effector_pose(arm, q), grasp.offset)


def ee_target_for(object_pose, grasp: Grasp):
    """End-effector pose that holds an object at ``object_pose`` with ``grasp``."""
    return compose(object_pose, inverse(grasp.offset))


# ---------------------------------------------------------------- collisions


def pack_scene(scene: Scene):
    dofs = [a.dof for a in scene.arms]
    base = [a.base_pose for a in scene.arms]
    lengths = [l for a in scene.arms for l in a.link_lengths]
    radius = [a.thickness / 2.0 for a in scene.arms]
    polys = [np.asarray(d, dtype=float) for k, d in scene.obstacles if k == "polygon"]
    circles = [d for k, d in scene.obstacles if k == "circle"]
    pverts = np.concatenate(polys) if polys else np.zeros((0, 2))
    pstart = np.concatenate([[0], np.cumsum([len(p) for p in polys])]).astype(np.int32)
    return dict(
        dofs=np.array(dofs, dtype=np.int32),
        base=np.array(base, dtype=float),
        lengths=np.array(lengths, dtype=float),
        radius=np.array(radius, dtype=float),
        pverts=pverts,
        pstart=pstart,
        circles=np.array(circles, dtype=float).reshape(-1, 3),
        objv=np.asarray(scene.object_shape, dtype=float),
    )


class CollisionChecker:
    """Composite validity checks for a scene.

    ``held`` is ``None`` or ``(arm_index, Grasp)``; ``arms`` restricts the check
    to a subset of arms (other arms are ignored entirely).
    """

    def __init__(self, scene: Scene, step: float = COLLISION_STEP, backend: Optional[str] = None):
        self.scene = scene
        self.step = step
        self.model = get_model_class(backend)(**pack_scene(scene))
        self.backend = self.model.backend
        self.offsets = np.concatenate([[0], np.cumsum([a.dof for a in scene.arms])])
        self._masks = {}

    @property
    def n_checks(self) -> int:
        return self.model.n_checks

    def flatten(self, Q) -> np.ndarray:
        return np.concatenate([np.asarray(q, dtype=float) for q in Q])

    def split(self, flat) -> tuple:
        return tuple(flat[self.offsets[i]:self.offsets[i + 1]] for i in range(self.scene.n_arms))

    def _mask(self, arms):
        if arms is None:
            return None
        key = tuple(sorted(arms))
        m = self._masks.get(key)
        if m is None:
            m = np.zeros(self.scene.n_arms, dtype=np.uint8)
            m[list(key)] = 1
            self._masks[key] = m
        return m

    @staticmethod
    def _held(held):
        if held is None:
            return -1, None
        arm, grasp = held
        return int(arm), grasp.offset

    def config_valid(self, Q, held=None, arms=None) -> bool:
        if len(Q) != self.scene.n_arms:
            raise GeometryError("composite arity mismatch")
        holder, g = self._held(held)
        return self.model.config_valid(self.flatten(Q), holder, g, self._mask(arms))

    def edge_valid(self, Qa, Qb, held=None, arms=None, step: Optional[float] = None) -> bool:
        holder, g = self._held(held)
        return self.model.edge_valid(
            self.flatten(Qa), self.flatten(Qb), self.step if step is None else step,
            holder, g, self._mask(arms),
        )

    def flat_config_valid(self, flat, held=None, arms=None) -> bool:
        holder, g = self._held(held)
        return self.model.config_valid(flat, holder, g, self._mask(arms))

    def flat_edge_valid(self, fa, fb, held=None, arms=None, step=None) -> bool:
        holder, g = self._held(held)
        return self.model.edge_valid(
            fa, fb, self.step if step is None else step, holder, g, self._mask(arms)
        )

    def arm_config_valid(self, arm: int, q) -> bool:
        """Single-arm check against static obstacles and itself."""
        flat = self._embed(arm, q)
        return self.model.config_valid(flat, -1, None, self._mask((arm,)))

    def arm_edge_valid(self, arm: int, qa, qb) -> bool:
        return self.model.edge_valid(
            self._embed(arm, qa), self._embed(arm, qb), self.step, -1, None, self._mask((arm,))
        )

    def _embed(self, arm, q):
        flat = np.zeros(self.offsets[-1])
        flat[self.offsets[arm]:self.offsets[arm + 1]] = q
        return flat


def is_composite_config_valid(scene_or_checker, Q, held=None) -> bool:
    checker = _checker(scene_or_checker)
    return checker.config_valid(Q, held)


def is_composite_edge_valid(scene_or_checker, Qa, Qb, held=None, step=None) -> bool:
    checker = _checker(scene_or_checker)
    return checker.edge_valid(Qa, Qb, held, step=step)


def _checker(obj) -> CollisionChecker:
    return obj if isinstance(obj, CollisionChecker) else CollisionChecker(obj)


def duration(arms: Sequence[ArmModel], Qa, Qb) -> float:
    """Synchronized-joint edge duration: max over arms of max joint displacement / vmax."""
    best = 0.0
    for arm, a, b in zip(arms, Qa, Qb):
        d = float(np.max(np.abs(np.asarray(b) - np.asarray(a)))) / arm.max_joint_velocity
        if d > best:
            best = d
    return best
