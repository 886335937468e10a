"""Scene JSON ingestion and load-time validation."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from ._pykernels import polygon_hits_circle, polygons_overlap
from .geometry import (
    FACES,
    ArmModel,
    CollisionChecker,
    GeometryError,
    Grasp,
    Scene,
    ccw,
    compose,
    ee_target_for,
    inverse_kinematics,
)

SCENE_SCHEMA = "mmdrrt.scene/1"


class SceneError(ValueError):
    """Malformed scene file or violated scene assumption; ``where`` names the field."""

    def __init__(self, message: str, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


def _num(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise SceneError("expected a finite number", where)
    return float(x)


def _vec(x, n, where):
    if not isinstance(x, list) or (n is not None and len(x) != n):
        raise SceneError(f"expected a list of {n} numbers" if n else "expected a list", where)
    return [_num(v, f"{where}[{k}]") for k, v in enumerate(x)]


def _points(x, where):
    if not isinstance(x, list) or len(x) < 3:
        raise SceneError("expected at least 3 [x, y] points", where)
    pts = [_vec(p, 2, f"{where}[{k}]") for k, p in enumerate(x)]
    try:
        return ccw(pts)
    except GeometryError as e:
        raise SceneError(str(e), where) from None


def _field(d, key, where):
    if not isinstance(d, dict):
        raise SceneError("expected an object", where)
    if key not in d:
        raise SceneError("missing field", f"{where}.{key}" if where else key)
    return d[key]


def parse_scene(d: dict, name: str = "scene") -> Scene:
    """Build a :class:`Scene` from its JSON dictionary form (no reachability checks)."""
    if not isinstance(d, dict):
        raise SceneError("top level must be an object")
    schema = d.get("schema", SCENE_SCHEMA)
    if schema != SCENE_SCHEMA:
        raise SceneError(f"unsupported schema {schema!r}", "schema")
    arms_raw = _field(d, "arms", "")
    if not isinstance(arms_raw, list) or not arms_raw:
        raise SceneError("expected a non-empty list", "arms")
    arms, q_init, q_goal = [], [], []
    for i, a in enumerate(arms_raw):
        w = f"arms[{i}]"
        links = _vec(_field(a, "links", w), None, f"{w}.links")
        limits_raw = a.get("limits", [[-math.pi, math.pi]] * len(links))
        if not isinstance(limits_raw, list):
            raise SceneError("expected a list", f"{w}.limits")
        limits = [_vec(l, 2, f"{w}.limits[{k}]") for k, l in enumerate(limits_raw)]
        try:
            arm = ArmModel(
                base_pose=_vec(_field(a, "base", w), 3, f"{w}.base"),
                link_lengths=links,
                joint_limits=limits,
                max_joint_velocity=_num(a.get("vmax", 1.0), f"{w}.vmax"),
                thickness=_num(a.get("thickness", 0.05), f"{w}.thickness"),
            )
        except GeometryError as e:
            raise SceneError(str(e), w) from None
        arms.append(arm)
        for key, store in (("q_init", q_init), ("q_goal", q_goal)):
            q = np.array(_vec(_field(a, key, w), arm.dof, f"{w}.{key}"))
            if not arm.within_limits(q):
                raise SceneError("outside joint limits", f"{w}.{key}")
            store.append(q)
    obstacles = []
    for k, o in enumerate(d.get("obstacles", [])):
        w = f"obstacles[{k}]"
        kind = _field(o, "type", w)
        if kind == "polygon":
            obstacles.append(("polygon", _points(_field(o, "points", w), f"{w}.points")))
        elif kind == "circle":
            cx, cy = _vec(_field(o, "center", w), 2, f"{w}.center")
            r = _num(_field(o, "radius", w), f"{w}.radius")
            if r <= 0:
                raise SceneError("radius must be positive", f"{w}.radius")
            obstacles.append(("circle", (cx, cy, r)))
        else:
            raise SceneError(f"unknown obstacle type {kind!r}", f"{w}.type")
    obj = _field(d, "object", "")
    shape = _points(_field(obj, "shape", "object"), "object.shape")
    p_init = tuple(_vec(_field(obj, "init", "object"), 3, "object.init"))
    p_goal = tuple(_vec(_field(obj, "goal", "object"), 3, "object.goal"))
    grasps = []
    for k, g in enumerate(_field(obj, "grasps", "object")):
        w = f"object.grasps[{k}]"
        face = _field(g, "face", w)
        if face not in FACES:
            raise SceneError(f"face must be one of {FACES}", f"{w}.face")
        grasps.append(Grasp(tuple(_vec(_field(g, "offset", w), 3, f"{w}.offset")), face))
    if sorted(g.face for g in grasps) != sorted(FACES):
        raise SceneError("exactly one grasp per face ('top', 'bottom') is required", "object.grasps")
    surfaces = []
    for k, s in enumerate(d.get("surfaces", [])):
        if not isinstance(s, list) or len(s) != 2:
            raise SceneError("expected a segment [[x, y], [x, y]]", f"surfaces[{k}]")
        surfaces.append([tuple(_vec(p, 2, f"surfaces[{k}][{j}]")) for j, p in enumerate(s)])
    chain = d.get("chain")
    if chain is not None:
        if (not isinstance(chain, list) or len(chain) < 2
                or any(not isinstance(c, int) or not 0 <= c < len(arms) for c in chain)
                or len(set(chain)) != len(chain)):
            raise SceneError("expected a list of distinct arm indices", "chain")
    return Scene(arms, obstacles, shape, p_init, p_goal, grasps, q_init, q_goal,
                 surfaces, d.get("name", name), chain)


def object_world_vertices(scene: Scene, pose) -> list:
    return [compose(pose, (x, y, 0.0))[:2] for x, y in np.asarray(scene.object_shape).tolist()]


def object_pose_free(scene: Scene, pose) -> bool:
    """The object at ``pose`` overlaps no static obstacle."""
    verts = object_world_vertices(scene, pose)
    for kind, data in scene.obstacles:
        if kind == "polygon":
            if polygons_overlap(verts, [tuple(p) for p in np.asarray(data).tolist()]):
                return False
        elif polygon_hits_circle(verts, *data):
            return False
    return True


def reaching_arms(scene: Scene, pose, checker=None) -> list:
    """Arms with a collision-free IK solution holding the object at ``pose``."""
    checker = checker or CollisionChecker(scene)
    out = []
    for i, arm in enumerate(scene.arms):
        rng = np.random.default_rng(0)
        found = False
        for g in scene.grasps:
            for q in inverse_kinematics(arm, ee_target_for(pose, g), rng):
                Q = [np.zeros(a.dof) for a in scene.arms]
                Q[i] = q
                if checker.config_valid(Q, held=(i, g), arms=(i,)):
                    found = True
                    break
            if found:
                break
        if found:
            out.append(i)
    return out


def validate_scene(scene: Scene, checker=None) -> tuple:
    """Check load-time assumptions; returns ``(picker, placer)``."""
    checker = checker or CollisionChecker(scene)
    for key, pose in (("object.init", scene.p_init), ("object.goal", scene.p_goal)):
        if not object_pose_free(scene, pose):
            raise SceneError("object pose collides with an obstacle", key)
    for key, Q in (("q_init", scene.q_init), ("q_goal", scene.q_goal)):
        if not checker.config_valid(Q):
            raise SceneError("composite configuration is in collision", f"arms[*].{key}")
    r_init = reaching_arms(scene, scene.p_init, checker)
    r_goal = reaching_arms(scene, scene.p_goal, checker)
    if len(r_init) != 1:
        raise SceneError(f"exactly one arm must reach the initial object pose, found {r_init}",
                         "object.init")
    if len(r_goal) != 1:
        raise SceneError(f"exactly one arm must reach the goal object pose, found {r_goal}",
                         "object.goal")
    picker, placer = r_init[0], r_goal[0]
    if picker == placer:
        raise SceneError("the same arm reaches both object poses; a handoff is never needed",
                         "object")
    if scene.chain is not None:
        if scene.chain[0] != picker or scene.chain[-1] != placer:
            raise SceneError("chain must start at the picking arm and end at the placing arm", "chain")
    elif scene.n_arms > 2 and (picker != 0 or placer != scene.n_arms - 1):
        raise SceneError("with more than two arms the default chain 0..n-1 needs arm 0 to pick "
                         "and the last arm to place; give an explicit 'chain'", "object")
    return picker, placer


def load_scene(path, validate: bool = True) -> Scene:
    """Parse and validate a scene JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise SceneError(f"cannot read scene file: {e}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneError(f"JSON parse error: {e.msg}", f"{path.name}:{e.lineno}:{e.colno}") from None
    scene = parse_scene(d, name=path.stem)
    if validate:
        validate_scene(scene)
    return scene


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture scene (``name`` with or without ``.json``)."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("mmdrrt") / "fixtures" / name))


def load_fixture(name: str, validate: bool = True) -> Scene:
    return load_scene(fixture_path(name), validate)
