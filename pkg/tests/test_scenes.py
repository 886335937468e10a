import copy
import json
import math

import numpy as np
import pytest

from mmdrrt.scenes import (
    SceneError,
    fixture_path,
    load_fixture,
    load_scene,
    object_pose_free,
    parse_scene,
    reaching_arms,
    validate_scene,
)

FIXTURES = ["tabletop", "narrow_passage", "dead_end", "chain_2", "chain_3", "chain_4", "chain_5"]


def _raw(name):
    return json.loads(fixture_path(name).read_text())


@pytest.mark.parametrize("name", FIXTURES)
def test_fixtures_load_and_validate(name):
    scene = load_fixture(name)
    assert scene.name == name
    picker, placer = validate_scene(scene)
    assert picker != placer
    if scene.chain is not None:
        assert scene.chain[0] == picker and scene.chain[-1] == placer


def test_tabletop_contents(tabletop):
    assert tabletop.n_arms == 2 and not tabletop.obstacles
    assert sorted(g.face for g in tabletop.grasps) == ["bottom", "top"]
    assert reaching_arms(tabletop, tabletop.p_init) == [0]
    assert reaching_arms(tabletop, tabletop.p_goal) == [1]


def test_narrow_passage_has_slit_wall():
    scene = load_fixture("narrow_passage")
    assert len(scene.obstacles) == 2
    # the slit at y = 0 on the wall line is open, the wall around it is not
    assert object_pose_free(scene, (0.0, 0.0, 0.0))
    assert not object_pose_free(scene, (0.0, 0.5, 0.0))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_chain_fixtures(n):
    scene = load_fixture(f"chain_{n}")
    assert scene.n_arms == n and scene.chain == list(range(n))


def test_both_arms_reach_is_rejected():
    d = _raw("tabletop")
    d["object"]["init"] = [0.0, 0.8, 0.0]
    scene = parse_scene(d)
    with pytest.raises(SceneError) as ei:
        validate_scene(scene)
    assert ei.value.where == "object.init"


def test_same_arm_reaches_both_poses_is_rejected():
    d = _raw("tabletop")
    d["object"]["goal"] = [-1.35, 0.6, 0.0]
    with pytest.raises(SceneError) as ei:
        validate_scene(parse_scene(d))
    assert ei.value.where in ("object", "object.goal")


def test_object_in_obstacle_is_rejected():
    d = _raw("tabletop")
    d["obstacles"] = [{"type": "circle", "center": [-1.35, 0.0], "radius": 0.1}]
    with pytest.raises(SceneError) as ei:
        validate_scene(parse_scene(d))
    assert ei.value.where == "object.init"


def test_json_syntax_error_reports_line_and_column(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "arms": [\n    {"base": [0, 0, 0],,}\n  ]\n}\n')
    with pytest.raises(SceneError) as ei:
        load_scene(p)
    assert ei.value.where == "broken.json:3:24"
    assert "broken.json:3:24" in str(ei.value)


def test_missing_file(tmp_path):
    with pytest.raises(SceneError):
        load_scene(tmp_path / "nope.json")


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d["arms"][1].pop("q_goal"), "arms[1].q_goal"),
    (lambda d: d["arms"][0].pop("base"), "arms[0].base"),
    (lambda d: d.pop("object"), "object"),
    (lambda d: d["object"].pop("grasps"), "object.grasps"),
    (lambda d: d["arms"][0].update(links=[0.6, -0.5, 0.4]), "arms[0]"),
    (lambda d: d["arms"][0].update(q_init=[0.0, 0.0]), "arms[0].q_init"),
    (lambda d: d["arms"][0].update(q_init=[4.0, 0.0, 0.0]), "arms[0].q_init"),
    (lambda d: d["arms"][0].update(vmax="fast"), "arms[0].vmax"),
    (lambda d: d["object"]["grasps"].pop(), "object.grasps"),
    (lambda d: d["object"]["grasps"][0].update(face="side"), "object.grasps[0].face"),
    (lambda d: d.update(obstacles=[{"type": "blob"}]), "obstacles[0].type"),
    (lambda d: d.update(obstacles=[{"type": "circle", "center": [0, 0], "radius": -1}]),
     "obstacles[0].radius"),
    (lambda d: d.update(obstacles=[{"type": "polygon", "points": [[0, 0], [1, 1]]}]),
     "obstacles[0].points"),
    (lambda d: d.update(schema="other/2"), "schema"),
    (lambda d: d.update(chain=[0, 0]), "chain"),
])
def test_field_diagnostics(mutate, where):
    d = copy.deepcopy(_raw("tabletop"))
    mutate(d)
    with pytest.raises(SceneError) as ei:
        parse_scene(d)
    assert ei.value.where == where


def test_nonfinite_number_rejected():
    d = _raw("tabletop")
    d["arms"][0]["base"] = [math.inf, 0.0, 0.0]
    with pytest.raises(SceneError) as ei:
        parse_scene(d)
    assert ei.value.where == "arms[0].base[0]"


def test_polygon_points_become_counter_clockwise():
    d = _raw("tabletop")
    d["obstacles"] = [{"type": "polygon", "points": [[3, 3], [3, 4], [4, 4], [4, 3]]}]
    poly = np.asarray(parse_scene(d).obstacles[0][1])
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert area > 0


def test_chain_must_match_reaching_arms():
    d = _raw("chain_3")
    d["chain"] = [2, 1, 0]
    with pytest.raises(SceneError) as ei:
        validate_scene(parse_scene(d))
    assert ei.value.where == "chain"
