import copy
import json

import numpy as np
import pytest

from mmdrrt.geometry import Grasp
from mmdrrt.plan import Plan, PlanBuilder, PlanError, load_plan
from mmdrrt.planner import MMdRRTStar
from mmdrrt.validation import validate_plan


@pytest.fixture(scope="module")
def good_plan(tabletop_problem):
    plan = MMdRRTStar(tabletop_problem, np.random.default_rng(0)).plan(5.0, stop_on_first=True)
    assert plan is not None
    return plan


def _clone(plan):
    return Plan.from_dict(copy.deepcopy(plan.to_dict()))


def _event(plan, kind):
    return next(e for e in plan.events if e["kind"] == kind)


def test_good_plan_validates(tabletop, good_plan):
    rep = validate_plan(tabletop, good_plan)
    assert rep.ok and bool(rep), rep.errors


def test_round_trip(tmp_path, good_plan):
    p = tmp_path / "plan.json"
    p.write_text(good_plan.dumps())
    back = load_plan(p)
    assert back.dumps() == good_plan.dumps()
    assert back.marks() == good_plan.marks()
    assert json.loads(good_plan.dumps())["schema"] == "mmdrrt.plan/1"


def test_unknown_schema_rejected(good_plan):
    d = good_plan.to_dict()
    d["schema"] = "other/9"
    with pytest.raises(PlanError):
        Plan.from_dict(d)


def test_config_and_held_queries(good_plan):
    T = good_plan.cost
    Q0 = good_plan.config_at(0.0)
    for a, b in zip(Q0, good_plan.configs[0]):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(good_plan.config_at(T + 5.0), good_plan.configs[-1]):
        np.testing.assert_array_equal(a, b)
    assert good_plan.held_at(0.0) is None
    m = good_plan.marks()
    assert good_plan.held_at(m["pick"]) is not None
    assert good_plan.held_at(m["place"]) is None


def test_wrong_start(tabletop, good_plan):
    bad = _clone(good_plan)
    bad.configs[0] = tuple(q + 0.01 for q in bad.configs[0])
    assert any("initial configuration" in e for e in validate_plan(tabletop, bad).errors)


def test_wrong_end(tabletop, good_plan):
    bad = _clone(good_plan)
    bad.configs[-1] = tuple(q + 0.01 for q in bad.configs[-1])
    assert any("goal configuration" in e for e in validate_plan(tabletop, bad).errors)


def test_wrong_ordering(tabletop, good_plan):
    bad = _clone(good_plan)
    for e in bad.events:
        if e["kind"] == "pick":
            e["kind"] = "place"
        elif e["kind"] == "place":
            e["kind"] = "pick"
    assert any("not pick, handoff+, place" in e for e in validate_plan(tabletop, bad).errors)
    with pytest.raises(PlanError):
        bad.check_structure()


def test_grasp_mismatch_at_handoff(tabletop, good_plan):
    bad = _clone(good_plan)
    k = _event(bad, "handoff")["index"]
    arm, g = bad.held[k]
    # receiver keeps the holder's face instead of the opposite one
    bad.held = [(arm, Grasp(g.offset, "top" if g.face == "bottom" else "bottom")) if h is not None and
                h[0] == arm and i >= k else h for i, h in enumerate(bad.held)]
    errs = validate_plan(tabletop, bad).errors
    assert any("opposite faces" in e or "grasp" in e for e in errs)


def test_pick_away_from_object(tabletop, good_plan):
    bad = _clone(good_plan)
    k = _event(bad, "pick")["index"]
    arm = bad.held[k][0]
    Q = list(bad.configs[k])
    Q[arm] = Q[arm] + 0.05
    bad.configs[k] = tuple(Q)
    errs = validate_plan(tabletop, bad, check_collisions=False).errors
    assert any("pick" in e for e in errs)


def test_too_fast_segment(tabletop, good_plan):
    bad = _clone(good_plan)
    k = next(i for i in range(len(bad) - 1)
             if any(np.any(a != b) for a, b in zip(bad.configs[i], bad.configs[i + 1])))
    shift = (bad.times[k + 1] - bad.times[k]) / 2
    for i in range(k + 1, len(bad)):
        bad.times[i] -= shift
    for e in bad.events:
        if e["index"] > k:
            e["t"] -= shift
    bad.cost -= shift
    errs = validate_plan(tabletop, bad).errors
    assert any("shorter than velocity limit" in e for e in errs)


def test_cost_must_equal_final_time(tabletop, good_plan):
    bad = _clone(good_plan)
    bad.cost += 1.0
    assert any("differs from final time" in e for e in validate_plan(tabletop, bad).errors)


def test_plan_without_transitions_rejected(tabletop):
    """A plan that never touches the object is rejected before any geometry."""
    b = PlanBuilder(tabletop.q_init)
    Qx = tuple(np.zeros(3) for _ in range(2))
    b.move(Qx, 10.0)
    b.move(tabletop.q_goal, 10.0)
    plan = b.build()
    errs = validate_plan(tabletop, plan).errors
    assert any("not pick, handoff+, place" in e for e in errs)


def test_collision_in_motion(tabletop, good_plan):
    """Insert a detour through the other arm's base, with ample time on both sides."""
    bad = _clone(good_plan)
    k = next(i for i in range(len(bad) - 1) if bad.held[i] is None and
             not any(e["index"] == i for e in bad.events))
    # left arm straight along +x reaches the right arm's base
    detour = (np.zeros(3), bad.configs[k][1].copy())
    bad.times = [t + (200.0 if i > k else 0.0) for i, t in enumerate(bad.times)]
    bad.times.insert(k + 1, bad.times[k] + 100.0)
    bad.configs.insert(k + 1, detour)
    bad.held.insert(k + 1, None)
    for e in bad.events:
        if e["index"] > k:
            e["index"] += 1
            e["t"] += 200.0
    bad.cost += 200.0
    assert validate_plan(tabletop, bad, check_collisions=False).ok
    errs = validate_plan(tabletop, bad).errors
    assert errs and all("collision" in e for e in errs)


def test_empty_plan_rejected(tabletop):
    assert not validate_plan(tabletop, Plan([], [], [], [], 0.0)).ok


def test_wrong_arm_count(tabletop, good_plan):
    bad = _clone(good_plan)
    bad.configs = [Q[:1] for Q in bad.configs]
    assert any("expected 2" in e for e in validate_plan(tabletop, bad).errors)
