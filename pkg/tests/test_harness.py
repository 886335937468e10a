import bisect
import json
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmdrrt.harness import (
    PLANNERS,
    BenchmarkSpec,
    SpecError,
    TrialRecord,
    aggregate,
    cost_curve,
    frame_times,
    load_records,
    load_spec,
    read_csv,
    render_frame,
    render_plan,
    run_benchmark,
    run_trial,
    slug,
    trial_seeds,
)
from mmdrrt.problem import build_problem

SMALL = dict(roadmap_size=40, composite_size=300)


def _spec(**kw):
    base = dict(scene="tabletop", planners=["mm-drrt*", "tamp-prm*"], s_values=[3], trials=2,
                time_limit_s=1.0, roadmap_size=40, composite_size=300, per_query_budget_s=0.5)
    base.update(kw)
    return BenchmarkSpec(**base)


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    records, agg = run_benchmark(_spec(), out)
    return out, records, agg


def test_single_record_fields(tabletop):
    r = run_trial(tabletop, "mm-drrt*", 3, 0, 2.0, stop_on_first=True, **SMALL)
    assert r.success and r.valid and r.error is None
    assert r.planner == "mm-drrt*" and r.scene == "tabletop" and r.n == 2 and r.s == 3
    assert r.initial_solution_time_s == r.cost_over_time[0][0] <= 2.0
    assert r.best_cost == r.cost_over_time[-1][1] == r.get_plan().cost
    assert r.modes_expanded >= 5 and r.tree_size > 0
    assert TrialRecord.from_dict(json.loads(r.dumps())).dumps() == r.dumps()


def test_records_are_byte_identical(tabletop):
    for planner in ("mm-drrt*", "hord-rrt*"):
        a = run_trial(tabletop, planner, 3, 1, 1.0, per_query_budget=0.5, **SMALL)
        b = run_trial(tabletop, planner, 3, 1, 1.0, per_query_budget=0.5, **SMALL)
        assert a.dumps() == b.dumps()


def test_trial_seeds_are_distinct_per_cell():
    seen = {trial_seeds(0, s, n, t) for s in (1, 2) for n in (2, 3) for t in range(5)}
    assert len(seen) == 20
    assert trial_seeds(0, 1, 2, 3) == trial_seeds(0, 1, 2, 3)


def test_crash_becomes_failed_record(tabletop):
    r = run_trial(tabletop, "mm-drrt*", 3, 0, 1.0, planner_kwargs={"no_such_option": 1}, **SMALL)
    assert not r.success and r.error.startswith("TypeError")
    r = run_trial(tabletop, "rrt-connect", 3, 0, 1.0, **SMALL)
    assert not r.success and "unknown planner" in r.error


def test_benchmark_files_and_order(bench):
    out, records, _ = bench
    assert len(records) == 2 * 2
    names = sorted(p.name for p in out.iterdir())
    assert "trials_mm-drrtstar_s3_n2.ndjson" in names
    assert "trials_tamp-prmstar_s3_n2.ndjson" in names
    for metric in ("success", "initial_time", "modes", "cost_curve"):
        assert f"{metric}.csv" in names
    assert json.loads((out / "spec.json").read_text())["trials"] == 2
    loaded = load_records(out)
    assert [r.dumps() for r in loaded] == [r.dumps() for r in records]


def test_benchmark_is_reproducible(bench, tmp_path):
    out, records, _ = bench
    run_benchmark(_spec(), tmp_path)
    for p in sorted(out.glob("*")):
        assert (tmp_path / p.name).read_bytes() == p.read_bytes()


def test_aggregates_recomputable_from_records(bench):
    out, _, _ = bench
    recs = load_records(out)
    rows = read_csv(out / "success.csv")
    for row in rows:
        group = [r for r in recs if r.planner == row["planner"] and r.s == int(row["s"])]
        ok = [r for r in group if r.success]
        assert int(row["trials"]) == len(group)
        assert int(row["successes"]) == len(ok)
        assert float(row["success_ratio"]) == len(ok) / len(group)
    for row in read_csv(out / "initial_time.csv"):
        times = [r.initial_solution_time_s for r in recs
                 if r.planner == row["planner"] and r.success]
        if times:
            assert float(row["median_initial_time_s"]) == statistics.median(times)
            assert float(row["mean_initial_time_s"]) == pytest.approx(statistics.fmean(times), rel=1e-15)
        else:
            assert row["median_initial_time_s"] == ""
    for row in read_csv(out / "modes.csv"):
        group = [r for r in recs if r.planner == row["planner"]]
        assert float(row["mean_modes_expanded"]) == statistics.fmean(r.modes_expanded for r in group)


def test_cost_curve_csv_matches_recomputation(bench):
    out, _, _ = bench
    recs = load_records(out)
    rows = read_csv(out / "cost_curve.csv")
    assert rows
    for row in rows:
        t = float(row["t"])
        ok = [r for r in recs if r.planner == row["planner"] and r.success]
        vals = [cost_curve(r, [t])[0] for r in ok]
        vals = [v for v in vals if v is not None]
        assert int(row["successes"]) == len(vals)
        if vals:
            assert float(row["mean_cost"]) == pytest.approx(statistics.fmean(vals), rel=1e-12)


def _curve_oracle(points, t):
    ts = [p[0] for p in points]
    k = bisect.bisect_right(ts, t + 1e-12)
    return None if k == 0 else points[k - 1][1]


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(1, 100)), max_size=8),
       st.lists(st.floats(0, 12), max_size=10))
def test_cost_curve_carry_forward(raw, grid):
    pts = sorted(raw, key=lambda p: p[0])
    pts = [[t, c] for t, c in pts]
    rec = TrialRecord("mm-drrt*", "x", 1, 2, 0, bool(pts), None, None, pts, 0, 0, 12.0, "work")
    grid = sorted(grid)
    assert cost_curve(rec, grid) == [_curve_oracle(pts, t) for t in grid]


def test_aggregate_handles_all_failures():
    recs = [TrialRecord("tamp-prm*", "x", 1, 2, k, False, None, None, [], 1, 0, 0.3, "work")
            for k in range(3)]
    agg = aggregate(recs)
    assert agg["success"][0]["success_ratio"] == 0.0
    assert agg["initial_time"][0]["median_initial_time_s"] is None
    assert [r["t"] for r in agg["cost_curve"]] == [0.0, 0.1, 0.2, 0.3]
    assert all(r["mean_cost"] is None for r in agg["cost_curve"])


def test_render_three_frames(tabletop, tmp_path):
    r = run_trial(tabletop, "mm-drrt*", 3, 0, 2.0, stop_on_first=True, **SMALL)
    plan = r.get_plan()
    T = plan.cost
    assert frame_times(plan, 3) == [0.0, T / 2, T]
    paths = render_plan(tabletop, plan, tmp_path, frames=3)
    assert [p.name for p in paths] == ["frame_000.svg", "frame_001.svg", "frame_002.svg"]
    for p in paths:
        text = p.read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
        assert text.count("<polyline") == 2
    assert "t = 0.000" in paths[0].read_text()
    assert "place" in paths[2].read_text()
    assert render_frame(tabletop, plan, T / 2) == paths[1].read_text()
    with pytest.raises(ValueError):
        frame_times(plan, 0)


def test_dead_end_mm_expands_at_least_tamp(dead_end):
    P = build_problem(dead_end, 5, 0, roadmap_size=60)
    mm = run_trial(dead_end, "mm-drrt*", 5, 0, 3.0, problem=P, composite_size=300)
    tamp = run_trial(dead_end, "tamp-prm*", 5, 0, 3.0, problem=P, composite_size=300)
    assert mm.success and not tamp.success
    assert mm.modes_expanded >= tamp.modes_expanded


@pytest.mark.parametrize("bad", [
    dict(trials=0), dict(time_limit_s=0.0), dict(planners=["rrt"]), dict(planners=[]),
    dict(s_values=[0]), dict(clock="cpu"),
])
def test_spec_validation(bad):
    with pytest.raises(SpecError):
        _spec(**bad)


def test_spec_from_file(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps({"scene": "chain_{n}", "n_arms": [2, 3], "trials": 1}))
    spec = load_spec(p)
    assert spec.arm_counts() == [2, 3] and spec.scene_for(3) == "chain_3"
    assert spec.planners == list(PLANNERS)
    p.write_text(json.dumps({"scene": "tabletop", "colour": "red"}))
    with pytest.raises(SpecError):
        load_spec(p)
    p.write_text("{ nope")
    with pytest.raises(SpecError, match="line 1 column 3"):
        load_spec(p)


def test_slug():
    assert slug("hord-rrt*") == "hord-rrtstar"
