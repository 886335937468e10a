import numpy as np
import pytest

from _oracles import brute_knn
from mmdrrt.baselines import CompositeRoadmap, HOrdDFS, TampSequential, hord_dfs, tamp_sequential
from mmdrrt.planner import MMdRRTStar
from mmdrrt.problem import build_problem
from mmdrrt.validation import validate_plan

SIZE = 400


@pytest.fixture(scope="module")
def dead_end_problem(dead_end):
    return build_problem(dead_end, 5, 0, roadmap_size=60)


def test_composite_roadmap_matches_brute_force_knn(small_problem):
    cr = CompositeRoadmap(small_problem, 120, seed=3)
    assert len(cr) == 120
    for q in cr.X:
        assert small_problem.checker.flat_config_valid(q)
    adj, D = brute_knn(cr.X, cr.k, cr.scale)
    for u in range(len(cr)):
        assert set(cr.adj[u]) == adj[u]
        for v, d in cr.adj[u].items():
            assert d == pytest.approx(D[u, v], abs=1e-12)


def test_composite_roadmap_is_seeded(small_problem):
    a = CompositeRoadmap(small_problem, 50, seed=1)
    b = CompositeRoadmap(small_problem, 50, seed=1)
    assert np.array_equal(a.X, b.X) and a.adj == b.adj


@pytest.mark.parametrize("motion", ["prm", "rrt"])
def test_zero_budget_fails(small_problem, motion):
    rng = np.random.default_rng(0)
    assert TampSequential(small_problem, motion, rng, SIZE).plan(0.0) is None
    assert HOrdDFS(small_problem, motion, rng, SIZE, per_query_budget=0.0).plan(5.0) is None


def test_unknown_motion_planner(small_problem):
    with pytest.raises(ValueError):
        TampSequential(small_problem, "bfs")


def _check_home_contract(problem, plan):
    """At each transition, constrained arms sit at their slot, the rest at home."""
    M = problem.M
    for e in plan.events:
        node = M.nodes[e["mode"]]
        Q = plan.configs[e["index"]]
        for i, slot in enumerate(node.slots):
            want = problem.scene.q_init[i] if slot is None else slot.q
            np.testing.assert_allclose(Q[i], want, atol=1e-12)


@pytest.mark.parametrize("cls", [TampSequential, HOrdDFS])
@pytest.mark.parametrize("motion", ["prm", "rrt"])
def test_baseline_plans_are_valid_and_use_home(tabletop, tabletop_problem, cls, motion):
    pl = cls(tabletop_problem, motion, np.random.default_rng(4), SIZE)
    plan = pl.plan(20.0, stop_on_first=True)
    assert plan is not None
    plan.check_structure()
    rep = validate_plan(tabletop, plan)
    assert rep.ok, rep.errors
    _check_home_contract(tabletop_problem, plan)
    assert pl.improvements and pl.improvements[0][1] == plan.cost
    assert pl.modes_expanded() >= 4


def test_dead_end_defeats_sequential_prm_only(dead_end, dead_end_problem):
    P = dead_end_problem
    tamp = TampSequential(P, "prm", np.random.default_rng(0), SIZE)
    assert tamp.plan(10.0, stop_on_first=True) is None
    # it committed to a pick whose face cannot be placed
    assert tamp.modes_expanded() < len(P.M.nodes)
    hord = HOrdDFS(P, "prm", np.random.default_rng(0), SIZE, per_query_budget=3.0)
    plan = hord.plan(10.0, stop_on_first=True)
    assert plan is not None and validate_plan(dead_end, plan).ok
    mm = MMdRRTStar(P, np.random.default_rng(0)).plan(10.0, stop_on_first=True)
    assert mm is not None and validate_plan(dead_end, mm).ok
    assert hord.modes_expanded() >= tamp.modes_expanded()


def test_hord_orders_by_pairwise_makespan(tabletop_problem):
    h = HOrdDFS(tabletop_problem, "prm", np.random.default_rng(0), 50)
    M = tabletop_problem.M
    order = h.ordered(M.init)
    assert sorted(order) == sorted(M.succ[M.init])
    spans = [M.makespan(M.init, s) for s in order]
    assert spans == sorted(spans)


def test_target_sends_free_arms_home(tabletop_problem):
    h = TampSequential(tabletop_problem, "prm", np.random.default_rng(0), 50)
    M = tabletop_problem.M
    s = M.succ[M.init][0]
    node = M.nodes[s]
    q = h.target(s)
    offs = tabletop_problem.checker.offsets
    for i, slot in enumerate(node.slots):
        part = q[offs[i]:offs[i + 1]]
        want = tabletop_problem.scene.q_init[i] if slot is None else slot.q
        np.testing.assert_array_equal(part, want)


@pytest.mark.parametrize("motion", ["prm", "rrt"])
def test_baselines_are_deterministic(tabletop_problem, motion):
    a = tamp_sequential(tabletop_problem, motion, 10.0, rng=np.random.default_rng(7),
                        composite_size=SIZE, stop_on_first=True)
    b = tamp_sequential(tabletop_problem, motion, 10.0, rng=np.random.default_rng(7),
                        composite_size=SIZE, stop_on_first=True)
    assert a is not None and a.dumps() == b.dumps()
    c = hord_dfs(tabletop_problem, motion, 10.0, 3.0, rng=np.random.default_rng(7),
                 composite_size=SIZE, stop_on_first=True)
    d = hord_dfs(tabletop_problem, motion, 10.0, 3.0, rng=np.random.default_rng(7),
                 composite_size=SIZE, stop_on_first=True)
    assert c is not None and c.dumps() == d.dumps()


def test_hord_anytime_costs_decrease(tabletop_problem):
    h = HOrdDFS(tabletop_problem, "prm", np.random.default_rng(2), SIZE, per_query_budget=2.0)
    h.plan(4.0)
    costs = [c for _, c in h.improvements]
    times = [t for t, _ in h.improvements]
    assert costs and all(b < a for a, b in zip(costs, costs[1:]))
    assert times == sorted(times)
