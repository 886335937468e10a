import math

import numpy as np
import pytest
from scipy.stats import chisquare

from _oracles import product_graph_optimum
from _toys import simple_toy, toy_problem
from mmdrrt.clock import WorkClock
from mmdrrt.plan import PlanError
from mmdrrt.planner import MMdRRTStar, SearchTree, plan
from mmdrrt.validation import validate_plan

INIT, PICK, HOFF, PLACE, GOAL = range(5)  # node order of the single-choice toys


def _manual_chain(pl, steps):
    """Append ``(V, mode, cost)`` nodes, each the child of the previous one."""
    T = pl.tree
    last = pl.root
    for V, m, c in steps:
        last = T.add(V, m, last, c)
    return last


def test_zero_time_limit_returns_none(small_problem):
    assert MMdRRTStar(small_problem).plan(0.0) is None
    assert plan(small_problem, 0.0) is None


def test_trace_path_timing_and_marks():
    P = simple_toy()
    pl = MMdRRTStar(P)
    goal = _manual_chain(pl, [
        ((1, 0), INIT, 1.0), ((1, 0), PICK, 1.0),
        ((2, 0), PICK, 3.0), ((2, 0), HOFF, 3.0),
        ((3, 1), HOFF, 4.0), ((3, 1), PLACE, 4.0),
        ((3, 2), PLACE, 6.0), ((3, 2), GOAL, 6.0),
    ])
    for i in range(len(pl.tree)):
        assert pl.recompute_cost(i) == pl.tree.cost[i]
    p = pl.trace_path(goal)
    # three motion edges of 1, 2 and 1 s land at 0, 1, 3, 4
    assert p.times[:4] == [0.0, 1.0, 3.0, 4.0]
    assert p.cost == 6.0 and p.times[-1] == 6.0
    assert p.transition_marks == (1.0, 3.0, 4.0)
    p.check_structure()


def test_trace_path_rejects_plan_without_transitions():
    P = simple_toy()
    pl = MMdRRTStar(P)
    with pytest.raises(PlanError):
        pl.trace_path(pl.root)
    i = _manual_chain(pl, [((1, 0), INIT, 1.0)])
    with pytest.raises(PlanError):
        pl.trace_path(i)


def test_trace_path_broken_chain_is_an_internal_error():
    pl = MMdRRTStar(simple_toy())
    orphan = pl.tree.add((3, 2), GOAL, None, 6.0)
    with pytest.raises(RuntimeError):
        pl.trace_path(orphan)


def test_toy_optimum_matches_product_dijkstra():
    P = simple_toy()
    assert product_graph_optimum(P) == pytest.approx(6.0)
    pl = MMdRRTStar(P, np.random.default_rng(0))
    best = pl.plan(2.0)
    assert best is not None and best.cost == pytest.approx(6.0)
    best.check_structure()


# ------------------------------------------------------------ select


def test_select_single_node_is_root():
    pl = MMdRRTStar(simple_toy(), np.random.default_rng(0))
    assert all(pl.select() == pl.root for _ in range(20))


def test_select_full_goal_bias_picks_deepest():
    pl = MMdRRTStar(simple_toy(), np.random.default_rng(0), gamma=1.0)
    a = pl.tree.add((1, 0), INIT, pl.root, 1.0)
    b = pl.tree.add((1, 0), PICK, a, 1.0)
    c = pl.tree.add((2, 0), PICK, b, 3.0)
    assert {pl.select() for _ in range(200)} == {b, c}


def test_select_without_bias_is_uniform():
    pl = MMdRRTStar(simple_toy(), np.random.default_rng(1), gamma=0.0)
    T = pl.tree
    last = pl.root
    for V, m in [((1, 0), INIT), ((1, 0), PICK), ((2, 0), PICK), ((2, 1), PICK), ((3, 1), PICK)]:
        last = T.add(V, m, last, 0.0)
    counts = np.bincount([pl.select() for _ in range(10_000)], minlength=len(T))
    assert chisquare(counts).pvalue > 1e-3


# ------------------------------------------------------------ oracle and expand


def test_oracle_stays_when_arm_has_nothing_better():
    P = simple_toy()
    pl = MMdRRTStar(P)
    tg = pl.targets(P.v_init, INIT)
    # at Init the only successor is the pick: arm 0 heads for vertex 1, arm 1 for the handoff (vertex 0)
    assert tg == [(1,), (0,)]
    assert pl.oracle(pl.root, tg) == (1, 0)
    assert pl.oracle(pl.root, [(1,), ()]) == (1, 0)
    assert pl.oracle(pl.root, [(0,), (0,)]) is None


def test_oracle_single_arm_descends_shortest_path():
    P = toy_problem([0.0, 0.4, 0.8, 1.2, 1.6], [0.0, 0.5], goal=(4, 1),
                    picks=[4], handoffs=[(4, 0)], places=[1])
    pl = MMdRRTStar(P)
    node, seen = pl.root, []
    rm = P.roadmaps[0]
    while True:
        tg = pl.targets(pl.tree.V[node], INIT)
        prop = pl.oracle(node, tg)
        if prop is None:
            break
        assert rm.heuristic_time(prop[0], 4) < rm.heuristic_time(pl.tree.V[node][0], 4)
        node = pl.tree.add(prop, INIT, node, 0.0)
        seen.append(prop[0])
    assert seen == [1, 2, 3, 4]


def _crossing_toy():
    # bases 1.6 m apart, 1 m links: both pointing inward overlap, each alone is fine
    return toy_problem([math.pi / 2, 0.0], [-math.pi / 2, 0.0], goal=(0, 0),
                       bases=((-0.8, 0.0, 0.0), (0.8, 0.0, math.pi)), links=(1.0,),
                       picks=[1], handoffs=[(1, 1)], places=[1])


def test_oracle_conflict_is_rejected_by_add():
    P = _crossing_toy()
    pl = MMdRRTStar(P)
    tg = pl.targets(P.v_init, INIT)
    prop = pl.oracle(pl.root, tg)
    assert prop == (1, 1)
    assert not P.checker.config_valid(P.config(prop))
    assert P.checker.config_valid(P.config((1, 0))) and P.checker.config_valid(P.config((0, 1)))
    assert pl.add_and_rewire(prop, INIT) is None
    assert len(pl.tree) == 1


def test_expand_advances_mode_at_pick():
    pl = MMdRRTStar(simple_toy())
    out = pl.expand(pl.root)
    T = pl.tree
    assert T.mode[out] == PICK and T.V[out] == (1, 0)
    parent = T.parent[out]
    assert T.mode[parent] == INIT and T.V[parent] == (1, 0) and T.cost[out] == T.cost[parent] == 1.0


def test_expand_greedy_chain_continues_while_heuristic_improves():
    P = toy_problem([0.0, 0.4, 0.8], [0.0, 0.5], goal=(2, 1), picks=[2], handoffs=[(2, 0)], places=[1])
    pl = MMdRRTStar(P)
    first = pl.expand(pl.root)
    assert pl.tree.V[first] == (1, 0) and pl.tree.mode[first] == INIT
    second = pl.expand(first)
    assert pl.tree.V[second] == (2, 0) and pl.tree.mode[second] == PICK


def test_expand_duplicate_proposal_does_not_grow_tree():
    pl = MMdRRTStar(simple_toy())
    pl.tree.add((1, 0), INIT, pl.root, 1.0)
    n = len(pl.tree)
    assert pl.expand(pl.root) is None
    assert len(pl.tree) == n


# ------------------------------------------------------------ add and rewire


def test_first_node_parent_is_root():
    pl = MMdRRTStar(simple_toy())
    i = pl.add_and_rewire((1, 1), INIT)
    assert pl.tree.parent[i] == pl.root and pl.tree.cost[i] == 1.0


def test_rewire_through_cheaper_node():
    # arm 0 roadmap: 0 - 1.25 (long way), 1.25 - 0.5, and the short way 0 - 0.25 - 0.5
    P = toy_problem([0.0, 0.25, 0.5, 1.25], [0.0, 0.5], goal=(2, 1),
                    edges0=[(0, 3), (3, 2), (0, 1), (1, 2)],
                    picks=[2], handoffs=[(2, 0)], places=[1])
    pl = MMdRRTStar(P)
    T = pl.tree
    far = pl.add_and_rewire((3, 0), INIT)
    tgt = pl.add_and_rewire((2, 0), INIT)
    assert T.parent[tgt] == far and T.cost[tgt] == pytest.approx(1.25 + 0.75)
    mid = pl.add_and_rewire((1, 0), INIT)
    assert T.parent[tgt] == mid and T.cost[tgt] == pytest.approx(0.5)
    for i in range(len(T)):
        assert T.cost[i] == pytest.approx(pl.recompute_cost(i), abs=0)


def test_bound_rejects_hopeless_candidate():
    pl = MMdRRTStar(simple_toy())
    pl.best_cost = 0.5
    assert pl.add_and_rewire((1, 0), INIT) is None
    pl2 = MMdRRTStar(simple_toy(), bound=False)
    pl2.best_cost = 0.5
    assert pl2.add_and_rewire((1, 0), INIT) is not None


def test_lower_bound_is_admissible_on_toy():
    P = simple_toy()
    pl = MMdRRTStar(P)
    assert pl.lower_bound(P.v_init, INIT) <= 6.0
    assert pl.lower_bound((3, 2), GOAL) == 0.0


# ------------------------------------------------------------ connect, repair, invariants


def test_connect_to_target_empty_and_cheapest():
    P = simple_toy()
    pl = MMdRRTStar(P)
    assert pl.connect_to_target() is None
    pl.plan(2.0)
    goals = [i for i in range(len(pl.tree)) if pl.tree.alive[i] and pl.tree.mode[i] == GOAL]
    assert len(goals) >= 1
    assert pl.connect_to_target().cost == min(pl.tree.cost[i] for i in goals)


def test_uncertified_motion_is_repaired():
    """A speck between coarse samples: the motion passes at the planning step only."""
    a = 0.025
    speck = ("circle", (-5.0 + 0.2 * math.cos(a), 0.2 * math.sin(a), 0.002))
    P = toy_problem([0.0, 0.1], [0.0, 0.5], goal=(1, 1), picks=[1], handoffs=[(1, 0)], places=[1],
                    obstacles=[speck], thickness=0.002)
    ck = P.checker
    qa, qb = P.config((0, 0)), P.config((1, 0))
    assert ck.edge_valid(qa, qb) and not ck.edge_valid(qa, qb, step=ck.step / 2)
    pl = MMdRRTStar(P, np.random.default_rng(0))
    assert pl.plan(1.0) is None
    assert pl.repairs >= 1
    assert pl.tree.n_alive == int(pl.tree.alive[: len(pl.tree)].sum())
    assert pl._edge_ok((0, 0), (1, 0), INIT) is False


def _check_tree(pl):
    T = pl.tree
    keys = set()
    for i in range(len(T)):
        if not T.alive[i]:
            continue
        key = (T.V[i], T.mode[i])
        assert key not in keys
        keys.add(key)
        assert T.index[key] == i
        assert T.cost[i] == pl.recompute_cost(i)
        p = T.parent[i]
        if p is None:
            assert i == pl.root
            continue
        assert T.alive[p]
        if T.mode[p] == T.mode[i]:
            assert pl._edge_ok(T.V[p], T.V[i], T.mode[i])
        else:
            assert T.V[p] == T.V[i] and T.mode[i] in pl.M.succ[T.mode[p]]
    assert len(T.index) == T.n_alive


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_run_invariants_on_tabletop(tabletop_problem, seed):
    pl = MMdRRTStar(tabletop_problem, np.random.default_rng(seed))
    best = pl.plan(3.0, clock=WorkClock(tabletop_problem.checker))
    _check_tree(pl)
    costs = [c for _, c in pl.improvements]
    assert all(b < a for a, b in zip(costs, costs[1:]))
    if best is not None:
        assert best.cost == costs[-1]
        assert validate_plan(tabletop_problem.scene, best).ok
    ts = [p[0] for p in pl.progress]
    assert ts == sorted(ts)


def test_search_tree_remove_subtree():
    T = SearchTree(1, lambda m: m)
    r = T.add((0,), 0, None, 0.0)
    a = T.add((1,), 0, r, 1.0)
    b = T.add((2,), 0, a, 2.0)
    c = T.add((3,), 0, r, 1.0)
    removed = T.remove_subtree(a)
    assert sorted(removed) == [a, b]
    assert T.n_alive == 2 and T.children[r] == [c]
    assert T.find((1,), 0) is None and T.find((3,), 0) == c


def test_determinism(tabletop_problem):
    runs = []
    for _ in range(2):
        pl = MMdRRTStar(tabletop_problem, np.random.default_rng(7))
        pl.plan(1.5)
        runs.append((pl.improvements, len(pl.tree), pl.iterations))
    assert runs[0] == runs[1]
