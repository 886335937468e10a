"""Comparison planners: sequential TAMP and heuristically ordered DFS over the mode graph.

Both strategies call a motion planner in the full composite space, either a
lazy composite PRM* over a fixed roadmap or a composite RRT* grown per query.
Arms a mode leaves unconstrained are sent to their home (initial) configuration.
"""

from __future__ import annotations

import heapq
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .clock import WorkClock, make_clock
from .plan import Plan, PlanBuilder
from .problem import Problem
from .roadmap import prm_star_k

COMPOSITE_ROADMAP_SIZE = 5000
PER_QUERY_BUDGET_S = 10.0
RRT_GOAL_BIAS = 0.1
PROGRESS_PERIOD_S = 0.1
# Python-side work per unit, relative to one planner tick of the work clock
DIJKSTRA_POP_TICKS = 0.35
RRT_ITER_TICKS = 1.0
# nearest-neighbor scans grow linearly with the tree
RRT_NODE_TICKS = 4e-4


def _certified(checker, qa, qb, held) -> bool:
    """Motion check at the planning resolution and again at half of it."""
    return bool(checker.flat_edge_valid(qa, qb, held=held)) and \
        bool(checker.flat_edge_valid(qa, qb, held=held, step=checker.step / 2))


class _Budget:
    """Deadline plus progress reporting shared by the motion planners."""

    def __init__(self, owner, deadline: float):
        self.owner = owner
        self.deadline = deadline

    def expired(self) -> bool:
        t = self.owner.clock.elapsed()
        self.owner._maybe_emit(t)
        return t >= self.deadline


class CompositeRoadmap:
    """k-nearest PRM* roadmap over the full composite configuration space.

    Vertices are collision-free without a held object; edges are validated
    lazily per held-object state and cached.
    """

    def __init__(self, problem: Problem, n_vertices: int = COMPOSITE_ROADMAP_SIZE, seed=0):
        self.P = problem
        self.checker = problem.checker
        scene = problem.scene
        self.lo = np.concatenate([a.lower for a in scene.arms])
        self.hi = np.concatenate([a.upper for a in scene.arms])
        self.scale = np.concatenate([np.full(a.dof, 1.0 / a.max_joint_velocity) for a in scene.arms])
        self.dim = len(self.lo)
        rng = np.random.default_rng(seed)
        X = []
        attempts = 0
        while len(X) < n_vertices and attempts < 100 * n_vertices:
            attempts += 1
            q = rng.uniform(self.lo, self.hi)
            if self.checker.flat_config_valid(q):
                X.append(q)
        self.X = np.array(X).reshape(-1, self.dim)
        n = len(self.X)
        self.k = min(prm_star_k(max(n, 2), self.dim), max(n - 1, 1))
        self.tree = cKDTree(self.X * self.scale)
        self.adj = [dict() for _ in range(n)]
        if n > 1:
            dist, idx = self.tree.query(self.X * self.scale, k=self.k + 1, p=np.inf)
            for u in range(n):
                for d, v in zip(np.atleast_1d(dist[u]).tolist(), np.atleast_1d(idx[u]).tolist()):
                    if v != u and v < n:
                        self.adj[u][v] = d
                        self.adj[v][u] = d
        self._nbrs = [sorted(a.items()) for a in self.adj]
        self._valid: dict = {}

    def __len__(self):
        return len(self.X)

    def neighbors(self, u: int) -> list:
        return sorted(self.adj[u])

    def _edge_ok(self, u, v, qa, qb, held, hk) -> bool:
        key = (min(u, v), max(u, v), hk)
        ok = self._valid.get(key)
        if ok is None:
            ok = _certified(self.checker, qa, qb, held)
            self._valid[key] = ok
        return ok

    def query(self, start, goals, held, budget: _Budget, clock):
        """Lazy shortest path from ``start`` to the nearest reachable goal.

        Returns ``(path, goal_index)`` with ``path`` a list of flat configs,
        or None if no goal is reachable or the budget runs out.
        """
        n = len(self.X)
        hk = None if held is None else (held[0], held[1].face)
        temp = [np.asarray(start, dtype=float)] + [np.asarray(g, dtype=float) for g in goals]
        ids = list(range(n, n + len(temp)))
        extra = {i: {} for i in ids}
        # wire temporary vertices to their k nearest roadmap vertices and to each other
        k = min(self.k, n) if n else 0
        for i, q in zip(ids, temp):
            if k:
                dist, idx = self.tree.query(q * self.scale, k=k, p=np.inf)
                for d, v in zip(np.atleast_1d(dist).tolist(), np.atleast_1d(idx).tolist()):
                    extra[i][v] = d
                    extra.setdefault(v, {})[i] = d
        for a in range(len(temp)):
            for b in range(a + 1, len(temp)):
                d = float(np.max(np.abs((temp[a] - temp[b]) * self.scale)))
                if k == 0 or d <= max(extra[ids[a]].values(), default=np.inf):
                    extra[ids[a]][ids[b]] = d
                    extra[ids[b]][ids[a]] = d

        def conf(u):
            return self.X[u] if u < n else temp[u - n]

        def nbrs(u):
            more = extra.get(u)
            if not more:
                return self._nbrs[u]
            out = dict(self.adj[u]) if u < n else {}
            out.update(more)
            return sorted(out.items())

        goal_ids = set(ids[1:])
        bad = set()
        src = ids[0]
        while True:
            dist = {src: 0.0}
            prev = {}
            pq = [(0.0, src)]
            found = None
            pops = 0
            while pq:
                d, u = heapq.heappop(pq)
                if d > dist[u]:
                    continue
                pops += 1
                if pops % 64 == 0:
                    clock.tick(64 * DIJKSTRA_POP_TICKS)
                    if budget.expired():
                        return None
                if u in goal_ids:
                    found = u
                    break
                for v, w in nbrs(u):
                    if bad and (u, v) in bad:
                        continue
                    nd = d + w
                    if nd < dist.get(v, np.inf):
                        dist[v] = nd
                        prev[v] = u
                        heapq.heappush(pq, (nd, v))
            clock.tick((pops % 64) * DIJKSTRA_POP_TICKS)
            if found is None:
                return None
            path = [found]
            while path[-1] != src:
                path.append(prev[path[-1]])
            path.reverse()
            ok = True
            for a, b in zip(path, path[1:]):
                valid = self._edge_ok(a, b, conf(a), conf(b), held, hk) if a < n and b < n \
                    else _certified(self.checker, conf(a), conf(b), held)
                if not valid:
                    bad.update(((a, b), (b, a)))
                    ok = False
                    break
            if budget.expired():
                return None
            if ok:
                return [conf(u) for u in path], ids.index(found) - 1


class CompositeRRTStar:
    """Per-query RRT* in the composite space with k-nearest rewiring."""

    def __init__(self, problem: Problem, rng):
        self.P = problem
        self.checker = problem.checker
        scene = problem.scene
        self.lo = np.concatenate([a.lower for a in scene.arms])
        self.hi = np.concatenate([a.upper for a in scene.arms])
        self.scale = np.concatenate([np.full(a.dof, 1.0 / a.max_joint_velocity) for a in scene.arms])
        self.dim = len(self.lo)
        self.step = problem.checker.step * self.dim
        self.rng = rng
        self.nodes_built = 0

    @staticmethod
    def _dist(C, qs):
        # scaled L-infinity distance; C holds one row per coordinate, pre-divided by joint speeds
        d = np.abs(C[0] - qs[0])
        for j in range(1, len(qs)):
            np.maximum(d, np.abs(C[j] - qs[j]), out=d)
        return d

    def query(self, start, goals, held, budget: _Budget, clock):
        goals = [np.asarray(g, dtype=float) for g in goals]
        cap = 1024
        X = np.zeros((cap, self.dim))
        X[0] = start
        Xs = (X * self.scale).T.copy()
        parent = [-1]
        children = [[]]
        cost = [0.0]
        n = 1
        ck = self.checker
        while True:
            clock.tick(RRT_ITER_TICKS + n * RRT_NODE_TICKS)
            if budget.expired():
                self.nodes_built += n
                return None
            if goals and self.rng.random() < RRT_GOAL_BIAS:
                x = goals[int(self.rng.integers(len(goals)))]
            else:
                x = self.rng.uniform(self.lo, self.hi)
            d = self._dist(Xs[:, :n], x * self.scale)
            near = int(np.argmin(d))
            if d[near] == 0.0 or not np.isfinite(d[near]):
                continue
            frac = min(1.0, self.step / d[near])
            q = X[near] + frac * (x - X[near])
            if not ck.flat_config_valid(q, held=held):
                continue
            dq = self._dist(Xs[:, :n], q * self.scale)
            k = min(prm_star_k(n + 1, self.dim), n)
            if k < n:
                cand = np.argpartition(dq, k - 1)[:k]
                cand = cand[np.lexsort((cand, dq[cand]))]
            else:
                cand = np.argsort(dq, kind="stable")
            cand = cand[np.isfinite(dq[cand])]
            order = sorted(cand.tolist(), key=lambda j: (cost[j] + dq[j], j))
            best = -1
            for j in order:
                if ck.flat_edge_valid(X[j], q, held=held):
                    best = j
                    break
            if best < 0:
                continue
            if n >= cap:
                X = np.vstack([X, np.zeros((cap, self.dim))])
                Xs = np.hstack([Xs, np.zeros((self.dim, cap))])
                cap *= 2
            X[n] = q
            Xs[:, n] = q * self.scale
            parent.append(best)
            children.append([])
            children[best].append(n)
            cost.append(cost[best] + float(dq[best]))
            new = n
            n += 1
            for j in cand.tolist():
                if j == best:
                    continue
                c = cost[new] + float(dq[j])
                if c < cost[j] and ck.flat_edge_valid(q, X[j], held=held):
                    children[parent[j]].remove(j)
                    children[new].append(j)
                    parent[j] = new
                    self._shift(children, cost, j, cost[j] - c)
            for gi, g in enumerate(goals):
                dg = float(np.max(np.abs((g - q) * self.scale)))
                if dg <= self.step and _certified(ck, q, g, held):
                    chain = []
                    u = new
                    while u >= 0:
                        chain.append(u)
                        u = parent[u]
                    chain.reverse()
                    bad = next((v for u, v in zip(chain, chain[1:])
                                if not ck.flat_edge_valid(X[u], X[v], held=held, step=ck.step / 2)), None)
                    if bad is not None:
                        # drop the subtree below a motion that fails the finer check
                        self._drop(parent, children, X, Xs, bad)
                        break
                    path = [X[u].copy() for u in chain] + [g]
                    self.nodes_built += n
                    return path, gi

    @staticmethod
    def _drop(parent, children, X, Xs, root):
        children[parent[root]].remove(root)
        stack = [root]
        while stack:
            u = stack.pop()
            X[u] = np.inf
            Xs[:, u] = np.inf
            parent[u] = -2
            stack.extend(children[u])
            children[u] = []

    @staticmethod
    def _shift(children, cost, root, delta):
        # subtree costs drop by the same amount as the rewired root
        stack = [root]
        while stack:
            u = stack.pop()
            cost[u] -= delta
            stack.extend(children[u])


class _SequentialBase:
    """Shared machinery: targets, plan assembly, clocks, progress."""

    name = "baseline"

    def __init__(self, problem: Problem, motion: str = "prm", rng=None,
                 composite_size: int = COMPOSITE_ROADMAP_SIZE):
        if motion not in ("prm", "rrt"):
            raise ValueError("motion planner must be 'prm' or 'rrt'")
        self.P = problem
        self.M = problem.M
        self.motion = motion
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.checker = problem.checker
        self.home = problem.scene.q_init
        if motion == "prm":
            seed = int(self.rng.integers(2 ** 63))
            self.planner = CompositeRoadmap(problem, composite_size, seed)
        else:
            self.planner = CompositeRRTStar(problem, self.rng)
        self.best_cost = np.inf
        self.best_plan: Optional[Plan] = None
        self.improvements: list = []
        self.progress: list = []
        self.reached: set = {self.M.init}
        self.queries = 0
        self.clock = None
        self._next_emit = 0.0

    @property
    def iterations(self) -> int:
        return self.queries

    def modes_expanded(self) -> int:
        return len(self.reached)

    def tree_size(self) -> int:
        if self.motion == "prm":
            return len(self.planner)
        return self.planner.nodes_built

    def _maybe_emit(self, t):
        if t >= self._next_emit:
            self.progress.append((t, self.best_cost, self.tree_size(), self.modes_expanded()))
            self._next_emit = (int(t / PROGRESS_PERIOD_S) + 1) * PROGRESS_PERIOD_S

    def target(self, s: int) -> np.ndarray:
        """Composite target for mode ``s``: slot configs, home elsewhere."""
        node = self.M.nodes[s]
        Q = [slot.q if slot is not None else np.asarray(h) for slot, h in zip(node.slots, self.home)]
        return np.concatenate(Q)

    def _target_ok(self, m: int, s: int, q) -> bool:
        ck = self.checker
        return ck.flat_config_valid(q, held=self.M.nodes[m].held) and \
            ck.flat_config_valid(q, held=self.M.nodes[s].held)

    def _query(self, Q, succs, m, deadline):
        targets, keep = [], []
        for s in succs:
            q = self.target(s)
            if self._target_ok(m, s, q):
                targets.append(q)
                keep.append(s)
        if not targets:
            return None
        self.queries += 1
        res = self.planner.query(Q, targets, self.M.nodes[m].held, _Budget(self, deadline), self.clock)
        if res is None:
            return None
        path, k = res
        return path, keep[k]

    def _record(self, segments, t) -> bool:
        """Assemble a plan from (mode, path) stages; keep it if it improves."""
        arms = self.P.scene.arms
        offs = self.checker.offsets
        split = lambda f: tuple(f[offs[i]:offs[i + 1]] for i in range(len(arms)))
        b = PlanBuilder(split(segments[0][1][0]), None)
        for s, path in segments:
            for qa, qb in zip(path, path[1:]):
                dt = max(float(np.max(np.abs(qb[offs[i]:offs[i + 1]] - qa[offs[i]:offs[i + 1]])))
                         / a.max_joint_velocity for i, a in enumerate(arms))
                b.move(split(qb), dt)
            node = self.M.nodes[s]
            b.transition(node.kind, node.arms, node.held, s)
        plan = b.build()
        plan.check_structure()
        if plan.cost < self.best_cost:
            self.best_cost = plan.cost
            self.best_plan = plan
            self.improvements.append((t, plan.cost))
            self.progress.append((t, self.best_cost, self.tree_size(), self.modes_expanded()))
            return True
        return False

    def _start_clock(self, clock):
        if clock is None:
            clock = WorkClock(self.checker)
        elif isinstance(clock, str):
            clock = make_clock(clock, self.checker)
        self.clock = clock
        return clock

    def _finish(self, time_limit):
        t = min(self.clock.elapsed(), time_limit)
        self.progress.append((t, self.best_cost, self.tree_size(), self.modes_expanded()))
        return self.best_plan


class TampSequential(_SequentialBase):
    """Commit to the first adjacent mode reached, stage by stage."""

    def __init__(self, problem: Problem, motion: str = "prm", rng=None,
                 composite_size: int = COMPOSITE_ROADMAP_SIZE):
        super().__init__(problem, motion, rng, composite_size)
        self.name = f"tamp-{motion}*"

    def _pass(self, time_limit) -> Optional[list]:
        m = self.M.init
        Q = np.concatenate(self.P.scene.q_init)
        segments = []
        while m != self.M.goal:
            succ = self.M.succ[m]
            if not succ:
                return None
            res = self._query(Q, succ, m, time_limit)
            if res is None:
                return None
            path, s = res
            segments.append((s, path))
            self.reached.add(s)
            m, Q = s, path[-1]
        return segments

    def plan(self, time_limit: float, clock=None, stop_on_first: bool = False,
             stop_cost: Optional[float] = None) -> Optional[Plan]:
        clock = self._start_clock(clock)
        if time_limit <= 0:
            return None
        while clock.elapsed() < time_limit:
            segments = self._pass(time_limit)
            if segments is not None:
                self._record(segments, clock.elapsed())
                if stop_on_first or (stop_cost is not None and self.best_cost <= stop_cost):
                    break
            if self.motion == "prm":
                # a fixed roadmap gives the same answer on every pass
                break
        return self._finish(time_limit)


class HOrdDFS(_SequentialBase):
    """Depth-first search over the mode graph, successors ordered by pairwise makespan."""

    def __init__(self, problem: Problem, motion: str = "prm", rng=None,
                 composite_size: int = COMPOSITE_ROADMAP_SIZE, per_query_budget: float = PER_QUERY_BUDGET_S):
        super().__init__(problem, motion, rng, composite_size)
        self.per_query_budget = per_query_budget
        self.name = f"hord-{motion}*"

    def ordered(self, m: int) -> list:
        return sorted(self.M.succ[m], key=lambda s: (self.M.makespan(m, s), s))

    def plan(self, time_limit: float, clock=None, stop_on_first: bool = False,
             stop_cost: Optional[float] = None) -> Optional[Plan]:
        clock = self._start_clock(clock)
        if time_limit <= 0 or self.per_query_budget <= 0:
            return self._finish(max(time_limit, 0.0)) if time_limit > 0 else None
        arms = self.P.scene.arms
        offs = self.checker.offsets
        Q0 = np.concatenate(self.P.scene.q_init)
        # explicit DFS stack of (mode, config, cost so far, segments, successor iterator)
        stack = [(self.M.init, Q0, 0.0, [], iter(self.ordered(self.M.init)))]
        while stack:
            if clock.elapsed() >= time_limit:
                break
            m, Q, c, segs, it = stack[-1]
            s = next(it, None)
            if s is None:
                stack.pop()
                continue
            deadline = min(time_limit, clock.elapsed() + self.per_query_budget)
            res = self._query(Q, [s], m, deadline)
            if res is None:
                continue
            path, s = res
            self.reached.add(s)
            dc = sum(max(float(np.max(np.abs(b[offs[i]:offs[i + 1]] - a[offs[i]:offs[i + 1]])))
                         / arm.max_joint_velocity for i, arm in enumerate(arms))
                     for a, b in zip(path, path[1:]))
            nc = c + dc
            if nc >= self.best_cost:
                continue
            nsegs = segs + [(s, path)]
            if s == self.M.goal:
                self._record(nsegs, clock.elapsed())
                if stop_on_first or (stop_cost is not None and self.best_cost <= stop_cost):
                    break
                continue
            stack.append((s, path[-1], nc, nsegs, iter(self.ordered(s))))
        return self._finish(time_limit)


def tamp_sequential(problem: Problem, motion: str, time_limit: float, rng=None, clock=None,
                    **kwargs) -> Optional[Plan]:
    size = kwargs.pop("composite_size", COMPOSITE_ROADMAP_SIZE)
    return TampSequential(problem, motion, rng, size).plan(time_limit, clock, **kwargs)


def hord_dfs(problem: Problem, motion: str, time_limit: float, per_query_budget: float = PER_QUERY_BUDGET_S,
             rng=None, clock=None, **kwargs) -> Optional[Plan]:
    size = kwargs.pop("composite_size", COMPOSITE_ROADMAP_SIZE)
    return HOrdDFS(problem, motion, rng, size, per_query_budget).plan(time_limit, clock, **kwargs)
