"""The mm-dRRT* anytime search over the tensor roadmap and the mode graph.

Tree states are pairs (tensor vertex V, mode node m). Motion edges connect
tensor-adjacent vertices within one mode; transition edges keep V and move to
a successor mode whose constraints V satisfies, at zero duration.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .clock import WorkClock, make_clock
from .plan import Plan, PlanBuilder, PlanError
from .problem import Problem
from .roadmap import random_tensor_neighbor
from .taskspec import GOAL, satisfies_vertex

GOAL_BIAS = 0.1
PROGRESS_PERIOD_S = 0.1
_EPS = 1e-12
_SELECT_TRIES = 16
_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0)


@dataclass(frozen=True)
class TreeNode:
    index: int
    V: tuple
    mode: int
    parent: Optional[int]
    cost: float
    held: Optional[tuple]


class SearchTree:
    """Array-backed tree with a (V, mode) index and per-mode vertex columns."""

    def __init__(self, n_arms: int, depth_of: Callable[[int], int]):
        self.n_arms = n_arms
        self._depth_of = depth_of
        self.V: list = []
        self.mode: list = []
        self.parent: list = []
        self.cost = np.zeros(1024)
        self.alive = np.zeros(1024, dtype=bool)
        self.n_alive = 0
        self.children: list = []
        self.index: dict = {}
        self.by_mode: dict = {}  # mode -> [count, ids, cols]
        self.by_depth: dict = {}
        self.max_depth = -1
        self.modes_seen: set = set()

    def __len__(self):
        return len(self.V)

    def __contains__(self, key) -> bool:
        return key in self.index

    def find(self, V, m) -> Optional[int]:
        return self.index.get((V, m))

    def add(self, V: tuple, m: int, parent: Optional[int], cost: float) -> int:
        i = len(self.V)
        if i >= len(self.cost):
            self.cost = np.concatenate([self.cost, np.zeros(len(self.cost))])
            self.alive = np.concatenate([self.alive, np.zeros(len(self.alive), dtype=bool)])
        self.V.append(V)
        self.mode.append(m)
        self.parent.append(parent)
        self.cost[i] = cost
        self.alive[i] = True
        self.n_alive += 1
        self.children.append([])
        self.index[(V, m)] = i
        if parent is not None:
            self.children[parent].append(i)
        entry = self.by_mode.get(m)
        if entry is None:
            entry = [0, np.zeros(64, dtype=np.int64), np.zeros((self.n_arms, 64), dtype=np.int64)]
            self.by_mode[m] = entry
        k = entry[0]
        if k >= len(entry[1]):
            entry[1] = np.concatenate([entry[1], np.zeros(k, dtype=np.int64)])
            entry[2] = np.concatenate([entry[2], np.zeros((self.n_arms, k), dtype=np.int64)], axis=1)
        entry[1][k] = i
        entry[2][:, k] = V
        entry[0] = k + 1
        d = self._depth_of(m)
        self.by_depth.setdefault(d, []).append(i)
        self.max_depth = max(self.max_depth, d)
        self.modes_seen.add(m)
        return i

    def set_parent(self, i: int, p: int, cost: float):
        old = self.parent[i]
        if old != p:
            self.children[old].remove(i)
            self.children[p].append(i)
            self.parent[i] = p
        self.cost[i] = cost

    def remove_subtree(self, i: int) -> list:
        """Detach node ``i`` and all of its descendants; their ids stay allocated but dead."""
        p = self.parent[i]
        if p is not None:
            self.children[p].remove(i)
        out, stack = [], [i]
        while stack:
            x = stack.pop()
            out.append(x)
            stack.extend(self.children[x])
            self.children[x] = []
            self.alive[x] = False
            self.parent[x] = None
            del self.index[(self.V[x], self.mode[x])]
        self.n_alive -= len(out)
        return out

    def costs(self) -> np.ndarray:
        return self.cost[: len(self.V)]

    def node(self, i: int, held=None) -> TreeNode:
        return TreeNode(i, self.V[i], self.mode[i], self.parent[i], float(self.cost[i]), held)

    def path(self, i: int) -> list:
        out = []
        seen = set()
        while i is not None:
            if i in seen:
                raise RuntimeError("cycle in search tree parent chain")
            seen.add(i)
            out.append(i)
            i = self.parent[i]
        return out[::-1]

    def mode_columns(self, m: int):
        """(ids, cols) of every node at mode ``m``; cols has one row per arm."""
        entry = self.by_mode.get(m)
        if entry is None:
            return None, None
        k = entry[0]
        return entry[1][:k], entry[2][:, :k]


class MMdRRTStar:
    """Anytime mm-dRRT* planner for one problem instance.

    ``bound`` toggles branch-and-bound pruning, ``gamma`` is the goal-bias
    fraction of selections drawn from the deepest mode level in the tree.
    """

    name = "mm-drrt*"

    def __init__(self, problem: Problem, rng=None, gamma: float = GOAL_BIAS, bound: bool = True):
        self.P = problem
        self.M = problem.M
        self.rms = problem.roadmaps
        self.checker = problem.checker
        self.model = problem.checker.model
        self.step = problem.checker.step
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.gamma = gamma
        self.bound = bound
        self.n = problem.n_arms
        self.tree = SearchTree(self.n, lambda m: self.M.depth[m])
        self.best_cost = np.inf
        self.best_node: Optional[int] = None
        self.best_plan: Optional[Plan] = None
        self.repairs = 0
        self.improvements: list = []
        self.progress: list = []
        self.iterations = 0
        self._clock = None
        self._flat_cache: dict = {}
        self._edge_cache: dict = {}
        self._fine_cache: dict = {}
        self._cfg_cache: dict = {}
        self._hrow_cache: dict = {}
        self._succ_score: dict = {}
        self._held = []
        for node in self.M.nodes:
            h = node.held
            if h is None:
                self._held.append((-1, None, None))
            else:
                self._held.append((h[0], h[1].offset, (h[0], h[1].face)))
        # dense per-arm adjacency (with self loops) and pairwise travel times
        self._adjm, self._D = [], []
        for rm in self.rms:
            n = len(rm)
            A = np.eye(n, dtype=bool)
            for u, nbrs in enumerate(rm.adj):
                A[u, list(nbrs)] = True
            X = rm.vertices
            self._adjm.append(A)
            self._D.append(np.max(np.abs(X[:, None, :] - X[None, :, :]), axis=2) / rm.vmax)
        root = self.tree.add(tuple(problem.v_init), self.M.init, None, 0.0)
        self._dirty_goal = []
        self.root = root

    # ------------------------------------------------------------ helpers

    def _flat(self, V) -> np.ndarray:
        f = self._flat_cache.get(V)
        if f is None:
            f = np.concatenate([rm._verts[v] for rm, v in zip(self.rms, V)])
            self._flat_cache[V] = f
        return f

    def _configs(self, V) -> list:
        return [rm._verts[v] for rm, v in zip(self.rms, V)]

    def _config_ok(self, V, m) -> bool:
        holder, g, hk = self._held[m]
        key = (V, hk)
        ok = self._cfg_cache.get(key)
        if ok is None:
            ok = bool(self.model.config_valid(self._flat(V), holder, g, None))
            self._cfg_cache[key] = ok
        return ok

    def _edge_ok(self, A, B, m) -> bool:
        holder, g, hk = self._held[m]
        key = (A, B, hk) if A < B else (B, A, hk)
        ok = self._edge_cache.get(key)
        if ok is None:
            ok = bool(self.model.edge_valid(self._flat(A), self._flat(B), self.step, holder, g, None))
            self._edge_cache[key] = ok
        return ok

    def _edge_key(self, A, B, m):
        hk = self._held[m][2]
        return (A, B, hk) if A < B else (B, A, hk)

    def _fine_ok(self, A, B, m) -> bool:
        """Edge check at half the planning resolution, used to certify solutions."""
        holder, g, _ = self._held[m]
        key = self._edge_key(A, B, m)
        ok = self._fine_cache.get(key)
        if ok is None:
            ok = bool(self.model.edge_valid(self._flat(A), self._flat(B), self.step / 2,
                                            holder, g, None))
            self._fine_cache[key] = ok
        return ok

    def duration(self, A, B) -> float:
        return max(float(D[a, b]) for D, a, b in zip(self._D, A, B))

    def _edge_cost(self, parent: int, child: int) -> float:
        T = self.tree
        if T.mode[parent] != T.mode[child]:
            return 0.0
        return self.duration(T.V[parent], T.V[child])

    def lower_bound(self, V, m) -> float:
        return self.M.lower_bound(self._configs(V), m)

    def tree_neighbors(self, V, m, exclude: Optional[int] = None):
        """Tree nodes at mode ``m`` tensor-adjacent to ``V``, with edge durations.

        Returns ``(ids, durations)`` as arrays in ascending id order.
        """
        ids, cols = self.tree.mode_columns(m)
        if ids is None:
            return _EMPTY_I, _EMPTY_F
        mask = self._adjm[0][V[0]][cols[0]] & self.tree.alive[ids]
        for a in range(1, self.n):
            mask &= self._adjm[a][V[a]][cols[a]]
        same = self.tree.index.get((V, m))
        if same is not None:
            exclude = same
        ids = ids[mask]
        if exclude is not None:
            keep = ids != exclude
            ids = ids[keep]
            mask[mask] = keep
        if not len(ids):
            return _EMPTY_I, _EMPTY_F
        durs = self._D[0][V[0]][cols[0][mask]]
        for a in range(1, self.n):
            np.maximum(durs, self._D[a][V[a]][cols[a][mask]], out=durs)
        return ids, durs

    # ------------------------------------------------------------ heuristics

    def _hrow(self, arm: int, tvs: tuple) -> np.ndarray:
        key = (arm, tvs)
        row = self._hrow_cache.get(key)
        if row is None:
            rm = self.rms[arm]
            if tvs:
                row = np.min(np.stack([rm.distances_from(t) for t in tvs]), axis=0)
            else:
                row = np.zeros(len(rm))
            self._hrow_cache[key] = row
        return row

    def _succ_tables(self, m):
        tab = self._succ_score.get(m)
        if tab is None:
            M = self.M
            succ = M.succ[m]
            per_arm = []
            sets = []
            for s in succ:
                sets.append([M.bfs_targets(s, i) for i in range(self.n)])
            for i in range(self.n):
                rm = self.rms[i]
                G = np.full((len(succ), len(rm)), np.inf)
                for k in range(len(succ)):
                    for c in sets[k][i]:
                        row = rm.distances_from(M.nodes[c].slots[i].vertex) + M.tail(i, c)
                        np.minimum(G[k], row, out=G[k])
                    if not sets[k][i]:
                        G[k] = 0.0
                per_arm.append(G)
            tab = (succ, sets, per_arm)
            self._succ_score[m] = tab
        return tab

    def targets(self, V, m) -> list:
        """Per-arm target vertex tuples for expansion at (V, m)."""
        M = self.M
        succ = M.succ[m]
        if not succ:
            return [(self.P.v_goal[i],) for i in range(self.n)]
        succ, sets, per_arm = self._succ_tables(m)
        if len(succ) == 1:
            chosen = [0]
        else:
            scores = per_arm[0][:, V[0]].copy()
            for i in range(1, self.n):
                np.maximum(scores, per_arm[i][:, V[i]], out=scores)
            lo = scores.min()
            chosen = np.flatnonzero(scores <= lo + _EPS).tolist()
        out = []
        for i in range(self.n):
            modes = set()
            for k in chosen:
                modes.update(sets[k][i])
            out.append(tuple(sorted({M.nodes[c].slots[i].vertex for c in modes})))
        return out

    def H(self, V, tg) -> float:
        return max(float(self._hrow(i, tg[i])[V[i]]) for i in range(self.n))

    # ------------------------------------------------------------ algorithm pieces

    def select(self) -> int:
        T = self.tree
        if self.gamma > 0.0 and self.rng.random() < self.gamma:
            pool = T.by_depth[T.max_depth]
            for _ in range(_SELECT_TRIES):
                i = pool[int(self.rng.integers(len(pool)))]
                if T.alive[i]:
                    return i
        while True:
            i = int(self.rng.integers(len(T)))
            if T.alive[i]:
                return i

    def oracle(self, near: int, tg=None) -> Optional[tuple]:
        """Greedy per-arm step toward the arm's target set; None if every arm stays."""
        T = self.tree
        V = T.V[near]
        if tg is None:
            tg = self.targets(V, T.mode[near])
        out = []
        for i in range(self.n):
            row = self._hrow(i, tg[i])
            opts = self.rms[i].neighbors(V[i])
            best_v, best_h = V[i], row[V[i]]
            if len(opts):
                vals = row[opts]
                k = int(np.argmin(vals))
                if vals[k] < best_h:
                    best_v, best_h = int(opts[k]), vals[k]
            out.append(int(best_v))
        out = tuple(out)
        return None if out == V else out

    def expand(self, v_last: Optional[int]) -> Optional[int]:
        T = self.tree
        if v_last is None:
            near = self.select()
            Vn = random_tensor_neighbor(self.rms, T.V[near], self.rng)
            tg = None
        else:
            near = v_last
            tg = self.targets(T.V[near], T.mode[near])
            Vn = self.oracle(near, tg)
        if Vn is None:
            return None
        m = T.mode[near]
        if (Vn, m) in T.index:
            return None
        new = self.add_and_rewire(Vn, m)
        if new is None:
            return None
        adv = self._advance(new)
        if adv is not None:
            return adv
        if tg is None:
            tg = self.targets(T.V[near], m)
        if self.H(Vn, tg) < self.H(T.V[T.parent[new]], tg):
            return new
        return None

    def _bound_rejects(self, cost, V, m) -> bool:
        if not self.bound or not np.isfinite(self.best_cost):
            return False
        return cost + self.lower_bound(V, m) >= self.best_cost

    def add_and_rewire(self, Vn: tuple, m: int) -> Optional[int]:
        """Insert (Vn, m) under its cheapest valid same-mode parent, then rewire."""
        T = self.tree
        ids, durs = self.tree_neighbors(Vn, m)
        if not len(ids):
            return None
        tot = T.cost[ids] + durs
        order = np.argsort(tot, kind="stable")
        bounded = self.bound and np.isfinite(self.best_cost)
        lb = self.lower_bound(Vn, m) if bounded else 0.0
        limit = self.best_cost if bounded else np.inf
        if tot[order[0]] + lb >= limit:
            return None
        if not self._config_ok(Vn, m):
            return None
        parent = None
        for k in order.tolist():
            if tot[k] + lb >= limit:
                return None
            c = int(ids[k])
            if self._edge_ok(T.V[c], Vn, m):
                parent, cost = c, float(T.cost[c]) + float(durs[k])
                break
        if parent is None:
            return None
        new = T.add(Vn, m, parent, cost)
        self._note_goal(new)
        self._propagate([new], {new: (ids, durs)})
        return new

    def _try_transition(self, x: int, m2: int) -> Optional[int]:
        """Add or re-parent the transition copy (V_x, m2); returns it if it changed."""
        T = self.tree
        V = T.V[x]
        y = T.find(V, m2)
        c = float(T.cost[x])
        if y is not None:
            if T.parent[y] != x and c < T.cost[y] - _EPS:
                T.set_parent(y, x, c)
                self._note_goal(y)
                return y
            return None
        if not self._config_ok(V, m2) or self._bound_rejects(c, V, m2):
            return None
        y = T.add(V, m2, x, c)
        self._note_goal(y)
        return y

    def _advance(self, new: int) -> Optional[int]:
        T = self.tree
        V, m = T.V[new], T.mode[new]
        first = None
        for m2 in self.M.succ[m]:
            if satisfies_vertex(V, self.M.nodes[m2]):
                y = self._try_transition(new, m2)
                if y is not None:
                    self._propagate([y])
                else:
                    # the rewire cascade may already have created the copy
                    y = T.find(V, m2)
                    if y is None or T.parent[y] != new:
                        continue
                if first is None:
                    first = y
        return first

    def _propagate(self, seeds, known=None):
        """Push cost decreases through children, same-mode neighbors, and transitions."""
        T = self.tree
        known = known or {}
        heap = [(float(T.cost[i]), i) for i in seeds]
        heapq.heapify(heap)
        while heap:
            c, x = heapq.heappop(heap)
            if c != T.cost[x]:
                continue
            for ch in T.children[x]:
                nc = c + self._edge_cost(x, ch)
                if nc != T.cost[ch]:
                    T.cost[ch] = nc
                    self._note_goal(ch)
                    heapq.heappush(heap, (nc, ch))
            V, m = T.V[x], T.mode[x]
            nb = known.pop(x, None)
            ids, durs = nb if nb is not None else self.tree_neighbors(V, m, exclude=x)
            if len(ids):
                nc = c + durs
                better = np.flatnonzero(nc < T.cost[ids] - _EPS)
                for k in better.tolist():
                    y = int(ids[k])
                    if y == T.parent[x]:
                        continue
                    ncy = c + float(durs[k])
                    # an earlier rewire in this loop cannot raise T.cost[y]
                    if ncy < T.cost[y] - _EPS and self._edge_ok(V, T.V[y], m):
                        T.set_parent(y, x, ncy)
                        self._note_goal(y)
                        heapq.heappush(heap, (ncy, y))
            for m2 in self.M.succ[m]:
                if satisfies_vertex(V, self.M.nodes[m2]):
                    y = self._try_transition(x, m2)
                    if y is not None:
                        heapq.heappush(heap, (float(T.cost[y]), y))

    def _note_goal(self, i: int):
        if self.tree.mode[i] == self.M.goal:
            self._dirty_goal.append(i)

    def _uncertified(self, i: int) -> Optional[int]:
        """First node on the path to ``i`` whose incoming motion fails the fine check."""
        T = self.tree
        ids = T.path(i)
        for a, b in zip(ids, ids[1:]):
            if T.mode[a] == T.mode[b] and not self._fine_ok(T.V[a], T.V[b], T.mode[b]):
                return b
        return None

    def _collect_goal(self) -> bool:
        """Accept the cheapest improving goal node whose path certifies.

        A motion that passes the planning resolution but fails the finer
        check is marked invalid and the subtree hanging from it is dropped.
        """
        T = self.tree
        cand = sorted({i for i in self._dirty_goal if T.alive[i]}, key=lambda i: (T.cost[i], i))
        self._dirty_goal.clear()
        for i in cand:
            if not T.alive[i] or T.cost[i] >= self.best_cost:
                continue
            bad = self._uncertified(i)
            if bad is None:
                self.best_cost = float(T.cost[i])
                self.best_node = i
                self.best_plan = self.trace_path(i)
                return True
            self._edge_cache[self._edge_key(T.V[T.parent[bad]], T.V[bad], T.mode[bad])] = False
            T.remove_subtree(bad)
            self.repairs += 1
        return False

    # ------------------------------------------------------------ plan extraction

    def connect_to_target(self) -> Optional[Plan]:
        """The best certified plan found so far, if any."""
        return self.best_plan

    def trace_path(self, goal_node: int) -> Plan:
        T = self.tree
        ids = T.path(goal_node)
        if ids[0] != self.root:
            raise RuntimeError("broken parent chain: path does not start at the root")
        M = self.M
        b = PlanBuilder(self.P.config(T.V[ids[0]]), None)
        modes = [T.mode[ids[0]]]
        for prev, cur in zip(ids, ids[1:]):
            if T.mode[cur] != T.mode[prev]:
                node = M.nodes[T.mode[cur]]
                if T.V[cur] != T.V[prev]:
                    raise RuntimeError("transition edge changes configuration")
                b.transition(node.kind, node.arms, node.held, T.mode[cur])
            else:
                b.move(self.P.config(T.V[cur]), at=float(T.cost[cur]))
                modes.append(T.mode[cur])
        plan = b.build()
        plan.cost = float(T.cost[goal_node])
        plan.modes = modes
        plan.check_structure()
        return plan

    def recompute_cost(self, i: int) -> float:
        """Cost of node ``i`` summed along its parent chain from the root."""
        ids = self.tree.path(i)
        c = 0.0
        for a, b in zip(ids, ids[1:]):
            c = c + self._edge_cost(a, b)
        return c

    def modes_expanded(self) -> int:
        return len(self.tree.modes_seen)

    # ------------------------------------------------------------ main loop

    def _emit(self, t):
        self.progress.append((t, self.best_cost, len(self.tree), self.modes_expanded()))

    def plan(self, time_limit: float, clock=None, stop_cost: Optional[float] = None,
             stop_on_first: bool = False, max_iterations: Optional[int] = None) -> Optional[Plan]:
        """Run the anytime loop; returns the best plan found or None."""
        if clock is None:
            clock = WorkClock(self.checker)
        elif isinstance(clock, str):
            clock = make_clock(clock, self.checker)
        self._clock = clock
        if time_limit <= 0:
            return None
        v_last = None
        next_emit = 0.0
        while True:
            t = clock.elapsed()
            if t >= time_limit:
                break
            if max_iterations is not None and self.iterations >= max_iterations:
                break
            if t >= next_emit:
                self._emit(t)
                next_emit = (int(t / PROGRESS_PERIOD_S) + 1) * PROGRESS_PERIOD_S
            self.iterations += 1
            clock.tick()
            v_last = self.expand(v_last)
            if self._dirty_goal:
                improved = self._collect_goal()
                if v_last is not None and not self.tree.alive[v_last]:
                    v_last = None
                if improved:
                    t = clock.elapsed()
                    self.improvements.append((t, self.best_cost))
                    self._emit(t)
                    if stop_on_first:
                        break
                    if stop_cost is not None and self.best_cost <= stop_cost:
                        break
        self._emit(min(clock.elapsed(), max(time_limit, 0.0)))
        return self.connect_to_target()


def plan(problem: Problem, time_limit: float, rng=None, clock=None, **kwargs) -> Optional[Plan]:
    """Convenience wrapper: run mm-dRRT* on ``problem``."""
    opts = {k: kwargs.pop(k) for k in ("gamma", "bound") if k in kwargs}
    return MMdRRTStar(problem, rng, **opts).plan(time_limit, clock, **kwargs)
