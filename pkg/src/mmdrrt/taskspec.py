"""Transition sampling and the directed mode graph.

A mode node constrains a subset of arms to exact configurations (and grasps).
Tree states at a node are the states *after* its transition: at a pick node
the picking arm holds the object, at a handoff node the receiving arm holds
it, and at place/goal nodes the object rests at the goal pose.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    OPPOSITE_FACE,
    CollisionChecker,
    Grasp,
    ObjectPose,
    Scene,
    ee_target_for,
    inverse_kinematics,
    object_pose_from_grasp,
)

INIT, PICK, HANDOFF, PLACE, GOAL = "init", "pick", "handoff", "place", "goal"
HANDOFF_ATTEMPTS_PER_SAMPLE = 400


class InfeasibleProblem(RuntimeError):
    """No valid picks or no valid places exist."""


class InfeasibleModeGraph(RuntimeError):
    """The mode graph has no Init -> Goal path; callers may resample."""


@dataclass
class Slot:
    q: np.ndarray
    grasp: Optional[Grasp] = None
    vertex: Optional[int] = None


@dataclass(eq=False)
class ModeNode:
    kind: str
    slots: tuple
    arms: tuple = ()
    stage: int = 0
    object_pose: Optional[ObjectPose] = None
    index: int = -1

    def __post_init__(self):
        if all(s is None for s in self.slots):
            raise ValueError("a mode node must constrain at least one arm")

    @property
    def constrained(self) -> tuple:
        return tuple(i for i, s in enumerate(self.slots) if s is not None)

    def constrains(self, arm: int) -> bool:
        return self.slots[arm] is not None

    @property
    def held(self):
        """(arm, Grasp) holding the object in states at this node, or None."""
        if self.kind == PICK:
            i = self.arms[0]
            return i, self.slots[i].grasp
        if self.kind == HANDOFF:
            j = self.arms[1]
            return j, self.slots[j].grasp
        return None

    def label(self) -> str:
        if self.kind == HANDOFF:
            return f"{self.kind}[{self.arms[0]}->{self.arms[1]}]#{self.index}"
        return f"{self.kind}#{self.index}"


def satisfies(Q, node: ModeNode) -> bool:
    """Every constrained arm of ``node`` sits exactly at its slot configuration."""
    for i, slot in enumerate(node.slots):
        if slot is not None and not np.array_equal(np.asarray(Q[i]), slot.q):
            return False
    return True


def satisfies_vertex(V, node: ModeNode) -> bool:
    """Vertex-identity form of :func:`satisfies` for tensor vertices."""
    for i, slot in enumerate(node.slots):
        if slot is not None and V[i] != slot.vertex:
            return False
    return True


# ------------------------------------------------------------ sampling


def handoff_chain(scene: Scene, picker: int, placer: int) -> list:
    if scene.chain is not None:
        return list(scene.chain)
    if scene.n_arms == 2:
        return [picker, placer]
    return list(range(scene.n_arms))


@dataclass
class Transitions:
    chain: list
    picks: list
    handoffs: list  # one list per chain stage
    places: list
    init: ModeNode
    goal: ModeNode


def _nulls(n):
    return [None] * n


def make_init_goal(scene: Scene):
    n = scene.n_arms
    init = ModeNode(INIT, tuple(Slot(np.asarray(q, dtype=float)) for q in scene.q_init),
                    tuple(range(n)), 0, ObjectPose(tuple(scene.p_init), ("stable", 0)))
    goal = ModeNode(GOAL, tuple(Slot(np.asarray(q, dtype=float)) for q in scene.q_goal),
                    tuple(range(n)), n + 1, ObjectPose(tuple(scene.p_goal), ("stable", 0)))
    return init, goal


def _stable_transitions(scene, checker, arm, pose, kind, stage, s, rng):
    out = []
    for grasp in scene.grasps:
        for q in inverse_kinematics(scene.arms[arm], ee_target_for(pose, grasp), rng):
            if len(out) >= s:
                return out
            Q = [np.zeros(a.dof) for a in scene.arms]
            Q[arm] = q
            if not checker.config_valid(Q, held=(arm, grasp), arms=(arm,)):
                continue
            slots = _nulls(scene.n_arms)
            slots[arm] = Slot(q, grasp)
            if kind == PICK:
                # a picked pose is defined by the grasp, not by the rest pose it came from
                op = ObjectPose(object_pose_from_grasp(scene.arms[arm], q, grasp), ("picked", arm, grasp.face))
            else:
                op = ObjectPose(tuple(pose), ("stable", 0))
            out.append(ModeNode(kind, tuple(slots), (arm,), stage, op))
    return out


def sample_transitions(scene: Scene, s: int, rng, checker: Optional[CollisionChecker] = None,
                       chain: Optional[Sequence[int]] = None) -> Transitions:
    """IK-ground up to ``s`` picks, ``s`` handoffs per chain stage, and ``s`` places."""
    if s < 1:
        raise ValueError("s must be >= 1")
    checker = checker or CollisionChecker(scene)
    if chain is None:
        from .scenes import reaching_arms

        picker = reaching_arms(scene, scene.p_init, checker)[0]
        placer = reaching_arms(scene, scene.p_goal, checker)[0]
        chain = handoff_chain(scene, picker, placer)
    chain = list(chain)
    n_stages = len(chain) - 1
    picks = _stable_transitions(scene, checker, chain[0], scene.p_init, PICK, 1, s, rng)
    places = _stable_transitions(scene, checker, chain[-1], scene.p_goal, PLACE, n_stages + 1, s, rng)
    if not picks:
        raise InfeasibleProblem("no valid pick configuration at the initial object pose")
    if not places:
        raise InfeasibleProblem("no valid place configuration at the goal object pose")

    handoffs = []
    holder_grasps = sorted({p.slots[chain[0]].grasp for p in picks}, key=lambda g: g.face)
    for k in range(n_stages):
        holder, receiver = chain[k], chain[k + 1]
        stage_nodes = []
        h_arm, r_arm = scene.arms[holder], scene.arms[receiver]
        if holder_grasps:
            for _ in range(HANDOFF_ATTEMPTS_PER_SAMPLE * s):
                if len(stage_nodes) >= s:
                    break
                g_h = holder_grasps[int(rng.integers(len(holder_grasps)))]
                q_h = rng.uniform(h_arm.lower, h_arm.upper)
                pose = object_pose_from_grasp(h_arm, q_h, g_h)
                g_r = scene.grasp(OPPOSITE_FACE[g_h.face])
                sols = inverse_kinematics(r_arm, ee_target_for(pose, g_r), rng)
                if not sols:
                    continue
                q_r = sols[int(rng.integers(len(sols)))]
                Q = [np.zeros(a.dof) for a in scene.arms]
                Q[holder], Q[receiver] = q_h, q_r
                pair = (holder, receiver)
                if not (checker.config_valid(Q, held=(holder, g_h), arms=pair)
                        and checker.config_valid(Q, held=(receiver, g_r), arms=pair)):
                    continue
                slots = _nulls(scene.n_arms)
                slots[holder] = Slot(q_h, g_h)
                slots[receiver] = Slot(q_r, g_r)
                stage_nodes.append(ModeNode(HANDOFF, tuple(slots), (holder, receiver), k + 2,
                                            ObjectPose(tuple(pose), ("picked", receiver, g_r.face))))
        handoffs.append(stage_nodes)
        holder_grasps = sorted({h.slots[receiver].grasp for h in stage_nodes}, key=lambda g: g.face)
    init, goal = make_init_goal(scene)
    return Transitions(chain, picks, handoffs, places, init, goal)


# ------------------------------------------------------------ mode graph


class ModeGraph:
    """Directed acyclic graph Init -> Pick -> Handoff+ -> Place -> Goal."""

    def __init__(self, nodes, edges, init: int, goal: int, n_arms: int):
        self.nodes: list = nodes
        self.edges: list = sorted(set(edges))
        self.init = init
        self.goal = goal
        self.n_arms = n_arms
        self.succ = [[] for _ in nodes]
        self.pred = [[] for _ in nodes]
        for a, b in self.edges:
            self.succ[a].append(b)
            self.pred[b].append(a)
        self.depth = self._bfs_depth()
        self.max_depth = max(d for d in self.depth if d >= 0)
        self._arms = None
        self._h_goal = None
        self._look = None
        self._tail = None
        self._bfs_targets = {}
        self._lb_tables = {}

    def __len__(self):
        return len(self.nodes)

    def _bfs_depth(self):
        depth = [-1] * len(self.nodes)
        depth[self.init] = 0
        dq = deque([self.init])
        while dq:
            u = dq.popleft()
            for v in self.succ[u]:
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    dq.append(v)
        return depth

    def topological_order(self) -> list:
        indeg = [len(p) for p in self.pred]
        dq = deque(i for i, d in enumerate(indeg) if d == 0)
        out = []
        while dq:
            u = dq.popleft()
            out.append(u)
            for v in self.succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    dq.append(v)
        if len(out) != len(self.nodes):
            raise ValueError("mode graph contains a cycle")
        return out

    def has_path(self) -> bool:
        return self.depth[self.goal] >= 0

    def count_paths(self) -> int:
        ways = [0] * len(self.nodes)
        ways[self.init] = 1
        for u in self.topological_order():
            for v in self.succ[u]:
                ways[v] += ways[u]
        return ways[self.goal]

    def adjacent(self, m: int) -> list:
        return self.succ[m]

    # -- heuristics over the graph -------------------------------------------

    def bind_arms(self, arms):
        """Attach arm models (velocities) and precompute goal heuristics."""
        self._arms = list(arms)
        self._compute_h_goal()
        self._compute_lookahead()

    def makespan(self, a: int, b: int) -> float:
        """Pairwise makespan between two nodes over the arms both constrain."""
        na, nb = self.nodes[a], self.nodes[b]
        best = 0.0
        for i in range(self.n_arms):
            sa, sb = na.slots[i], nb.slots[i]
            if sa is not None and sb is not None:
                t = float(np.max(np.abs(sa.q - sb.q))) / self._arms[i].max_joint_velocity
                best = max(best, t)
        return best

    def _compute_h_goal(self):
        h = [np.inf] * len(self.nodes)
        h[self.goal] = 0.0
        for u in reversed(self.topological_order()):
            for v in self.succ[u]:
                c = self.makespan(u, v) + h[v]
                if c < h[u]:
                    h[u] = c
        self._h_goal = h

    def h_goal(self, m: int) -> float:
        return self._h_goal[m]

    def _compute_lookahead(self):
        """Per arm: first constraining descendants of each node and their tails."""
        n_nodes = len(self.nodes)
        look = [[None] * n_nodes for _ in range(self.n_arms)]
        tail = [[np.inf] * n_nodes for _ in range(self.n_arms)]
        order = list(reversed(self.topological_order()))
        for i in range(self.n_arms):
            v = self._arms[i].max_joint_velocity
            for u in order:
                merged = {}
                for s in self.succ[u]:
                    if self.nodes[s].constrains(i):
                        merged[s] = min(merged.get(s, np.inf), tail[i][s])
                    else:
                        for c, t in look[i][s].items():
                            merged[c] = min(merged.get(c, np.inf), t)
                look[i][u] = merged
                slot = self.nodes[u].slots[i]
                if u == self.goal:
                    tail[i][u] = 0.0
                elif slot is not None:
                    best = np.inf
                    for c, t in merged.items():
                        d = float(np.max(np.abs(self.nodes[c].slots[i].q - slot.q))) / v + t
                        best = min(best, d)
                    tail[i][u] = best
        self._look = look
        self._tail = tail

    def lookahead(self, arm: int, m: int) -> dict:
        return self._look[arm][m]

    def tail(self, arm: int, m: int) -> float:
        return self._tail[arm][m]

    def _lb_table(self, m: int):
        tab = self._lb_tables.get(m)
        if tab is None:
            tab = []
            for i in range(self.n_arms):
                items = sorted(self._look[i][m].items())
                if items:
                    C = np.array([self.nodes[c].slots[i].q for c, _ in items])
                    T = np.array([t for _, t in items])
                else:
                    C, T = None, None
                tab.append((C, T, self._arms[i].max_joint_velocity))
            self._lb_tables[m] = tab
        return tab

    def lower_bound(self, configs, m: int) -> float:
        """Admissible remaining-time bound from per-arm configs at node ``m``.

        Each arm still has to visit its future constrained configurations in
        order; the plan lasts at least as long as the slowest such tour measured
        in straight-line joint space.
        """
        if m == self.goal:
            return 0.0
        best = 0.0
        for i, (C, T, v) in enumerate(self._lb_table(m)):
            if C is None:
                return np.inf
            val = float(np.min(np.max(np.abs(C - configs[i]), axis=1) / v + T))
            if val > best:
                best = val
        return best

    # -- target selection ----------------------------------------------------

    def bfs_targets(self, s: int, arm: int) -> tuple:
        """Nodes constraining ``arm`` at the nearest BFS depth from ``s`` (``s`` included)."""
        key = (s, arm)
        hit = self._bfs_targets.get(key)
        if hit is not None:
            return hit
        frontier = [s]
        seen = {s}
        found = ()
        while frontier:
            found = tuple(sorted(u for u in frontier if self.nodes[u].constrains(arm)))
            if found:
                break
            nxt = []
            for u in frontier:
                for v in self.succ[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = sorted(nxt)
        self._bfs_targets[key] = found
        return found

    def to_dict(self) -> dict:
        def slot_dict(s):
            if s is None:
                return None
            return {
                "q": np.asarray(s.q).tolist(),
                "grasp": None if s.grasp is None else {"offset": list(s.grasp.offset), "face": s.grasp.face},
                "vertex": s.vertex,
            }

        return {
            "schema": "mmdrrt.modegraph/1",
            "init": self.init,
            "goal": self.goal,
            "nodes": [
                {
                    "index": i,
                    "kind": n.kind,
                    "arms": list(n.arms),
                    "stage": n.stage,
                    "slots": [slot_dict(s) for s in n.slots],
                    "object_pose": None if n.object_pose is None else list(n.object_pose.pose),
                }
                for i, n in enumerate(self.nodes)
            ],
            "edges": [list(e) for e in self.edges],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _grasp_of(node: ModeNode, arm: int):
    slot = node.slots[arm]
    return None if slot is None else slot.grasp


def build_mode_graph(picks, handoffs, places, init: ModeNode, goal: ModeNode,
                     require_path: bool = True) -> ModeGraph:
    """Connect grasp-consistent transitions into a mode graph.

    ``handoffs`` is a list of stages (lists of handoff nodes); a flat list of
    handoff nodes is treated as a single stage.
    """
    if handoffs and isinstance(handoffs[0], ModeNode):
        handoffs = [list(handoffs)]
    nodes = [init] + list(picks) + [h for stage in handoffs for h in stage] + list(places) + [goal]
    for i, n in enumerate(nodes):
        n.index = i
    edges = []
    for p in picks:
        edges.append((init.index, p.index))
    if handoffs:
        for p in picks:
            i = p.arms[0]
            for h in handoffs[0]:
                if h.arms[0] == i and _grasp_of(h, i) == _grasp_of(p, i):
                    edges.append((p.index, h.index))
        for k in range(1, len(handoffs)):
            for a in handoffs[k - 1]:
                j = a.arms[1]
                for b in handoffs[k]:
                    if b.arms[0] == j and _grasp_of(b, j) == _grasp_of(a, j):
                        edges.append((a.index, b.index))
        last = handoffs[-1]
    else:
        last = []
    for h in last:
        j = h.arms[1]
        for pl in places:
            if pl.arms[0] == j and _grasp_of(pl, j) == _grasp_of(h, j):
                edges.append((h.index, pl.index))
    for pl in places:
        edges.append((pl.index, goal.index))
    M = ModeGraph(nodes, edges, init.index, goal.index, len(init.slots))
    if require_path and not M.has_path():
        raise InfeasibleModeGraph("no Init -> Goal path in the mode graph")
    return M


def traverse_and_get_targets(m: int, M: ModeGraph, V=None, roadmaps=None) -> list:
    """Per-arm target node sets for expansion out of node ``m``.

    The best adjacent node is chosen by the heuristic: with a tensor vertex
    ``V`` and roadmaps, by the slowest arm's cached shortest-path time plus
    its remaining tail; otherwise by pairwise makespan plus the node's
    heuristic to goal. Arms the chosen node leaves unconstrained look ahead
    to the nearest descendants that constrain them. Returns a list with one
    tuple of mode-node indices per arm.
    """
    succ = M.succ[m]
    n = M.n_arms
    if not succ:
        return [(M.goal,)] * n
    per_succ = [[M.bfs_targets(s, i) for i in range(n)] for s in succ]
    if len(succ) == 1:
        scores = [0.0]
    elif V is not None and roadmaps is not None:
        scores = []
        for k, s in enumerate(succ):
            worst = 0.0
            for i in range(n):
                cands = per_succ[k][i]
                if not cands:
                    continue
                best = min(
                    roadmaps[i].heuristic_time(V[i], M.nodes[c].slots[i].vertex) + M.tail(i, c)
                    for c in cands
                )
                worst = max(worst, best)
            scores.append(worst)
    else:
        scores = [M.makespan(m, s) + M.h_goal(s) for s in succ]
    lo = min(scores)
    chosen = [k for k, sc in enumerate(scores) if sc <= lo + 1e-12]
    out = []
    for i in range(n):
        acc = set()
        for k in chosen:
            acc.update(per_succ[k][i])
        out.append(tuple(sorted(acc)))
    return out
