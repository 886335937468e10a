"""Problem instance assembly: roadmaps, transitions, and the mode graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import CollisionChecker, Scene
from .roadmap import ArmRoadmap, build_arm_roadmap
from .scenes import reaching_arms
from .taskspec import ModeGraph, build_mode_graph, handoff_chain, sample_transitions

ROADMAP_SIZE = 200


@dataclass
class Problem:
    scene: Scene
    checker: CollisionChecker
    roadmaps: list
    M: ModeGraph
    chain: list
    v_init: tuple
    v_goal: tuple
    seed: int

    @property
    def n_arms(self) -> int:
        return self.scene.n_arms

    def config(self, V) -> tuple:
        return tuple(rm.config(v) for rm, v in zip(self.roadmaps, V))

    def held(self, m: int):
        return self.M.nodes[m].held


def _inject(rm: ArmRoadmap, q, checker, known: dict) -> int:
    key = np.asarray(q, dtype=float).tobytes()
    v = known.get(key)
    if v is None:
        v = rm.inject_vertex(q, checker)
        known[key] = v
    return v


def build_problem(scene: Scene, s: int, seed: int, roadmap_size: int = ROADMAP_SIZE,
                  checker: Optional[CollisionChecker] = None, roadmaps=None,
                  require_path: bool = True) -> Problem:
    """Sample transitions, build (or reuse) arm roadmaps, and inject every slot configuration.

    ``seed`` drives roadmap sampling and transition sampling through
    independent child streams, so two problems with the same seed are identical.
    """
    checker = checker or CollisionChecker(scene)
    ss = np.random.SeedSequence(seed)
    rm_seq, tr_seq = ss.spawn(2)
    if roadmaps is None:
        rm_seeds = rm_seq.generate_state(scene.n_arms)
        roadmaps = [build_arm_roadmap(scene, i, roadmap_size, int(rm_seeds[i]), checker)
                    for i in range(scene.n_arms)]
    picker = reaching_arms(scene, scene.p_init, checker)[0]
    placer = reaching_arms(scene, scene.p_goal, checker)[0]
    chain = handoff_chain(scene, picker, placer)
    tr = sample_transitions(scene, s, np.random.default_rng(tr_seq), checker, chain)
    known = [dict() for _ in roadmaps]
    v_init = tuple(_inject(rm, q, checker, known[i]) for i, (rm, q) in enumerate(zip(roadmaps, scene.q_init)))
    v_goal = tuple(_inject(rm, q, checker, known[i]) for i, (rm, q) in enumerate(zip(roadmaps, scene.q_goal)))
    for node in [tr.init, tr.goal] + tr.picks + [h for st in tr.handoffs for h in st] + tr.places:
        for i, slot in enumerate(node.slots):
            if slot is not None:
                slot.vertex = _inject(roadmaps[i], slot.q, checker, known[i])
    M = build_mode_graph(tr.picks, tr.handoffs, tr.places, tr.init, tr.goal, require_path=require_path)
    M.bind_arms(scene.arms)
    return Problem(scene, checker, roadmaps, M, chain, v_init, v_goal, seed)
