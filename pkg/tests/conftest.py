import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

from mmdrrt.geometry import ArmModel, Grasp, Scene  # noqa: E402
from mmdrrt.problem import build_problem  # noqa: E402
from mmdrrt.scenes import load_fixture  # noqa: E402


@pytest.fixture(scope="session")
def tabletop():
    return load_fixture("tabletop")


@pytest.fixture(scope="session")
def dead_end():
    return load_fixture("dead_end")


@pytest.fixture(scope="session")
def small_problem(tabletop):
    """Two 3-link arms, 10-vertex roadmaps, two samples per transition layer."""
    return build_problem(tabletop, 2, 0, roadmap_size=10)


@pytest.fixture(scope="session")
def tabletop_problem(tabletop):
    return build_problem(tabletop, 4, 1, roadmap_size=60)


def make_scene(arms, obstacles=(), p_init=(-1.35, 0.0, 0.0), p_goal=(1.35, 0.0, np.pi),
               q_init=None, q_goal=None, grasps=None):
    """Scene built directly from arm models, bypassing JSON."""
    grasps = grasps or [Grasp((0.08, 0.0, np.pi / 2), "top"), Grasp((0.08, 0.0, -np.pi / 2), "bottom")]
    shape = np.array([[-0.05, -0.05], [0.05, -0.05], [0.05, 0.05], [-0.05, 0.05]])
    q_init = q_init or [np.zeros(a.dof) for a in arms]
    q_goal = q_goal or [np.zeros(a.dof) for a in arms]
    return Scene(list(arms), list(obstacles), shape, tuple(p_init), tuple(p_goal), grasps,
                 [np.asarray(q, float) for q in q_init], [np.asarray(q, float) for q in q_goal])


def make_arm(base=(0.0, 0.0, 0.0), links=(1.0, 1.0), thickness=0.05, vmax=1.0):
    return ArmModel(tuple(base), tuple(links), tuple((-np.pi, np.pi) for _ in links), vmax, thickness)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
