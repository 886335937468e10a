"""mm-dRRT*: anytime multi-arm pick-and-place-via-handoff planning."""

from .geometry import ArmModel, CollisionChecker, Grasp, ObjectPose, Scene
from .kernels import BACKEND
from .plan import Plan
from .planner import MMdRRTStar
from .problem import Problem, build_problem
from .scenes import load_fixture, load_scene

__version__ = "0.1.0"

__all__ = [
    "ArmModel", "BACKEND", "CollisionChecker", "Grasp", "MMdRRTStar", "ObjectPose", "Plan",
    "Problem", "Scene", "build_problem", "load_fixture", "load_scene", "__version__",
]
