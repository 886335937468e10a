"""Regenerate the bundled scene fixtures in src/mmdrrt/fixtures.

Every fixture uses identical 3-link arms and a 0.1 x 0.1 square object with
one grasp per face. Run from the repository root:

    python3 benchmarks/make_fixtures.py
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

PI = math.pi
LINKS = [0.6, 0.5, 0.4]
OBJECT = [[-0.05, -0.05], [0.05, -0.05], [0.05, 0.05], [-0.05, 0.05]]
GRASPS = [
    {"offset": [0.08, 0.0, PI / 2], "face": "top"},
    {"offset": [0.08, 0.0, -PI / 2], "face": "bottom"},
]
# two arms facing each other across the table
LEFT = ([-0.75, 0.0, 0.0], [2.3, 0.6, 0.6], [-2.3, -0.6, -0.6])
RIGHT = ([0.75, 0.0, 0.0], [0.84, -0.6, -0.6], [-0.84, 0.6, 0.6])


def arm(base, q_init, q_goal):
    return {"base": list(base), "links": LINKS, "limits": [[-PI, PI]] * len(LINKS),
            "vmax": 1.0, "thickness": 0.05, "q_init": list(q_init), "q_goal": list(q_goal)}


def scene(name, arms, obstacles, init, goal, chain=None):
    d = {"schema": "mmdrrt.scene/1", "name": name, "arms": arms, "obstacles": obstacles,
         "object": {"shape": OBJECT, "init": init, "goal": goal, "grasps": GRASPS},
         "surfaces": []}
    if chain is not None:
        d["chain"] = chain
    return d


def tabletop():
    return scene("tabletop", [arm(*LEFT), arm(*RIGHT)], [], [-1.35, 0.0, 0.0], [1.35, 0.0, PI])


def narrow_passage(slit=0.2, half_thickness=0.02):
    """Tabletop split by a thin wall; the object can only cross through a slit at y = 0."""
    t, h = half_thickness, slit / 2
    wall = [
        {"type": "polygon", "points": [[-t, -1.6], [t, -1.6], [t, -h], [-t, -h]]},
        {"type": "polygon", "points": [[-t, h], [t, h], [t, 1.6], [-t, 1.6]]},
    ]
    return scene("narrow_passage", [arm(*LEFT), arm(*RIGHT)], wall, [-1.35, 0.0, 0.0], [1.35, 0.0, PI])


def chain(n, spacing=1.3, reach=0.9):
    """n arms in a row; the object starts left of the first and ends right of the last."""
    xs = [spacing * (i - (n - 1) / 2) for i in range(n)]
    arms = [arm([x, 0.0, 0.0], [1.9, 0.6, 0.6], [1.24, -0.6, -0.6]) for x in xs]
    return scene(f"chain_{n}", arms, [], [xs[0] - reach, 0.0, 0.0], [xs[-1] + reach, 0.0, PI],
                 chain=list(range(n)))


def dead_end():
    """Tabletop whose goal pose admits only the top-face place.

    A handoff flips the grasped face, so picks with the top face can never be
    placed. The left arm starts next to a top-face pick, which makes that pick
    the nearest and the first-ordered one.
    """
    return scene("dead_end", [arm(*LEFT), arm(*RIGHT)], [], [-1.35, 0.0, 0.0], [1.35, -0.8, 0.0])


def all_fixtures() -> dict:
    out = {"tabletop": tabletop(), "narrow_passage": narrow_passage(), "dead_end": dead_end()}
    for n in range(2, 6):
        out[f"chain_{n}"] = chain(n)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = Path(__file__).resolve().parents[1] / "src" / "mmdrrt" / "fixtures"
    ap.add_argument("--out", type=Path, default=default)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, d in all_fixtures().items():
        path = args.out / f"{name}.json"
        path.write_text(json.dumps(d, indent=2) + "\n")
        print(path)


if __name__ == "__main__":
    main()
