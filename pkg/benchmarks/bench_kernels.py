"""Compare the compiled and pure-Python collision kernels.

Times configuration and edge checks on random composite configurations of a
bundled scene, with and without a held object, and confirms both backends
return identical answers. Run from the repository root:

    python3 benchmarks/bench_kernels.py --scene narrow_passage --samples 2000
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mmdrrt.geometry import COLLISION_STEP, CollisionChecker
from mmdrrt.harness import resolve_scene
from mmdrrt.kernels import compiled_available


def _time(fn, items, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = [fn(*it) for it in items]
        best = min(best, time.perf_counter() - t)
    return best / len(items), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scene", default="narrow_passage")
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--edge-span", type=float, default=0.5, help="max joint change per test edge (rad)")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    scene = resolve_scene(args.scene)
    rng = np.random.default_rng(args.seed)
    checkers = {b: CollisionChecker(scene, backend=b) for b in ("cython", "python")}
    lo = np.concatenate([a.lower for a in scene.arms])
    hi = np.concatenate([a.upper for a in scene.arms])
    A = rng.uniform(lo, hi, size=(args.samples, len(lo)))
    B = np.clip(A + rng.uniform(-args.edge_span, args.edge_span, size=A.shape), lo, hi)
    held = (0, scene.grasps[0])

    rows = []
    for label, h in (("free", None), ("held", held)):
        for kind in ("config", "edge"):
            res, per = {}, {}
            for b, ck in checkers.items():
                if kind == "config":
                    items = [(a,) for a in A]
                    fn = lambda a, ck=ck: ck.flat_config_valid(a, held=h)
                else:
                    items = list(zip(A, B))
                    fn = lambda a, b, ck=ck: ck.flat_edge_valid(a, b, held=h, step=COLLISION_STEP)
                per[b], res[b] = _time(fn, items, args.repeat)
            agree = res["cython"] == res["python"]
            rows.append((f"{kind}/{label}", per["python"], per["cython"], agree,
                         float(np.mean(res["cython"]))))

    print(f"scene={scene.name} samples={args.samples} step={COLLISION_STEP}")
    print(f"{'case':<14}{'python us':>12}{'cython us':>12}{'speedup':>10}{'valid frac':>12}  agree")
    for case, py, cy, agree, frac in rows:
        print(f"{case:<14}{py * 1e6:>12.1f}{cy * 1e6:>12.1f}{py / cy:>10.1f}{frac:>12.3f}  {agree}")
    if not all(r[3] for r in rows):
        raise SystemExit("backends disagree")


if __name__ == "__main__":
    main()
