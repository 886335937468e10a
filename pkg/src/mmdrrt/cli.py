"""Command-line interface: plan, bench, render, validate.

Exit codes: 0 success, 1 infeasible (no plan found, or the plan fails
validation), 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    PLANNERS,
    SpecError,
    load_spec,
    render_plan,
    resolve_scene,
    run_benchmark,
    run_trial,
)
from .plan import PlanError, load_plan
from .problem import ROADMAP_SIZE
from .scenes import SceneError
from .validation import validate_plan

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2


def _scene(arg):
    try:
        return resolve_scene(arg)
    except SceneError as e:
        raise _InputError(f"scene {arg}: {e}") from None


def _plan(arg):
    try:
        return load_plan(arg)
    except (OSError, ValueError, KeyError, TypeError, PlanError) as e:
        raise _InputError(f"plan {arg}: {e}") from None


class _InputError(Exception):
    pass


def cmd_plan(args) -> int:
    scene = _scene(args.scene)
    if args.s < 1 or args.time <= 0:
        raise _InputError("--s must be >= 1 and --time > 0")
    rec = run_trial(scene, args.planner, args.s, args.seed, args.time, base_seed=args.base_seed,
                    roadmap_size=args.roadmap_size, clock=args.clock,
                    stop_on_first=args.stop_on_first)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trial.json").write_text(json.dumps(rec.to_dict(), sort_keys=True, indent=2) + "\n")
    if rec.error:
        print(f"error: {rec.error}", file=sys.stderr)
    if not rec.success:
        print(f"{args.planner}: no plan within {args.time} s")
        return EXIT_INFEASIBLE
    (out / "plan.json").write_text(json.dumps(rec.plan, sort_keys=True, indent=2) + "\n")
    print(f"{args.planner}: cost {rec.best_cost:.6f}, first solution at "
          f"{rec.initial_solution_time_s:.3f} s, valid={rec.valid}")
    print(f"wrote {out / 'plan.json'}")
    return EXIT_OK if rec.valid is not False else EXIT_INFEASIBLE


def cmd_bench(args) -> int:
    try:
        spec = load_spec(args.spec)
    except (SpecError, TypeError) as e:
        raise _InputError(f"spec {args.spec}: {e}") from None
    for n in spec.arm_counts():
        _scene(spec.scene_for(n))

    def report(r):
        if not args.quiet:
            state = "ok" if r.success else "fail"
            t = "" if r.initial_solution_time_s is None else f" t0={r.initial_solution_time_s:.3f}"
            print(f"{r.planner} s={r.s} n={r.n} seed={r.seed} {state}{t}", flush=True)

    run_benchmark(spec, args.out, workers=args.workers, progress=report)
    print(f"wrote results to {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    scene = _scene(args.scene)
    plan = _plan(args.plan)
    if args.frames < 1:
        raise _InputError("--frames must be >= 1")
    paths = render_plan(scene, plan, args.out, args.frames)
    print(f"wrote {len(paths)} frames to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scene = _scene(args.scene)
    plan = _plan(args.plan)
    rep = validate_plan(scene, plan)
    if rep.ok:
        print("plan is valid")
        return EXIT_OK
    for e in rep.errors:
        print(f"invalid: {e}")
    return EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmdrrt", description="Multi-arm pick-and-place via handoffs")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one instance")
    p.add_argument("--scene", required=True, help="scene JSON file or bundled fixture name")
    p.add_argument("--planner", choices=PLANNERS, default="mm-drrt*")
    p.add_argument("--s", type=int, default=10, help="transition samples per mode-graph layer")
    p.add_argument("--time", type=float, default=30.0, help="planning time limit in seconds")
    p.add_argument("--seed", type=int, default=0, help="trial index")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--roadmap-size", type=int, default=ROADMAP_SIZE)
    p.add_argument("--clock", choices=("work", "wall"), default="work")
    p.add_argument("--stop-on-first", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="run a benchmark sweep")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="write SVG frames of a plan")
    p.add_argument("--scene", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=20)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="check a plan against a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.func(args)
    except _InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
