"""Benchmark orchestration, trial records, aggregate tables, and SVG rendering.

A benchmark sweeps (planner, s, n, trial). Each (s, n, trial) cell builds one
problem instance from its own seed stream and every planner runs on it, so
planners are compared on identical roadmaps and mode graphs. Setup (roadmaps,
transition sampling, composite roadmaps) happens before the planning clock
starts. With the default work clock every record is a pure function of the
spec, so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .baselines import COMPOSITE_ROADMAP_SIZE, PER_QUERY_BUDGET_S, HOrdDFS, TampSequential
from .geometry import Scene, forward_kinematics, object_pose_from_grasp
from .plan import Plan
from .planner import MMdRRTStar
from .problem import ROADMAP_SIZE, Problem, build_problem
from .scenes import fixture_path, load_scene, object_world_vertices
from .validation import validate_plan

PLANNERS = ("mm-drrt*", "tamp-prm*", "tamp-rrt*", "hord-prm*", "hord-rrt*")
RECORD_SCHEMA = "mmdrrt.trial/1"
CURVE_STEP_S = 0.1


class SpecError(ValueError):
    """Malformed benchmark specification."""


# ------------------------------------------------------------ specification


@dataclass
class BenchmarkSpec:
    """One sweep. ``scene`` is a file path or bundled fixture name; a ``{n}``
    placeholder expands over ``n_arms``, otherwise ``n_arms`` is ignored."""

    scene: str
    planners: list = field(default_factory=lambda: list(PLANNERS))
    s_values: list = field(default_factory=lambda: [10, 20, 30, 50])
    n_arms: list = field(default_factory=lambda: [2, 3, 4, 5])
    trials: int = 50
    time_limit_s: float = 30.0
    seed: int = 0
    roadmap_size: int = ROADMAP_SIZE
    composite_size: int = COMPOSITE_ROADMAP_SIZE
    per_query_budget_s: float = PER_QUERY_BUDGET_S
    clock: str = "work"
    stop_on_first: bool = False
    validate: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise SpecError("trials must be >= 1")
        if not self.time_limit_s > 0:
            raise SpecError("time_limit_s must be > 0")
        unknown = [p for p in self.planners if p not in PLANNERS]
        if unknown or not self.planners:
            raise SpecError(f"unknown planners {unknown}; choose from {list(PLANNERS)}")
        if not self.s_values or any(int(s) < 1 for s in self.s_values):
            raise SpecError("s_values must be a non-empty list of positive integers")
        if self.clock not in ("work", "wall"):
            raise SpecError("clock must be 'work' or 'wall'")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkSpec":
        names = {f.name for f in fields(cls)}
        extra = sorted(set(d) - names)
        if extra:
            raise SpecError(f"unknown spec fields {extra}")
        if "scene" not in d:
            raise SpecError("spec needs a 'scene'")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def scene_for(self, n: Optional[int]) -> str:
        return self.scene.replace("{n}", str(n)) if n is not None else self.scene

    def arm_counts(self) -> list:
        return [int(n) for n in self.n_arms] if "{n}" in self.scene else [None]


def load_spec(path) -> BenchmarkSpec:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as e:
        raise SpecError(f"cannot read spec: {e}") from None
    except json.JSONDecodeError as e:
        raise SpecError(f"spec JSON parse error at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(d, dict):
        raise SpecError("spec must be a JSON object")
    return BenchmarkSpec.from_dict(d)


def resolve_scene(name_or_path: str) -> Scene:
    """Load a scene file, falling back to a bundled fixture of that name."""
    p = Path(name_or_path)
    if p.exists():
        return load_scene(p)
    return load_scene(fixture_path(name_or_path))


# ------------------------------------------------------------ records


@dataclass
class TrialRecord:
    planner: str
    scene: str
    s: int
    n: int
    seed: int
    success: bool
    initial_solution_time_s: Optional[float]
    best_cost: Optional[float]
    cost_over_time: list
    modes_expanded: int
    tree_size: int
    time_limit_s: float
    clock: str
    valid: Optional[bool] = None
    error: Optional[str] = None
    plan: Optional[dict] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = RECORD_SCHEMA
        d["cost_over_time"] = [[float(t), float(c)] for t, c in self.cost_over_time]
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        if d.get("schema") != RECORD_SCHEMA:
            raise ValueError(f"unsupported record schema {d.get('schema')!r}")
        d = {k: v for k, v in d.items() if k != "schema"}
        d["cost_over_time"] = [[float(t), float(c)] for t, c in d["cost_over_time"]]
        return cls(**d)

    def get_plan(self) -> Optional[Plan]:
        return None if self.plan is None else Plan.from_dict(self.plan)


def trial_seeds(base: int, s: int, n: int, trial: int) -> tuple:
    """(problem seed, planner seed) for one benchmark cell."""
    a, b = np.random.SeedSequence([int(base), int(s), int(n), int(trial)]).generate_state(2)
    return int(a), int(b)


def make_planner(name: str, problem: Problem, rng, composite_size: int = COMPOSITE_ROADMAP_SIZE,
                 per_query_budget: float = PER_QUERY_BUDGET_S, **kwargs):
    if name == "mm-drrt*":
        return MMdRRTStar(problem, rng, **kwargs)
    if name in ("tamp-prm*", "tamp-rrt*"):
        return TampSequential(problem, name[5:8], rng, composite_size)
    if name in ("hord-prm*", "hord-rrt*"):
        return HOrdDFS(problem, name[5:8], rng, composite_size, per_query_budget)
    raise ValueError(f"unknown planner {name!r}; choose from {list(PLANNERS)}")


def _tree_size(pl) -> int:
    return len(pl.tree) if isinstance(pl, MMdRRTStar) else pl.tree_size()


def run_trial(scene: Scene, planner: str, s: int, trial: int, time_limit: float, *,
              base_seed: int = 0, roadmap_size: int = ROADMAP_SIZE,
              composite_size: int = COMPOSITE_ROADMAP_SIZE,
              per_query_budget: float = PER_QUERY_BUDGET_S, clock: str = "work",
              stop_on_first: bool = False, stop_cost: Optional[float] = None,
              validate: bool = True, problem: Optional[Problem] = None,
              planner_kwargs: Optional[dict] = None) -> TrialRecord:
    """Run one planner on one seeded instance; any exception becomes a failed record."""
    n = scene.n_arms
    p_seed, r_seed = trial_seeds(base_seed, s, n, trial)
    rec = TrialRecord(planner, scene.name, int(s), n, int(trial), False, None, None, [], 0, 0,
                      float(time_limit), clock)
    try:
        if problem is None:
            problem = build_problem(scene, s, p_seed, roadmap_size)
        pl = make_planner(planner, problem, np.random.default_rng(r_seed), composite_size,
                          per_query_budget, **(planner_kwargs or {}))
        plan = pl.plan(time_limit, clock=clock, stop_on_first=stop_on_first, stop_cost=stop_cost)
        rec.cost_over_time = [[float(t), float(c)] for t, c in pl.improvements]
        rec.modes_expanded = int(pl.modes_expanded())
        rec.tree_size = int(_tree_size(pl))
        if plan is not None:
            rec.success = True
            rec.initial_solution_time_s = rec.cost_over_time[0][0]
            rec.best_cost = float(plan.cost)
            rec.plan = plan.to_dict()
            if validate:
                rec.valid = validate_plan(scene, plan).ok
    except Exception as e:  # a crashing trial is a failure, the sweep continues
        rec.success = False
        rec.error = f"{type(e).__name__}: {e}"
    return rec


def _run_cell(args) -> list:
    spec, n, s, trial = args
    scene = resolve_scene(spec.scene_for(n))
    p_seed, _ = trial_seeds(spec.seed, s, scene.n_arms, trial)
    try:
        problem = build_problem(scene, s, p_seed, spec.roadmap_size)
    except Exception as e:
        problem, err = None, f"{type(e).__name__}: {e}"
    out = []
    for name in spec.planners:
        if problem is None:
            rec = TrialRecord(name, scene.name, int(s), scene.n_arms, int(trial), False, None, None,
                              [], 0, 0, float(spec.time_limit_s), spec.clock, error=err)
        else:
            rec = run_trial(scene, name, s, trial, spec.time_limit_s, base_seed=spec.seed,
                            roadmap_size=spec.roadmap_size, composite_size=spec.composite_size,
                            per_query_budget=spec.per_query_budget_s, clock=spec.clock,
                            stop_on_first=spec.stop_on_first, validate=spec.validate,
                            problem=problem)
        out.append(rec)
    return out


def _sort_key(r: TrialRecord):
    return (r.planner, r.s, r.n, r.seed)


def run_benchmark(spec: BenchmarkSpec, out_dir=None, workers: int = 1,
                  progress: Optional[Callable[[TrialRecord], None]] = None):
    """Run every (planner, s, n, trial) cell; returns ``(records, aggregates)``.

    Records are sorted by (planner, s, n, seed), so the worker count never
    changes the output.
    """
    cells = [(spec, n, int(s), t) for n in spec.arm_counts() for s in spec.s_values
             for t in range(spec.trials)]
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for recs in ex.map(_run_cell, cells):
                records.extend(recs)
                for r in recs:
                    progress and progress(r)
    else:
        for c in cells:
            recs = _run_cell(c)
            records.extend(recs)
            for r in recs:
                progress and progress(r)
    records.sort(key=_sort_key)
    agg = aggregate(records)
    if out_dir is not None:
        write_results(out_dir, records, agg, spec)
    return records, agg


# ------------------------------------------------------------ aggregation


def cost_curve(record: TrialRecord, grid: Sequence[float]) -> list:
    """Best cost at each grid time, carrying the last observed value forward (None before)."""
    out, k, cur = [], 0, None
    pts = record.cost_over_time
    for t in grid:
        while k < len(pts) and pts[k][0] <= t + 1e-12:
            cur = pts[k][1]
            k += 1
        out.append(cur)
    return out


def _grid(time_limit: float) -> list:
    steps = int(math.floor(time_limit / CURVE_STEP_S + 1e-9))
    return [round(i * CURVE_STEP_S, 10) for i in range(steps + 1)]


def aggregate(records: Sequence[TrialRecord]) -> dict:
    """Per-(planner, s, n) tables: success, initial time, modes, and the mean cost curve."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.planner, r.s, r.n), []).append(r)
    success, initial, modes, curves = [], [], [], []
    for key in sorted(groups):
        rs = groups[key]
        ok = [r for r in rs if r.success]
        base = {"planner": key[0], "s": key[1], "n": key[2]}
        success.append({**base, "trials": len(rs), "successes": len(ok),
                        "success_ratio": len(ok) / len(rs)})
        times = [r.initial_solution_time_s for r in ok]
        initial.append({**base, "successes": len(ok),
                        "mean_initial_time_s": statistics.fmean(times) if times else None,
                        "median_initial_time_s": statistics.median(times) if times else None})
        modes.append({**base, "trials": len(rs),
                      "mean_modes_expanded": statistics.fmean(r.modes_expanded for r in rs),
                      "mean_tree_size": statistics.fmean(r.tree_size for r in rs)})
        grid = _grid(max(r.time_limit_s for r in rs))
        cols = [cost_curve(r, grid) for r in ok]
        for i, t in enumerate(grid):
            vals = [c[i] for c in cols if c[i] is not None]
            curves.append({**base, "t": t, "successes": len(vals),
                           "mean_cost": statistics.fmean(vals) if vals else None})
    return {"success": success, "initial_time": initial, "modes": modes, "cost_curve": curves}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_csv(rows: list) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        cols = list(rows[0])
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def slug(planner: str) -> str:
    return planner.replace("*", "star")


def write_results(out_dir, records: Sequence[TrialRecord], agg: dict, spec: Optional[BenchmarkSpec] = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict = {}
    for r in sorted(records, key=_sort_key):
        files.setdefault(f"trials_{slug(r.planner)}_s{r.s}_n{r.n}.ndjson", []).append(r.dumps())
    for name, lines in files.items():
        (out / name).write_text("\n".join(lines) + "\n")
    for metric, rows in agg.items():
        (out / f"{metric}.csv").write_text(table_csv(rows))
    if spec is not None:
        (out / "spec.json").write_text(json.dumps(spec.to_dict(), sort_keys=True, indent=2) + "\n")


def load_records(out_dir) -> list:
    recs = []
    for p in sorted(Path(out_dir).glob("trials_*.ndjson")):
        for line in p.read_text().splitlines():
            if line.strip():
                recs.append(TrialRecord.from_dict(json.loads(line)))
    recs.sort(key=_sort_key)
    return recs


# ------------------------------------------------------------ rendering

_PX = 160.0
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _bounds(scene: Scene):
    xs, ys = [], []
    for a in scene.arms:
        bx, by, _ = a.base_pose
        r = a.reach + a.thickness
        xs += [bx - r, bx + r]
        ys += [by - r, by + r]
    for p in (scene.p_init, scene.p_goal):
        xs.append(p[0])
        ys.append(p[1])
    m = 0.15
    return min(xs) - m, max(xs) + m, min(ys) - m, max(ys) + m


def _object_pose_at(scene: Scene, plan: Plan, t: float, Q):
    h = plan.held_at(t)
    if h is not None:
        return object_pose_from_grasp(scene.arms[h[0]], Q[h[0]], h[1])
    marks = plan.marks()
    if marks["pick"] is None or t < marks["pick"]:
        return scene.p_init
    return scene.p_goal


def render_frame(scene: Scene, plan: Plan, t: float) -> str:
    """One SVG frame of the plan at time ``t``."""
    x0, x1, y0, y1 = _bounds(scene)
    W, H = (x1 - x0) * _PX, (y1 - y0) * _PX

    def P(x, y):
        return f"{(x - x0) * _PX:.2f},{(y1 - y) * _PX:.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
             f'viewBox="0 0 {W:.2f} {H:.2f}">',
             f'<rect width="{W:.2f}" height="{H:.2f}" fill="white"/>']
    for kind, data in scene.obstacles:
        if kind == "polygon":
            pts = " ".join(P(x, y) for x, y in np.asarray(data).tolist())
            parts.append(f'<polygon points="{pts}" fill="#777"/>')
        else:
            cx, cy, r = data
            c = P(cx, cy).split(",")
            parts.append(f'<circle cx="{c[0]}" cy="{c[1]}" r="{r * _PX:.2f}" fill="#777"/>')
    for pose, color in ((scene.p_init, "#bbb"), (scene.p_goal, "#8c8")):
        pts = " ".join(P(x, y) for x, y in object_world_vertices(scene, pose))
        parts.append(f'<polygon points="{pts}" fill="none" stroke="{color}" stroke-dasharray="4 3"/>')
    Q = plan.config_at(t)
    for i, (arm, q) in enumerate(zip(scene.arms, Q)):
        segs, _ = forward_kinematics(arm, q, check_limits=False)
        pts = " ".join([P(*segs[0][0])] + [P(*b) for _, b in segs])
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="{arm.thickness * _PX:.2f}" stroke-linecap="round" '
                     f'stroke-linejoin="round" opacity="0.85"/>')
    pose = _object_pose_at(scene, plan, t, Q)
    pts = " ".join(P(x, y) for x, y in object_world_vertices(scene, pose))
    parts.append(f'<polygon points="{pts}" fill="#f5b700" stroke="black"/>')
    # transition markers: object position at every transition reached so far
    for e in plan.events:
        if e["kind"] in ("pick", "handoff", "place") and e["t"] <= t + 1e-12:
            Qe = plan.configs[e["index"]]
            pe = _object_pose_at(scene, plan, e["t"], Qe)
            c = P(pe[0], pe[1]).split(",")
            parts.append(f'<circle cx="{c[0]}" cy="{c[1]}" r="4" fill="black">'
                         f'<title>{e["kind"]} t={e["t"]:.3f}</title></circle>')
    done = [e["kind"] for e in plan.events if e["kind"] != "goal" and e["t"] <= t + 1e-12]
    parts.append(f'<text x="8" y="18" font-family="monospace" font-size="13">'
                 f't = {t:.3f} / {plan.cost:.3f}  {" > ".join(done)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def frame_times(plan: Plan, frames: int) -> list:
    if frames < 1:
        raise ValueError("frames must be >= 1")
    if frames == 1:
        return [0.0]
    T = plan.cost
    return [T * k / (frames - 1) for k in range(frames)]


def render_plan(scene: Scene, plan: Plan, out_dir, frames: int = 20) -> list:
    """Write one SVG per uniform time sample; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, t in enumerate(frame_times(plan, frames)):
        p = out / f"frame_{k:03d}.svg"
        p.write_text(render_frame(scene, plan, t))
        paths.append(p)
    return paths
