"""Timed composite plans with pick / handoff / place events."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Grasp, Scene

PLAN_SCHEMA = "mmdrrt.plan/1"
TRANSITION_KINDS = ("pick", "handoff", "place")


class PlanError(RuntimeError):
    """A plan violates the pick -> handoff(s) -> place structure."""


@dataclass
class Plan:
    """Piecewise-linear composite trajectory.

    ``held[k]`` is the (arm, Grasp) holding the object while moving from
    waypoint ``k`` to ``k + 1`` (after any event at waypoint ``k``), or None.
    Events are dicts with ``kind``, ``t``, ``index`` (waypoint), ``arms``.
    """

    times: list
    configs: list
    held: list
    events: list
    cost: float
    modes: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    @property
    def transition_marks(self) -> tuple:
        return tuple(e["t"] for e in self.events if e["kind"] in TRANSITION_KINDS)

    def marks(self) -> dict:
        out = {"pick": None, "handoff": [], "place": None}
        for e in self.events:
            if e["kind"] == "handoff":
                out["handoff"].append(e["t"])
            elif e["kind"] in ("pick", "place"):
                out[e["kind"]] = e["t"]
        return out

    def check_structure(self):
        kinds = [e["kind"] for e in self.events if e["kind"] in TRANSITION_KINDS]
        if not kinds:
            raise PlanError("plan has no mode transitions")
        if kinds[0] != "pick" or kinds[-1] != "place" or len(kinds) < 3 or \
                any(k != "handoff" for k in kinds[1:-1]):
            raise PlanError(f"transition sequence {kinds} is not pick, handoff+, place")
        ts = [0.0] + list(self.transition_marks) + [self.times[-1]]
        if any(not (a < b) for a, b in zip(ts, ts[1:])):
            raise PlanError(f"transition times {ts} are not strictly increasing")

    def config_at(self, t: float) -> tuple:
        t = min(max(t, self.times[0]), self.times[-1])
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 1)
        if k == len(self.times) - 1 or self.times[k + 1] == self.times[k]:
            return tuple(np.array(q) for q in self.configs[k])
        a = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return tuple(qa + a * (qb - qa) for qa, qb in zip(self.configs[k], self.configs[k + 1]))

    def held_at(self, t: float):
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 1)
        # a waypoint exactly at t uses the state after its events
        return self.held[k]

    def to_dict(self) -> dict:
        def held_dict(h):
            if h is None:
                return None
            return {"arm": int(h[0]), "face": h[1].face, "offset": list(h[1].offset)}

        return {
            "schema": PLAN_SCHEMA,
            "cost": self.cost,
            "waypoints": [
                {"t": t, "q": [np.asarray(q).tolist() for q in Q], "held": held_dict(h)}
                for t, Q, h in zip(self.times, self.configs, self.held)
            ],
            "events": [dict(e, arms=list(e["arms"])) for e in self.events],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        if d.get("schema") != PLAN_SCHEMA:
            raise PlanError(f"unsupported plan schema {d.get('schema')!r}")
        times, configs, held = [], [], []
        for w in d["waypoints"]:
            times.append(float(w["t"]))
            configs.append(tuple(np.array(q, dtype=float) for q in w["q"]))
            h = w["held"]
            held.append(None if h is None else (int(h["arm"]), Grasp(tuple(h["offset"]), h["face"])))
        events = [dict(e, arms=tuple(e["arms"])) for e in d["events"]]
        return cls(times, configs, held, events, float(d["cost"]))


def load_plan(path) -> Plan:
    with open(path) as f:
        return Plan.from_dict(json.load(f))


class PlanBuilder:
    """Incrementally assemble a plan from motions and transitions."""

    def __init__(self, Q0, held=None):
        self.times = [0.0]
        self.configs = [tuple(np.asarray(q, dtype=float) for q in Q0)]
        self.held = [held]
        self.events = []

    def move(self, Q, dt: float = 0.0, at: Optional[float] = None):
        t = self.times[-1] + dt if at is None else at
        self.times.append(t)
        self.configs.append(tuple(np.asarray(q, dtype=float) for q in Q))
        self.held.append(self.held[-1])

    def transition(self, kind: str, arms, held_after, mode: int = -1):
        self.events.append({"kind": kind, "t": self.times[-1], "index": len(self.times) - 1,
                            "arms": tuple(int(a) for a in arms), "mode": int(mode)})
        self.held[-1] = held_after

    def build(self) -> Plan:
        return Plan(self.times, self.configs, self.held, self.events, self.times[-1])
