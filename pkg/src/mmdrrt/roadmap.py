"""Per-arm PRM* roadmaps, cached shortest-path heuristics, implicit tensor adjacency."""

from __future__ import annotations

import itertools
import json
import math
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from .geometry import CollisionChecker, Scene

FULL_APSP_LIMIT = 1000
ROADMAP_SCHEMA = "mmdrrt.roadmap/1"


class RoadmapError(RuntimeError):
    pass


def prm_star_k(n: int, dim: int) -> int:
    """k-nearest PRM* connection count, ceil(e * (1 + 1/d) * ln n)."""
    if n < 2:
        return 0
    return int(math.ceil(math.e * (1.0 + 1.0 / dim) * math.log(n)))


class ArmRoadmap:
    """Undirected roadmap for one arm; edge weights are traversal times in seconds."""

    def __init__(self, arm_index: int, arm, vertices, seed: Optional[int] = None, scene_digest: str = ""):
        self.arm_index = arm_index
        self.arm = arm
        self.vmax = arm.max_joint_velocity
        self.seed = seed
        self.scene_digest = scene_digest
        self._verts = np.array(vertices, dtype=float).reshape(-1, arm.dof)
        self.adj: list[dict] = [dict() for _ in range(len(self._verts))]
        self.n_base = len(self._verts)
        self.apsp: Optional[np.ndarray] = None
        self._rows: dict = {}
        self._proxy: dict[int, int] = {}
        self._sorted_adj: dict[int, np.ndarray] = {}
        self._n_edits = 0
        self._csr_cached = None

    # -- basic structure ----------------------------------------------------

    @property
    def vertices(self) -> np.ndarray:
        return self._verts

    def __len__(self) -> int:
        return len(self._verts)

    def config(self, v: int) -> np.ndarray:
        return self._verts[v]

    def neighbors(self, v: int) -> np.ndarray:
        """Adjacent vertex indices in ascending order."""
        nb = self._sorted_adj.get(v)
        if nb is None:
            nb = np.array(sorted(self.adj[v]), dtype=np.int64)
            self._sorted_adj[v] = nb
        return nb

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def edges(self):
        for u, nbrs in enumerate(self.adj):
            for v, w in sorted(nbrs.items()):
                if u < v:
                    yield u, v, w

    def travel_time(self, qa, qb) -> float:
        return float(np.max(np.abs(np.asarray(qa) - np.asarray(qb)))) / self.vmax

    def _add_edge(self, u: int, v: int, w: float):
        self._proxy.pop(u, None)
        self._proxy.pop(v, None)
        self.adj[u][v] = w
        self.adj[v][u] = w
        self._sorted_adj.pop(u, None)
        self._sorted_adj.pop(v, None)
        self._n_edits += 1

    def _csr(self) -> csr_matrix:
        key = (len(self), self._n_edits)
        if self._csr_cached is not None and self._csr_cached[0] == key:
            return self._csr_cached[1]
        rows, cols, data = [], [], []
        for u, nbrs in enumerate(self.adj):
            for v, w in nbrs.items():
                rows.append(u)
                cols.append(v)
                # explicit zeros would be dropped by the sparse format
                data.append(w if w > 0.0 else 1e-300)
        n = len(self)
        mat = csr_matrix((data, (rows, cols)), shape=(n, n))
        self._csr_cached = (key, mat)
        return mat

    def components(self) -> np.ndarray:
        """Connected-component label per vertex."""
        return connected_components(self._csr(), directed=False)[1]

    # -- shortest paths -----------------------------------------------------

    def compute_apsp(self):
        if len(self) <= FULL_APSP_LIMIT:
            apsp = dijkstra(self._csr(), directed=False)
            # summation order differs per source; keep the table exactly symmetric
            self.apsp = np.minimum(apsp, apsp.T)
            self.apsp[self.apsp < 1e-200] = 0.0
        self._rows.clear()

    def _sssp(self, v: int) -> np.ndarray:
        """Single-source times from ``v`` on the graph as it is now; cached."""
        row = self._rows.get(v)
        if row is None:
            row = dijkstra(self._csr(), directed=False, indices=v)
            row[row < 1e-200] = 0.0
            self._rows[v] = row
        return row

    def _pair(self, u: int, v: int) -> float:
        if u == v:
            return 0.0
        if u in self._proxy:
            p = self._proxy[u]
            return self._pair(p, v) + self.travel_time(self._verts[p], self._verts[u])
        if v in self._proxy:
            return self._pair(v, u)
        if self.apsp is not None and u < self.n_base and v < self.n_base:
            return float(self.apsp[u, v])
        # the newer vertex's row was computed after the older one existed
        a, b = (u, v) if u > v else (v, u)
        return float(self._sssp(a)[b])

    def distances_from(self, v: int) -> np.ndarray:
        """Shortest travel time from ``v`` to every vertex (``inf`` if disconnected)."""
        n = len(self)
        key = ("full", v, n)
        row = self._rows.get(key)
        if row is not None:
            return row
        if v in self._proxy:
            p = self._proxy[v]
            row = self.distances_from(p) + self.travel_time(self._verts[p], self._verts[v])
            row[v] = 0.0
        else:
            if self.apsp is not None and v < self.n_base:
                row = np.empty(n)
                row[: self.n_base] = self.apsp[v]
                start = self.n_base
            else:
                src = self._sssp(v)
                row = np.empty(n)
                row[: len(src)] = src
                start = len(src) if v >= self.n_base or self.apsp is None else self.n_base
            for u in range(start, n):
                row[u] = self._pair(u, v)
            for u in self._proxy:
                if u < start:
                    row[u] = self._pair(u, v)
        self._rows[key] = row
        return row

    def heuristic_time(self, u: int, v) -> float:
        """Cached shortest-path time from vertex ``u`` to ``v``.

        ``v`` may be a vertex index or a free configuration; for the latter the
        estimate is the max joint displacement divided by the arm's velocity.
        Disconnected vertex pairs give ``inf``.
        """
        if isinstance(v, (int, np.integer)):
            return self._pair(int(u), int(v))
        return self.travel_time(self._verts[u], v)

    def nearest_connected(self, q) -> int:
        """Closest vertex (in travel time) that has at least one edge."""
        d = np.max(np.abs(self._verts - np.asarray(q)), axis=1)
        order = np.argsort(d, kind="stable")
        for v in order:
            if self.adj[v]:
                return int(v)
        return int(order[0])

    def estimate_to_config(self, u: int, q) -> float:
        """Heuristic for a configuration not in the roadmap, via its nearest connected vertex."""
        p = self.nearest_connected(q)
        return self.heuristic_time(u, p) + self.travel_time(self._verts[p], q)

    # -- mutation -----------------------------------------------------------

    def inject_vertex(self, q, checker: CollisionChecker) -> int:
        """Add ``q`` wired to its k nearest valid neighbors; returns its index.

        Cached shortest-path entries of existing vertices are left untouched.
        """
        q = np.asarray(q, dtype=float)
        if q.shape != (self.arm.dof,) or not self.arm.within_limits(q):
            raise RoadmapError("configuration outside joint limits")
        if not checker.arm_config_valid(self.arm_index, q):
            raise RoadmapError("configuration in collision")
        new = len(self._verts)
        k = prm_star_k(new + 1, self.arm.dof)
        d = np.max(np.abs(self._verts - q), axis=1) / self.vmax
        order = np.argsort(d, kind="stable")[:k]
        self._verts = np.vstack([self._verts, q])
        self.adj.append({})
        for v in order:
            v = int(v)
            if checker.arm_edge_valid(self.arm_index, self._verts[v], q):
                self._add_edge(v, new, float(d[v]))
        if not self.adj[new] and new > 0:
            self._proxy[new] = self.nearest_connected(q)
        return new

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": ROADMAP_SCHEMA,
            "arm": self.arm_index,
            "seed": self.seed,
            "scene": self.scene_digest,
            "n_base": self.n_base,
            "vertices": self._verts.tolist(),
            "edges": [[u, v, w] for u, v, w in self.edges()],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, scene: Scene) -> "ArmRoadmap":
        if d.get("schema") != ROADMAP_SCHEMA:
            raise RoadmapError(f"unsupported roadmap schema {d.get('schema')!r}")
        if d.get("scene") and d["scene"] != scene.digest():
            raise RoadmapError("roadmap was built for a different scene")
        arm = scene.arms[d["arm"]]
        rm = cls(d["arm"], arm, np.array(d["vertices"], dtype=float)[: d["n_base"]], d["seed"], d["scene"])
        rm._verts = np.array(d["vertices"], dtype=float).reshape(-1, arm.dof)
        rm.adj = [dict() for _ in range(len(rm._verts))]
        for u, v, w in d["edges"]:
            rm._add_edge(u, v, w)
        rm.compute_apsp()
        return rm


def build_arm_roadmap(scene: Scene, arm_index: int, n_vertices: int, seed: int,
                      checker: Optional[CollisionChecker] = None) -> ArmRoadmap:
    """Sample ``n_vertices`` valid configurations and connect each to its k(n) nearest."""
    if n_vertices < 2:
        raise RoadmapError("n_vertices must be at least 2")
    checker = checker or CollisionChecker(scene)
    arm = scene.arms[arm_index]
    rng = np.random.default_rng(seed)
    lo, hi = arm.lower, arm.upper
    samples = []
    attempts = 0
    while len(samples) < n_vertices:
        if attempts >= 100 * n_vertices:
            raise RoadmapError(
                f"arm {arm_index}: only {len(samples)} valid samples after {attempts} attempts"
            )
        attempts += 1
        q = rng.uniform(lo, hi)
        if checker.arm_config_valid(arm_index, q):
            samples.append(q)
    rm = ArmRoadmap(arm_index, arm, samples, seed, scene.digest())
    V = rm.vertices
    k = min(prm_star_k(n_vertices, arm.dof), n_vertices - 1)
    tree = cKDTree(V / arm.max_joint_velocity)
    _, idx = tree.query(V / arm.max_joint_velocity, k=k + 1, p=np.inf)
    pairs = set()
    for u in range(n_vertices):
        for v in np.atleast_1d(idx[u]).tolist():
            if v != u and v < n_vertices:
                pairs.add((min(u, v), max(u, v)))
    for u, v in sorted(pairs):
        if checker.arm_edge_valid(arm_index, V[u], V[v]):
            rm._add_edge(u, v, rm.travel_time(V[u], V[v]))
    rm.compute_apsp()
    return rm


def tensor_neighbors(roadmaps: Sequence[ArmRoadmap], V: Sequence[int]) -> list:
    """All tensor-roadmap neighbors of ``V``: each arm stays or moves to an adjacent vertex."""
    options = [[int(v)] + roadmaps[i].neighbors(int(v)).tolist() for i, v in enumerate(V)]
    ident = tuple(int(v) for v in V)
    return [c for c in itertools.product(*options) if c != ident]


def tensor_adjacent(roadmaps: Sequence[ArmRoadmap], A: Sequence[int], B: Sequence[int]) -> bool:
    """True iff B is a tensor neighbor of A (A != B)."""
    if tuple(A) == tuple(B):
        return False
    for rm, a, b in zip(roadmaps, A, B):
        if a != b and b not in rm.adj[a]:
            return False
    return True


def random_tensor_neighbor(roadmaps: Sequence[ArmRoadmap], V: Sequence[int], rng) -> Optional[tuple]:
    """Uniform choice per arm among stay/adjacent, rejecting the all-stay move."""
    degs = [roadmaps[i].degree(int(v)) for i, v in enumerate(V)]
    if not any(degs):
        return None
    while True:
        picks = [int(rng.integers(d + 1)) for d in degs]
        if any(picks):
            break
    out = []
    for i, (v, p) in enumerate(zip(V, picks)):
        out.append(int(v) if p == 0 else int(roadmaps[i].neighbors(int(v))[p - 1]))
    return tuple(out)


def tensor_duration(roadmaps: Sequence[ArmRoadmap], A: Iterable[int], B: Iterable[int]) -> float:
    """Composite edge time: the slowest arm's travel time."""
    best = 0.0
    for rm, a, b in zip(roadmaps, A, B):
        if a != b:
            w = rm.adj[a].get(b)
            if w is None:
                w = rm.travel_time(rm.config(a), rm.config(b))
            if w > best:
                best = w
    return best
