"""Pure-Python collision kernels.

Reference implementation of the planar capsule/polygon checks used by every
planner. ``mmdrrt._ckernels`` implements the same contract in Cython; the
two must agree bit-for-bit on the boolean results.

Layout of the packed model (shared with the compiled backend):

    dofs      int32[n_arms]        joints per arm
    base      float64[n_arms, 3]   arm base pose (x, y, theta)
    lengths   float64[sum(dofs)]   link lengths, arm-major
    radius    float64[n_arms]      capsule radius of every link of the arm
    pverts    float64[P, 2]        obstacle polygon vertices (CCW), concatenated
    pstart    int32[n_poly + 1]    polygon offsets into ``pverts``
    circles   float64[C, 3]        (cx, cy, r)
    objv      float64[M, 2]        object polygon in its own frame (CCW)
"""

import math

import numpy as np

_EPS = 1e-12


def seg_seg_dist2(p1x, p1y, q1x, q1y, p2x, p2y, q2x, q2y):
    """Squared distance between segments p1q1 and p2q2."""
    d1x, d1y = q1x - p1x, q1y - p1y
    d2x, d2y = q2x - p2x, q2y - p2y
    rx, ry = p1x - p2x, p1y - p2y
    a = d1x * d1x + d1y * d1y
    e = d2x * d2x + d2y * d2y
    f = d2x * rx + d2y * ry
    if a <= _EPS and e <= _EPS:
        return rx * rx + ry * ry
    if a <= _EPS:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1x * rx + d1y * ry
        if e <= _EPS:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1x * d2x + d1y * d2y
            denom = a * e - b * b
            if denom != 0.0:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    dx = p1x + d1x * s - (p2x + d2x * t)
    dy = p1y + d1y * s - (p2y + d2y * t)
    return dx * dx + dy * dy


def point_seg_dist2(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    l2 = dx * dx + dy * dy
    if l2 <= _EPS:
        t = 0.0
    else:
        t = min(max(((px - ax) * dx + (py - ay) * dy) / l2, 0.0), 1.0)
    ex = ax + t * dx - px
    ey = ay + t * dy - py
    return ex * ex + ey * ey


def point_in_convex(px, py, verts):
    """Strict containment test for a CCW convex polygon."""
    n = len(verts)
    for k in range(n):
        ax, ay = verts[k]
        bx, by = verts[(k + 1) % n]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) <= 0.0:
            return False
    return True


def capsule_hits_polygon(ax, ay, bx, by, r, verts):
    if point_in_convex(ax, ay, verts) or point_in_convex(bx, by, verts):
        return True
    n = len(verts)
    best = math.inf
    for k in range(n):
        cx, cy = verts[k]
        dx, dy = verts[(k + 1) % n]
        d2 = seg_seg_dist2(ax, ay, bx, by, cx, cy, dx, dy)
        if d2 < best:
            best = d2
    return best < r * r or best <= _EPS


def polygons_overlap(va, vb):
    """Separating-axis test for two convex polygons (touching is not overlap)."""
    for verts in (va, vb):
        n = len(verts)
        for k in range(n):
            ex = verts[(k + 1) % n][0] - verts[k][0]
            ey = verts[(k + 1) % n][1] - verts[k][1]
            nx, ny = -ey, ex
            amin = amax = va[0][0] * nx + va[0][1] * ny
            for x, y in va[1:]:
                p = x * nx + y * ny
                amin = min(amin, p)
                amax = max(amax, p)
            bmin = bmax = vb[0][0] * nx + vb[0][1] * ny
            for x, y in vb[1:]:
                p = x * nx + y * ny
                bmin = min(bmin, p)
                bmax = max(bmax, p)
            if amax <= bmin or bmax <= amin:
                return False
    return True


def polygon_hits_circle(verts, cx, cy, r):
    if point_in_convex(cx, cy, verts):
        return True
    n = len(verts)
    for k in range(n):
        ax, ay = verts[k]
        bx, by = verts[(k + 1) % n]
        if point_seg_dist2(cx, cy, ax, ay, bx, by) < r * r:
            return True
    return False


class CollisionModel:
    """Packed scene geometry with configuration and edge validity checks."""

    backend = "python"

    def __init__(self, dofs, base, lengths, radius, pverts, pstart, circles, objv):
        self.dofs = np.ascontiguousarray(dofs, dtype=np.int32)
        self.base = np.ascontiguousarray(base, dtype=np.float64).reshape(-1, 3)
        self.lengths = np.ascontiguousarray(lengths, dtype=np.float64)
        self.radius = np.ascontiguousarray(radius, dtype=np.float64)
        self.pverts = np.ascontiguousarray(pverts, dtype=np.float64).reshape(-1, 2)
        self.pstart = np.ascontiguousarray(pstart, dtype=np.int32)
        self.circles = np.ascontiguousarray(circles, dtype=np.float64).reshape(-1, 3)
        self.objv = np.ascontiguousarray(objv, dtype=np.float64).reshape(-1, 2)
        self.n_arms = len(self.dofs)
        self.jstart = np.concatenate([[0], np.cumsum(self.dofs)]).astype(np.int32)
        self.polygons = [
            [tuple(v) for v in self.pverts[self.pstart[k]:self.pstart[k + 1]]]
            for k in range(len(self.pstart) - 1)
        ]
        # plain-float mirrors; same IEEE arithmetic as the arrays, less overhead
        self._base = self.base.tolist()
        self._len = self.lengths.tolist()
        self._rad = self.radius.tolist()
        self._circ = self.circles.tolist()
        self._js = self.jstart.tolist()
        self.n_checks = 0

    def link_points(self, q):
        """Joint positions per arm: list of ``d_i + 1`` (x, y) points, and EE angles."""
        q = [float(v) for v in q]
        pts, angles = [], []
        for a in range(self.n_arms):
            x, y, th = self._base[a]
            arm_pts = [(x, y)]
            for j in range(self._js[a], self._js[a + 1]):
                th += q[j]
                x += self._len[j] * math.cos(th)
                y += self._len[j] * math.sin(th)
                arm_pts.append((x, y))
            pts.append(arm_pts)
            angles.append(th)
        return pts, angles

    def object_vertices(self, ee, ee_theta, grasp):
        gx, gy, gth = grasp
        c, s = math.cos(ee_theta), math.sin(ee_theta)
        ox = ee[0] + c * gx - s * gy
        oy = ee[1] + s * gx + c * gy
        oth = ee_theta + gth
        c, s = math.cos(oth), math.sin(oth)
        return [(ox + c * x - s * y, oy + s * x + c * y) for x, y in self.objv]

    def config_valid(self, q, holder=-1, grasp=None, mask=None):
        self.n_checks += 1
        return self._config_valid(q, holder, grasp, mask)

    def _config_valid(self, q, holder, grasp, mask):
        pts, angles = self.link_points(q)
        arms = [a for a in range(self.n_arms) if mask is None or mask[a]]
        # arm against static obstacles
        for a in arms:
            r = self._rad[a]
            p = pts[a]
            for j in range(len(p) - 1):
                ax, ay = p[j]
                bx, by = p[j + 1]
                for verts in self.polygons:
                    if capsule_hits_polygon(ax, ay, bx, by, r, verts):
                        return False
                for cx, cy, cr in self._circ:
                    rr = cr + r
                    if point_seg_dist2(cx, cy, ax, ay, bx, by) < rr * rr:
                        return False
        # self collision, non-adjacent links only
        for a in arms:
            r = 2.0 * self._rad[a]
            p = pts[a]
            for i in range(len(p) - 1):
                for j in range(i + 2, len(p) - 1):
                    d2 = seg_seg_dist2(*p[i], *p[i + 1], *p[j], *p[j + 1])
                    if d2 < r * r:
                        return False
        # arm against arm
        for ia, a in enumerate(arms):
            for b in arms[ia + 1:]:
                rr = self._rad[a] + self._rad[b]
                rr = rr * rr
                pa, pb = pts[a], pts[b]
                for i in range(len(pa) - 1):
                    for j in range(len(pb) - 1):
                        if seg_seg_dist2(*pa[i], *pa[i + 1], *pb[j], *pb[j + 1]) < rr:
                            return False
        if holder >= 0 and len(self.objv) >= 3:
            obj = self.object_vertices(pts[holder][-1], angles[holder], grasp)
            for verts in self.polygons:
                if polygons_overlap(obj, verts):
                    return False
            for cx, cy, cr in self._circ:
                if polygon_hits_circle(obj, cx, cy, cr):
                    return False
            for a in arms:
                p = pts[a]
                last = len(p) - 2 if a == holder else len(p) - 1
                for j in range(last):
                    if capsule_hits_polygon(*p[j], *p[j + 1], self._rad[a], obj):
                        return False
        return True

    def edge_valid(self, qa, qb, step, holder=-1, grasp=None, mask=None):
        qa = np.asarray(qa, dtype=np.float64)
        qb = np.asarray(qb, dtype=np.float64)
        # canonical direction keeps the check exactly symmetric
        if tuple(qb) < tuple(qa):
            qa, qb = qb, qa
        span = 0.0
        for a in range(self.n_arms):
            if mask is None or mask[a]:
                for j in range(self.jstart[a], self.jstart[a + 1]):
                    span = max(span, abs(qb[j] - qa[j]))
        n = 1
        while span / n > step:
            n *= 2
        delta = qb - qa
        for t in _dyadic_order(n):
            self.n_checks += 1
            if not self._config_valid(qa + (t / n) * delta, holder, grasp, mask):
                return False
        return True


def _dyadic_order(n):
    """Grid indices 0..n (n a power of two), endpoints first then by bisection level."""
    yield 0
    if n == 0:
        return
    yield n
    stride = n
    while stride > 1:
        half = stride // 2
        for k in range(half, n, stride):
            yield k
        stride = half
