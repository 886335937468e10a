# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled collision kernels; same contract as ``mmdrrt._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, fabs

cnp.import_array()

cdef double EPS = 1e-12


cdef inline double _clamp01(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef double seg_seg_dist2(double p1x, double p1y, double q1x, double q1y,
                          double p2x, double p2y, double q2x, double q2y) noexcept nogil:
    cdef double d1x = q1x - p1x, d1y = q1y - p1y
    cdef double d2x = q2x - p2x, d2y = q2y - p2y
    cdef double rx = p1x - p2x, ry = p1y - p2y
    cdef double a = d1x * d1x + d1y * d1y
    cdef double e = d2x * d2x + d2y * d2y
    cdef double f = d2x * rx + d2y * ry
    cdef double s, t, b, c, denom, dx, dy
    if a <= EPS and e <= EPS:
        return rx * rx + ry * ry
    if a <= EPS:
        s = 0.0
        t = _clamp01(f / e)
    else:
        c = d1x * rx + d1y * ry
        if e <= EPS:
            t = 0.0
            s = _clamp01(-c / a)
        else:
            b = d1x * d2x + d1y * d2y
            denom = a * e - b * b
            if denom != 0.0:
                s = _clamp01((b * f - c * e) / denom)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = _clamp01(-c / a)
            elif t > 1.0:
                t = 1.0
                s = _clamp01((b - c) / a)
    dx = p1x + d1x * s - (p2x + d2x * t)
    dy = p1y + d1y * s - (p2y + d2y * t)
    return dx * dx + dy * dy


cdef double point_seg_dist2(double px, double py, double ax, double ay,
                            double bx, double by) noexcept nogil:
    cdef double dx = bx - ax, dy = by - ay
    cdef double l2 = dx * dx + dy * dy
    cdef double t, ex, ey
    if l2 <= EPS:
        t = 0.0
    else:
        t = _clamp01(((px - ax) * dx + (py - ay) * dy) / l2)
    ex = ax + t * dx - px
    ey = ay + t * dy - py
    return ex * ex + ey * ey


cdef bint point_in_convex(double px, double py, double[:, ::1] v, int lo, int hi) noexcept nogil:
    cdef int n = hi - lo, k
    cdef double ax, ay, bx, by
    for k in range(n):
        ax = v[lo + k, 0]
        ay = v[lo + k, 1]
        bx = v[lo + (k + 1) % n, 0]
        by = v[lo + (k + 1) % n, 1]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) <= 0.0:
            return False
    return True


cdef bint capsule_hits_polygon(double ax, double ay, double bx, double by, double r,
                               double[:, ::1] v, int lo, int hi) noexcept nogil:
    cdef int n = hi - lo, k
    cdef double best = 1e300, d2
    if point_in_convex(ax, ay, v, lo, hi) or point_in_convex(bx, by, v, lo, hi):
        return True
    for k in range(n):
        d2 = seg_seg_dist2(ax, ay, bx, by, v[lo + k, 0], v[lo + k, 1],
                           v[lo + (k + 1) % n, 0], v[lo + (k + 1) % n, 1])
        if d2 < best:
            best = d2
    return best < r * r or best <= EPS


cdef bint _axes_separate(double[:, ::1] axes_src, int alo, int ahi,
                         double[:, ::1] va, int la, int ha,
                         double[:, ::1] vb, int lb, int hb) noexcept nogil:
    cdef int n = ahi - alo, k, i
    cdef double ex, ey, nx, ny, p, amin, amax, bmin, bmax
    for k in range(n):
        ex = axes_src[alo + (k + 1) % n, 0] - axes_src[alo + k, 0]
        ey = axes_src[alo + (k + 1) % n, 1] - axes_src[alo + k, 1]
        nx = -ey
        ny = ex
        amin = va[la, 0] * nx + va[la, 1] * ny
        amax = amin
        for i in range(la + 1, ha):
            p = va[i, 0] * nx + va[i, 1] * ny
            if p < amin:
                amin = p
            if p > amax:
                amax = p
        bmin = vb[lb, 0] * nx + vb[lb, 1] * ny
        bmax = bmin
        for i in range(lb + 1, hb):
            p = vb[i, 0] * nx + vb[i, 1] * ny
            if p < bmin:
                bmin = p
            if p > bmax:
                bmax = p
        if amax <= bmin or bmax <= amin:
            return True
    return False


cdef bint polygons_overlap(double[:, ::1] va, int la, int ha,
                           double[:, ::1] vb, int lb, int hb) noexcept nogil:
    if _axes_separate(va, la, ha, va, la, ha, vb, lb, hb):
        return False
    if _axes_separate(vb, lb, hb, va, la, ha, vb, lb, hb):
        return False
    return True


cdef bint polygon_hits_circle(double[:, ::1] v, int lo, int hi,
                              double cx, double cy, double r) noexcept nogil:
    cdef int n = hi - lo, k
    if point_in_convex(cx, cy, v, lo, hi):
        return True
    for k in range(n):
        if point_seg_dist2(cx, cy, v[lo + k, 0], v[lo + k, 1],
                           v[lo + (k + 1) % n, 0], v[lo + (k + 1) % n, 1]) < r * r:
            return True
    return False


cdef class CollisionModel:
    """Packed scene geometry with configuration and edge validity checks."""

    cdef readonly object dofs_arr, base_arr, lengths_arr, radius_arr
    cdef readonly object pverts_arr, pstart_arr, circles_arr, objv_arr
    cdef int[::1] dofs
    cdef int[::1] jstart
    cdef int[::1] pt_start
    cdef double[:, ::1] base
    cdef double[::1] lengths
    cdef double[::1] radius
    cdef double[:, ::1] pverts
    cdef int[::1] pstart
    cdef double[:, ::1] circles
    cdef double[:, ::1] objv
    cdef double[:, ::1] pts
    cdef double[::1] ee_theta
    cdef double[:, ::1] objw
    cdef double[::1] qbuf
    cdef unsigned char[::1] mask_all
    cdef readonly int n_arms
    cdef readonly int n_joints
    cdef public long long n_checks

    backend = "cython"

    def __init__(self, dofs, base, lengths, radius, pverts, pstart, circles, objv):
        self.dofs_arr = np.ascontiguousarray(dofs, dtype=np.int32)
        self.base_arr = np.ascontiguousarray(base, dtype=np.float64).reshape(-1, 3)
        self.lengths_arr = np.ascontiguousarray(lengths, dtype=np.float64)
        self.radius_arr = np.ascontiguousarray(radius, dtype=np.float64)
        self.pverts_arr = np.ascontiguousarray(pverts, dtype=np.float64).reshape(-1, 2)
        self.pstart_arr = np.ascontiguousarray(pstart, dtype=np.int32)
        self.circles_arr = np.ascontiguousarray(circles, dtype=np.float64).reshape(-1, 3)
        self.objv_arr = np.ascontiguousarray(objv, dtype=np.float64).reshape(-1, 2)
        self.dofs = self.dofs_arr
        self.base = self.base_arr
        self.lengths = self.lengths_arr
        self.radius = self.radius_arr
        self.pverts = self.pverts_arr
        self.pstart = self.pstart_arr
        self.circles = self.circles_arr
        self.objv = self.objv_arr
        self.n_arms = len(self.dofs_arr)
        js = np.concatenate([[0], np.cumsum(self.dofs_arr)]).astype(np.int32)
        self.jstart = js
        self.n_joints = int(js[-1])
        self.pt_start = (js + np.arange(len(js), dtype=np.int32)).astype(np.int32)
        self.pts = np.zeros((self.n_joints + self.n_arms, 2))
        self.ee_theta = np.zeros(self.n_arms)
        self.objw = np.zeros((max(len(self.objv_arr), 1), 2))
        self.qbuf = np.zeros(max(self.n_joints, 1))
        self.mask_all = np.ones(self.n_arms, dtype=np.uint8)
        self.n_checks = 0

    @property
    def dofs_np(self):
        return self.dofs_arr

    cdef void _fk(self, double[::1] q) noexcept nogil:
        cdef int a, j, p
        cdef double x, y, th
        for a in range(self.n_arms):
            x = self.base[a, 0]
            y = self.base[a, 1]
            th = self.base[a, 2]
            p = self.pt_start[a]
            self.pts[p, 0] = x
            self.pts[p, 1] = y
            for j in range(self.jstart[a], self.jstart[a + 1]):
                th += q[j]
                x += self.lengths[j] * cos(th)
                y += self.lengths[j] * sin(th)
                p += 1
                self.pts[p, 0] = x
                self.pts[p, 1] = y
            self.ee_theta[a] = th

    cdef void _place_object(self, int holder, double gx, double gy, double gth) noexcept nogil:
        cdef int p = self.pt_start[holder + 1] - 1
        cdef double th = self.ee_theta[holder]
        cdef double c = cos(th), s = sin(th)
        cdef double ox = self.pts[p, 0] + c * gx - s * gy
        cdef double oy = self.pts[p, 1] + s * gx + c * gy
        cdef double oth = th + gth
        cdef int k
        c = cos(oth)
        s = sin(oth)
        for k in range(self.objv.shape[0]):
            self.objw[k, 0] = ox + c * self.objv[k, 0] - s * self.objv[k, 1]
            self.objw[k, 1] = oy + s * self.objv[k, 0] + c * self.objv[k, 1]

    cdef bint _valid(self, double[::1] q, int holder, double gx, double gy, double gth,
                     unsigned char[::1] mask) noexcept nogil:
        cdef int a, b, i, j, k, pa, pb, na, nb, last
        cdef int npoly = self.pstart.shape[0] - 1
        cdef int ncirc = self.circles.shape[0]
        cdef int nobj = self.objv.shape[0]
        cdef double r, rr, ax, ay, bx, by
        self._fk(q)
        # arm against static obstacles
        for a in range(self.n_arms):
            if not mask[a]:
                continue
            r = self.radius[a]
            pa = self.pt_start[a]
            for i in range(self.dofs[a]):
                ax = self.pts[pa + i, 0]
                ay = self.pts[pa + i, 1]
                bx = self.pts[pa + i + 1, 0]
                by = self.pts[pa + i + 1, 1]
                for k in range(npoly):
                    if capsule_hits_polygon(ax, ay, bx, by, r, self.pverts,
                                            self.pstart[k], self.pstart[k + 1]):
                        return False
                for k in range(ncirc):
                    rr = self.circles[k, 2] + r
                    if point_seg_dist2(self.circles[k, 0], self.circles[k, 1],
                                       ax, ay, bx, by) < rr * rr:
                        return False
        # self collision, non-adjacent links only
        for a in range(self.n_arms):
            if not mask[a]:
                continue
            r = 2.0 * self.radius[a]
            pa = self.pt_start[a]
            na = self.dofs[a]
            for i in range(na):
                for j in range(i + 2, na):
                    if seg_seg_dist2(self.pts[pa + i, 0], self.pts[pa + i, 1],
                                     self.pts[pa + i + 1, 0], self.pts[pa + i + 1, 1],
                                     self.pts[pa + j, 0], self.pts[pa + j, 1],
                                     self.pts[pa + j + 1, 0], self.pts[pa + j + 1, 1]) < r * r:
                        return False
        # arm against arm
        for a in range(self.n_arms):
            if not mask[a]:
                continue
            pa = self.pt_start[a]
            na = self.dofs[a]
            for b in range(a + 1, self.n_arms):
                if not mask[b]:
                    continue
                rr = self.radius[a] + self.radius[b]
                rr = rr * rr
                pb = self.pt_start[b]
                nb = self.dofs[b]
                for i in range(na):
                    for j in range(nb):
                        if seg_seg_dist2(self.pts[pa + i, 0], self.pts[pa + i, 1],
                                         self.pts[pa + i + 1, 0], self.pts[pa + i + 1, 1],
                                         self.pts[pb + j, 0], self.pts[pb + j, 1],
                                         self.pts[pb + j + 1, 0], self.pts[pb + j + 1, 1]) < rr:
                            return False
        if holder >= 0 and nobj >= 3:
            self._place_object(holder, gx, gy, gth)
            for k in range(npoly):
                if polygons_overlap(self.objw, 0, nobj, self.pverts,
                                    self.pstart[k], self.pstart[k + 1]):
                    return False
            for k in range(ncirc):
                if polygon_hits_circle(self.objw, 0, nobj, self.circles[k, 0],
                                       self.circles[k, 1], self.circles[k, 2]):
                    return False
            for a in range(self.n_arms):
                if not mask[a]:
                    continue
                pa = self.pt_start[a]
                last = self.dofs[a] - 1 if a == holder else self.dofs[a]
                for i in range(last):
                    if capsule_hits_polygon(self.pts[pa + i, 0], self.pts[pa + i, 1],
                                            self.pts[pa + i + 1, 0], self.pts[pa + i + 1, 1],
                                            self.radius[a], self.objw, 0, nobj):
                        return False
        return True

    def link_points(self, q):
        """Joint positions per arm: list of ``d_i + 1`` (x, y) points, and EE angles."""
        cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
        self._fk(qv)
        pts = np.asarray(self.pts)
        out = []
        for a in range(self.n_arms):
            lo = self.pt_start[a]
            hi = self.pt_start[a + 1]
            out.append([(float(pts[i, 0]), float(pts[i, 1])) for i in range(lo, hi)])
        return out, [float(t) for t in np.asarray(self.ee_theta)]

    def config_valid(self, q, int holder=-1, grasp=None, mask=None):
        cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
        cdef unsigned char[::1] m = self.mask_all if mask is None else np.ascontiguousarray(mask, dtype=np.uint8)
        cdef double gx = 0.0, gy = 0.0, gth = 0.0
        if holder >= 0:
            gx, gy, gth = grasp
        self.n_checks += 1
        return bool(self._valid(qv, holder, gx, gy, gth, m))

    def edge_valid(self, qa, qb, double step, int holder=-1, grasp=None, mask=None):
        cdef double[::1] a = np.ascontiguousarray(qa, dtype=np.float64)
        cdef double[::1] b = np.ascontiguousarray(qb, dtype=np.float64)
        cdef unsigned char[::1] m = self.mask_all if mask is None else np.ascontiguousarray(mask, dtype=np.uint8)
        cdef double gx = 0.0, gy = 0.0, gth = 0.0
        if holder >= 0:
            gx, gy, gth = grasp
        return bool(self._edge(a, b, step, holder, gx, gy, gth, m))

    cdef bint _edge(self, double[::1] qa, double[::1] qb, double step, int holder,
                    double gx, double gy, double gth, unsigned char[::1] mask):
        cdef int nj = self.n_joints, j, a
        cdef double[::1] tmp
        cdef double span = 0.0, d
        cdef long long n = 1, k, stride, half
        cdef double[::1] q = self.qbuf
        # canonical direction keeps the check exactly symmetric
        for j in range(nj):
            if qb[j] < qa[j]:
                tmp = qa
                qa = qb
                qb = tmp
                break
            if qb[j] > qa[j]:
                break
        for a in range(self.n_arms):
            if not mask[a]:
                continue
            for j in range(self.jstart[a], self.jstart[a + 1]):
                d = fabs(qb[j] - qa[j])
                if d > span:
                    span = d
        while span / n > step:
            n *= 2
        with nogil:
            if not self._at(qa, qb, 0, n, holder, gx, gy, gth, mask):
                return False
            if not self._at(qa, qb, n, n, holder, gx, gy, gth, mask):
                return False
            stride = n
            while stride > 1:
                half = stride // 2
                k = half
                while k < n:
                    if not self._at(qa, qb, k, n, holder, gx, gy, gth, mask):
                        return False
                    k += stride
                stride = half
        return True

    cdef bint _at(self, double[::1] qa, double[::1] qb, long long k, long long n, int holder,
                  double gx, double gy, double gth, unsigned char[::1] mask) noexcept nogil:
        cdef int j
        cdef double t = (<double>k) / (<double>n)
        for j in range(self.n_joints):
            self.qbuf[j] = qa[j] + t * (qb[j] - qa[j])
        self.n_checks += 1
        return self._valid(self.qbuf, holder, gx, gy, gth, mask)
