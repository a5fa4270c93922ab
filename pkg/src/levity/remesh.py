"""Metric-driven local remeshing: edge splits, collapses, flips and smoothing.

The remesher works on plain Python adjacency structures (a set of incident
triangles per vertex) and rebuilds a :class:`~levity.mesh.TriMesh` at the
end. Metrics are stored per vertex as ``(m11, m12, m22)``; vertices that are
created or moved get the P1 interpolant of the input metric field at their
position.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError, ParameterError
from .mesh import TriMesh
from .transfer import PointLocator

logger = logging.getLogger(__name__)

_Q_SCALE = 4.0 * math.sqrt(3.0)

INTERIOR, SLIDING, PINNED = 0, 1, 2


@dataclass
class AdaptParams:
    """Controls of :func:`adapt_mesh`.

    Edges longer than ``split_threshold`` (metric length) are split and
    edges shorter than ``collapse_threshold`` are collapsed. Flips are
    attempted on element pairs whose worst metric quality is below
    ``quality_floor``. ``boundary_tolerance`` is the snap distance used when
    interpolating the input metric. A smoothing move is skipped when it is
    shorter than ``min_move`` (metric length) or raises the worst quality of
    the surrounding elements by less than ``min_gain``. Smoothing runs in the
    first ``smoothing_passes`` passes only, so that the remaining passes can
    settle on a mesh where no split, collapse or flip applies.
    """

    split_threshold: float = math.sqrt(2.0)
    collapse_threshold: float = 1.0 / math.sqrt(2.0)
    max_passes: int = 20
    quality_floor: float = 0.9
    boundary_tolerance: float = None
    smoothing_sweeps: int = 1
    smoothing_passes: int = 8
    min_move: float = 1e-3
    min_gain: float = 1e-2
    collapse_quality: float = 0.2

    def __post_init__(self):
        if not self.collapse_threshold < 1.0 < self.split_threshold:
            raise ParameterError("thresholds must satisfy collapse < 1 < split")
        if self.max_passes < 1:
            raise ParameterError("max_passes must be at least 1")
        if not 0.0 < self.quality_floor <= 1.0:
            raise ParameterError("quality_floor must lie in (0, 1]")


@dataclass
class AdaptReport:
    passes: int = 0
    splits: int = 0
    collapses: int = 0
    flips: int = 0
    moves: int = 0
    converged: bool = False
    unit_fraction: float = 0.0
    warning: bool = False
    history: list = field(default_factory=list)


def _as_components(metric):
    metric = np.asarray(metric, dtype=float)
    if metric.ndim != 3 or metric.shape[1:] != (2, 2):
        raise ParameterError("metric must have shape (n, 2, 2)")
    comps = np.column_stack([metric[:, 0, 0], 0.5 * (metric[:, 0, 1] + metric[:, 1, 0]), metric[:, 1, 1]])
    det = comps[:, 0] * comps[:, 2] - comps[:, 1] ** 2
    if not (np.all(np.isfinite(comps)) and np.all(comps[:, 0] > 0) and np.all(det > 0)):
        raise ParameterError("metric is not symmetric positive definite at every vertex")
    return comps


def metric_edge_length(metric, a, b, vertices=None):
    """Length of the segment ``a``-``b`` in the mean of the endpoint metrics.

    ``metric`` is either a nodal (n, 2, 2) field, with ``a``/``b`` vertex
    ids into ``vertices``, or a pair of 2x2 tensors with ``a``/``b`` points.
    """
    if vertices is not None:
        Ma, Mb = metric[a], metric[b]
        pa, pb = vertices[a], vertices[b]
    else:
        Ma, Mb = metric
        pa, pb = a, b
    e = np.asarray(pb, dtype=float) - np.asarray(pa, dtype=float)
    return float(np.sqrt(e @ (0.5 * (np.asarray(Ma) + np.asarray(Mb))) @ e))


def implied_metric(mesh):
    """Nodal metric for which the elements of ``mesh`` are unit equilateral.

    Each element gets the unique tensor giving its three edges unit length;
    vertices take the area-weighted mean.
    """
    p = mesh.vertices[mesh.triangles]
    edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    A = np.stack([edges[..., 0] ** 2, 2 * edges[..., 0] * edges[..., 1], edges[..., 1] ** 2], axis=2)
    c = np.linalg.solve(A, np.ones(edges.shape[:2] + (1,)))[..., 0]
    M = np.stack([np.stack([c[:, 0], c[:, 1]], 1), np.stack([c[:, 1], c[:, 2]], 1)], 1)
    vt = mesh.vertex_triangles
    w = vt @ mesh.areas
    return ((vt @ (mesh.areas[:, None] * M.reshape(-1, 4))) / w[:, None]).reshape(-1, 2, 2)


class Remesher:
    """Single-use remeshing session on a copy of the input mesh."""

    def __init__(self, mesh, metric, params=None):
        self.params = params or AdaptParams()
        self.source = mesh
        comps = _as_components(metric)
        if len(comps) != mesh.n_vertices:
            raise ParameterError("one metric tensor per vertex is required")
        self._bg_metric = comps
        self._locator = PointLocator(mesh, self.params.boundary_tolerance)

        self.X = [tuple(p) for p in mesh.vertices.tolist()]
        self.M = [tuple(m) for m in comps.tolist()]
        self.alive = [True] * len(self.X)
        self.tris = [list(t) for t in mesh.triangles.tolist()]
        self.vt = [set() for _ in self.X]
        for k, t in enumerate(self.tris):
            for v in t:
                self.vt[v].add(k)
        self.bedge = {}
        for (a, b), lab in zip(mesh.boundary_edges.tolist(), mesh.edge_labels.tolist()):
            self.bedge[(min(a, b), max(a, b))] = lab
        self.kind = [INTERIOR] * len(self.X)
        for a, b in mesh.boundary_edges.tolist():
            self.kind[a] = self.kind[b] = SLIDING
        for v in np.flatnonzero(mesh.pinned_flags):
            self.kind[v] = PINNED
        self.report = AdaptReport()

    # -- geometry --------------------------------------------------------
    def _metric_at(self, p):
        elements, weights = self._locator.locate(np.array([p]))
        w = np.clip(weights[0], 0.0, None)
        m = (w / w.sum()) @ self._bg_metric[self.source.triangles[elements[0]]]
        return (float(m[0]), float(m[1]), float(m[2]))

    def length(self, a, b):
        (xa, ya), (xb, yb) = self.X[a], self.X[b]
        ma, mb = self.M[a], self.M[b]
        dx, dy = xb - xa, yb - ya
        q = (ma[0] + mb[0]) * dx * dx + 2.0 * (ma[1] + mb[1]) * dx * dy + (ma[2] + mb[2]) * dy * dy
        return math.sqrt(max(0.5 * q, 0.0))

    def _quality_of(self, i, j, k, pos=None):
        """Metric shape quality in (0, 1], negative for inverted triangles."""
        X = self.X
        (xi, yi), (xj, yj), (xk, yk) = X[i], X[j], X[k]
        if pos is not None:
            v, (px, py) = pos
            if v == i:
                xi, yi = px, py
            elif v == j:
                xj, yj = px, py
            elif v == k:
                xk, yk = px, py
        mi, mj, mk = self.M[i], self.M[j], self.M[k]
        m0 = (mi[0] + mj[0] + mk[0]) / 3.0
        m1 = (mi[1] + mj[1] + mk[1]) / 3.0
        m2 = (mi[2] + mj[2] + mk[2]) / 3.0
        area = 0.5 * ((xj - xi) * (yk - yi) - (yj - yi) * (xk - xi))
        s = 0.0
        for dx, dy in ((xj - xi, yj - yi), (xk - xj, yk - yj), (xi - xk, yi - yk)):
            s += m0 * dx * dx + 2.0 * m1 * dx * dy + m2 * dy * dy
        if s <= 0.0:
            return -1.0
        return _Q_SCALE * area * math.sqrt(max(m0 * m2 - m1 * m1, 0.0)) / s

    def quality(self, t):
        i, j, k = self.tris[t]
        return self._quality_of(i, j, k)

    def _area(self, i, j, k):
        (xi, yi), (xj, yj), (xk, yk) = self.X[i], self.X[j], self.X[k]
        return 0.5 * ((xj - xi) * (yk - yi) - (yj - yi) * (xk - xi))

    def _area_tol(self, i, j, k):
        (xi, yi), (xj, yj), (xk, yk) = self.X[i], self.X[j], self.X[k]
        scale = max(abs(xj - xi), abs(yj - yi), abs(xk - xi), abs(yk - yi))
        return 1e-12 * scale * scale

    # -- connectivity ----------------------------------------------------
    def neighbors(self, v):
        out = set()
        for t in self.vt[v]:
            out.update(self.tris[t])
        out.discard(v)
        return out

    def edge_tris(self, a, b):
        return self.vt[a] & self.vt[b]

    def edges(self):
        seen = set()
        for t in self.tris:
            if t is None:
                continue
            for u, v in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                seen.add((u, v) if u < v else (v, u))
        return sorted(seen)

    def _new_triangle(self, t):
        self.tris.append(list(t))
        k = len(self.tris) - 1
        for v in t:
            self.vt[v].add(k)
        return k

    def _delete_triangle(self, k):
        for v in self.tris[k]:
            self.vt[v].discard(k)
        self.tris[k] = None

    # -- split -----------------------------------------------------------
    def split(self, a, b):
        (xa, ya), (xb, yb) = self.X[a], self.X[b]
        p = (0.5 * (xa + xb), 0.5 * (ya + yb))
        m = len(self.X)
        self.X.append(p)
        self.M.append(self._metric_at(p))
        self.alive.append(True)
        self.vt.append(set())
        key = (min(a, b), max(a, b))
        label = self.bedge.pop(key, None)
        self.kind.append(INTERIOR if label is None else SLIDING)
        if label is not None:
            self.bedge[(min(a, m), max(a, m))] = label
            self.bedge[(min(b, m), max(b, m))] = label
        opposite = []
        for t in sorted(self.edge_tris(a, b)):
            tri = self.tris[t]
            r = tri.index(a)
            if tri[(r + 1) % 3] == b:
                u, w, c = a, b, tri[(r + 2) % 3]
            else:
                u, w, c = b, a, tri[(r + 1) % 3]
            # tri is (u, w, c) counter-clockwise
            self._delete_triangle(t)
            self.tris[t] = [u, m, c]
            for v in (u, m, c):
                self.vt[v].add(t)
            self._new_triangle((m, w, c))
            opposite.append(c)
        return m, opposite

    def split_pass(self):
        thr = self.params.split_threshold
        heap = [(-L, a, b) for a, b in self.edges() if (L := self.length(a, b)) > thr]
        heapq.heapify(heap)
        count = 0
        while heap:
            _, a, b = heapq.heappop(heap)
            if not self.edge_tris(a, b):
                continue
            m, opposite = self.split(a, b)
            count += 1
            for c in (a, b, *opposite):
                L = self.length(m, c)
                if L > thr:
                    heapq.heappush(heap, (-L, min(m, c), max(m, c)))
        return count

    # -- collapse --------------------------------------------------------
    def can_collapse(self, a, b):
        """Whether vertex ``a`` can be merged into ``b``."""
        kind = self.kind[a]
        if kind == PINNED:
            return False
        key = (min(a, b), max(a, b))
        if kind == SLIDING and key not in self.bedge:
            return False
        shared = self.edge_tris(a, b)
        if not shared:
            return False
        opposite = set()
        for t in shared:
            opposite.update(self.tris[t])
        opposite -= {a, b}
        na = self.neighbors(a)
        if (na & self.neighbors(b)) != opposite:
            return False
        thr = self.params.split_threshold
        for c in na:
            if c != b and c not in opposite and self.length(b, c) > thr:
                return False
        old_q = min(self.quality(t) for t in self.vt[a] | self.vt[b])
        guard = min(self.params.collapse_quality, old_q)
        for t in self.vt[a] - shared:
            i, j, k = (b if v == a else v for v in self.tris[t])
            if self._area(i, j, k) <= self._area_tol(i, j, k):
                return False
            if self._quality_of(i, j, k) < guard:
                return False
        return True

    def collapse(self, a, b):
        shared = self.edge_tris(a, b)
        for t in list(shared):
            self._delete_triangle(t)
        for t in list(self.vt[a]):
            tri = self.tris[t]
            tri[tri.index(a)] = b
            self.vt[b].add(t)
        self.vt[a] = set()
        key = (min(a, b), max(a, b))
        if key in self.bedge:
            del self.bedge[key]
            for k in [k for k in self.bedge if a in k]:
                label = self.bedge.pop(k)
                c = k[0] if k[1] == a else k[1]
                self.bedge[(min(b, c), max(b, c))] = label
        self.alive[a] = False

    def collapse_pass(self):
        thr = self.params.collapse_threshold
        cand = sorted((L, a, b) for a, b in self.edges() if (L := self.length(a, b)) < thr)
        count = 0
        for _, a, b in cand:
            if not (self.alive[a] and self.alive[b]) or not self.edge_tris(a, b):
                continue
            if self.length(a, b) >= thr:
                continue
            # remove the less constrained endpoint first
            for u, v in sorted(((a, b), (b, a)), key=lambda e: self.kind[e[0]]):
                if self.can_collapse(u, v):
                    self.collapse(u, v)
                    count += 1
                    break
        return count

    # -- flip ------------------------------------------------------------
    def try_flip(self, a, b):
        shared = self.edge_tris(a, b)
        if len(shared) != 2 or (min(a, b), max(a, b)) in self.bedge:
            return False
        t1, t2 = sorted(shared)
        tri = self.tris[t1]
        r = tri.index(a)
        if tri[(r + 1) % 3] != b:
            t1, t2 = t2, t1
            tri = self.tris[t1]
            r = tri.index(a)
        c = tri[(r + 2) % 3]
        d = next(v for v in self.tris[t2] if v != a and v != b)
        if self.edge_tris(c, d) or c == d:
            return False
        if self.length(c, d) > self.params.split_threshold:
            return False
        q_old = min(self.quality(t1), self.quality(t2))
        if q_old >= self.params.quality_floor:
            return False
        if self._area(a, d, c) <= self._area_tol(a, d, c) or self._area(d, b, c) <= self._area_tol(d, b, c):
            return False
        q_new = min(self._quality_of(a, d, c), self._quality_of(d, b, c))
        if q_new <= q_old + 1e-6:
            return False
        self._delete_triangle(t1)
        self._delete_triangle(t2)
        self.tris[t1] = [a, d, c]
        self.tris[t2] = [d, b, c]
        for t in (t1, t2):
            for v in self.tris[t]:
                self.vt[v].add(t)
        return True

    def flip_pass(self, sweeps=3):
        total = 0
        for _ in range(sweeps):
            count = sum(self.try_flip(a, b) for a, b in self.edges())
            total += count
            if count == 0:
                break
        return total

    # -- smoothing -------------------------------------------------------
    def smooth_vertex(self, v):
        nbrs = sorted(self.neighbors(v))
        if not nbrs:
            return False
        wsum = sx = sy = 0.0
        for c in nbrs:
            w = self.length(v, c)
            x, y = self.X[c]
            wsum += w
            sx += w * x
            sy += w * y
        if wsum <= 0.0:
            return False
        x0, y0 = self.X[v]
        target = (sx / wsum, sy / wsum)
        mv = self.M[v]
        dx, dy = target[0] - x0, target[1] - y0
        if math.sqrt(max(mv[0] * dx * dx + 2 * mv[1] * dx * dy + mv[2] * dy * dy, 0.0)) < self.params.min_move:
            return False
        ring = [self.tris[t] for t in self.vt[v]]
        q_old = min(self._quality_of(*t) for t in ring)
        for step in (1.0, 0.5, 0.25):
            p = (x0 + step * dx, y0 + step * dy)
            ok = True
            q_new = 1.0
            for i, j, k in ring:
                q = self._quality_of(i, j, k, pos=(v, p))
                if q <= 0.0:
                    ok = False
                    break
                q_new = min(q_new, q)
            if not ok or q_new < q_old + self.params.min_gain:
                continue
            m_old = self.M[v]
            self.X[v] = p
            self.M[v] = self._metric_at(p)
            if min(self._quality_of(*t) for t in ring) <= 0.0:
                self.X[v], self.M[v] = (x0, y0), m_old
                continue
            return True
        return False

    def smooth_pass(self):
        moved = 0
        for _ in range(self.params.smoothing_sweeps):
            for v in range(len(self.X)):
                if self.alive[v] and self.kind[v] == INTERIOR and self.smooth_vertex(v):
                    moved += 1
        return moved

    # -- driver ----------------------------------------------------------
    def unit_fraction(self):
        lo, hi = self.params.collapse_threshold, self.params.split_threshold
        lengths = [self.length(a, b) for a, b in self.edges()]
        return float(np.mean([lo <= L <= hi for L in lengths])) if lengths else 1.0

    def _check(self):
        for t in self.tris:
            if t is not None and self._area(*t) <= 0.0:
                raise MeshError("remeshing produced an inverted element")

    def run(self):
        rep = self.report
        for _ in range(self.params.max_passes):
            s = self.split_pass()
            c = self.collapse_pass()
            f = self.flip_pass()
            # a pass without topological change ends the loop before smoothing,
            # so a mesh that already conforms is returned untouched
            done = s + c + f == 0
            m = self.smooth_pass() if not done and rep.passes < self.params.smoothing_passes else 0
            self._check()
            rep.passes += 1
            rep.splits += s
            rep.collapses += c
            rep.flips += f
            rep.moves += m
            rep.history.append((s, c, f, m))
            logger.debug("remesh pass %d: %d splits, %d collapses, %d flips, %d moves", rep.passes, s, c, f, m)
            if done:
                rep.converged = True
                break
        rep.unit_fraction = self.unit_fraction()
        rep.warning = rep.unit_fraction < 0.9
        if rep.warning:
            logger.warning("only %.1f%% of edges have unit metric length", 100 * rep.unit_fraction)
        return self.build(), rep

    def build(self):
        index = np.full(len(self.X), -1, dtype=np.int64)
        keep = [v for v in range(len(self.X)) if self.alive[v] and self.vt[v]]
        index[keep] = np.arange(len(keep))
        vertices = np.array([self.X[v] for v in keep])
        tris = index[np.array([t for t in self.tris if t is not None], dtype=np.int64)]
        keys = list(self.bedge)
        bedges = index[np.array(keys, dtype=np.int64).reshape(-1, 2)]
        labels = np.array([self.bedge[k] for k in keys], dtype=np.int64)
        return TriMesh(vertices, tris, bedges, labels)

    def metric_field(self):
        keep = [v for v in range(len(self.X)) if self.alive[v] and self.vt[v]]
        comps = np.array([self.M[v] for v in keep])
        return np.stack([np.stack([comps[:, 0], comps[:, 1]], 1), np.stack([comps[:, 1], comps[:, 2]], 1)], 1)


def adapt_mesh(mesh, metric, params=None, report=False):
    """Remesh ``mesh`` so that its edges have unit length in ``metric``.

    Parameters
    ----------
    mesh : TriMesh
        Input mesh; not modified.
    metric : (n, 2, 2) array_like
        Symmetric positive definite tensor per vertex of ``mesh``.
    params : AdaptParams, optional
    report : bool
        Also return the :class:`AdaptReport` (pass counts, unit-length
        fraction, warning flag).
    """
    new_mesh, rep = Remesher(mesh, metric, params).run()
    return (new_mesh, rep) if report else new_mesh
