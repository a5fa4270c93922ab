"""Point location on a triangulation and P1 interpolation between meshes."""

import numpy as np

from .errors import LocationError

_EPS = 1e-9


class PointLocator:
    """Uniform background grid over the bounding box of a mesh.

    Every cell stores the ids (ascending) of the triangles whose bounding box
    overlaps it, so a query only tests the triangles listed in its cell.

    Parameters
    ----------
    mesh : TriMesh
    boundary_tolerance : float, optional
        Points up to this distance outside the mesh snap to the nearest
        element. Defaults to ``1e-8`` times the bounding-box diagonal.
    """

    def __init__(self, mesh, boundary_tolerance=None):
        self.mesh = mesh
        v = mesh.vertices
        self.lo = v.min(axis=0)
        span = np.maximum(v.max(axis=0) - self.lo, 1e-300)
        diag = float(np.hypot(*span))
        self.boundary_tolerance = 1e-8 * diag if boundary_tolerance is None else float(boundary_tolerance)
        m = mesh.n_triangles
        cell = np.sqrt(span[0] * span[1] / max(m, 1)) if span.min() > 1e-300 else diag / max(m, 1)
        self.shape = np.maximum(1, np.ceil(span / cell).astype(np.int64))
        self.cell = span / self.shape

        p = v[mesh.triangles]
        lo = self._cell_index(p.min(axis=1))
        hi = self._cell_index(p.max(axis=1))
        nx = hi[:, 0] - lo[:, 0] + 1
        ny = hi[:, 1] - lo[:, 1] + 1
        counts = nx * ny
        tri = np.repeat(np.arange(m), counts)
        # offset of each entry within its triangle's cell block
        local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cx = lo[tri, 0] + local % nx[tri]
        cy = lo[tri, 1] + local // nx[tri]
        cells = cy * self.shape[0] + cx
        order = np.lexsort((tri, cells))
        self._tris = tri[order]
        self._indptr = np.concatenate(
            [[0], np.cumsum(np.bincount(cells, minlength=int(self.shape.prod())))]
        )

    def _cell_index(self, pts):
        idx = np.floor((pts - self.lo) / self.cell).astype(np.int64)
        return np.clip(idx, 0, self.shape - 1)

    def _barycentric(self, tris, pts):
        p = self.mesh.vertices[self.mesh.triangles[tris]]
        a, b, c = p[:, 0], p[:, 1], p[:, 2]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        l1 = ((pts[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (pts[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (pts[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (pts[:, 0] - a[:, 0])) / det
        return np.column_stack([1.0 - l1 - l2, l1, l2])

    def locate(self, points):
        """Containing element and barycentric weights for each point.

        Returns ``(elements, weights)`` with shapes (k,) and (k, 3). Ties
        (points on shared edges or vertices) go to the lowest element id.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        k = len(pts)
        elements = np.full(k, -1, dtype=np.int64)
        weights = np.zeros((k, 3))
        if k == 0:
            return elements, weights
        cells = self._cell_index(pts)
        cid = cells[:, 1] * self.shape[0] + cells[:, 0]
        start, stop = self._indptr[cid], self._indptr[cid + 1]
        n = stop - start
        owner = np.repeat(np.arange(k), n)
        pos = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n) + np.repeat(start, n)
        cand = self._tris[pos]
        bary = self._barycentric(cand, pts[owner])
        inside = np.all(bary >= -_EPS, axis=1) & np.all(bary <= 1.0 + _EPS, axis=1)
        hit = np.flatnonzero(inside)
        # candidates are sorted by element id within a cell: keep the first hit
        first = np.unique(owner[hit], return_index=True)
        elements[first[0]] = cand[hit[first[1]]]
        weights[first[0]] = bary[hit[first[1]]]

        missing = np.flatnonzero(elements < 0)
        for i in missing:
            elements[i], weights[i] = self._snap(pts[i])
        return elements, weights

    def _snap(self, p):
        # closest point over all elements; only used for points marginally outside
        d, w = _closest_on_triangles(self.mesh.vertices[self.mesh.triangles], p)
        j = int(np.argmin(d))
        if d[j] > self.boundary_tolerance:
            raise LocationError(f"point ({p[0]:.6g}, {p[1]:.6g}) lies outside the mesh")
        return j, w[j]


def _closest_on_triangles(tri, p):
    """Distance from ``p`` to each triangle and barycentric weights of the closest point."""
    m = len(tri)
    dist = np.full(m, np.inf)
    weights = np.zeros((m, 3))
    for i, j in ((0, 1), (1, 2), (2, 0)):
        a, b = tri[:, i], tri[:, j]
        ab = b - a
        t = np.clip(np.einsum("mk,mk->m", p - a, ab) / np.einsum("mk,mk->m", ab, ab), 0.0, 1.0)
        q = a + t[:, None] * ab
        d = np.linalg.norm(q - p, axis=1)
        better = d < dist
        dist[better] = d[better]
        w = np.zeros((m, 3))
        w[:, i] = 1.0 - t
        w[:, j] = t
        weights[better] = w[better]
    return dist, weights


def locate_point(mesh, p, locator=None):
    """Element containing ``p`` and its barycentric coordinates."""
    locator = locator or PointLocator(mesh)
    e, w = locator.locate(np.asarray(p, dtype=float)[None])
    return int(e[0]), w[0]


def interpolation_operator(old_mesh, points, locator=None):
    """Elements and nonnegative normalized weights for interpolating at ``points``.

    Points that coincide with an old vertex get that vertex with weight 1.
    """
    locator = locator or PointLocator(old_mesh)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    elements, weights = locator.locate(pts)
    weights = np.clip(weights, 0.0, None)
    weights /= weights.sum(axis=1, keepdims=True)
    nodes = old_mesh.triangles[elements]
    lookup = {tuple(x): i for i, x in enumerate(old_mesh.vertices.tolist())}
    for i, x in enumerate(pts.tolist()):
        j = lookup.get(tuple(x))
        if j is not None:
            nodes[i] = j
            weights[i] = (1.0, 0.0, 0.0)
    return nodes, weights


def interpolate(values, nodes, weights):
    """Apply an interpolation operator; the result stays within each element's range."""
    values = np.asarray(values, dtype=float)
    local = values[nodes]  # (k, 3) or (k, 3, c...)
    w = weights.reshape(weights.shape + (1,) * (local.ndim - 2))
    out = np.sum(w * local, axis=1)
    return np.clip(out, local.min(axis=1), local.max(axis=1))


def project_field(old_mesh, field, new_mesh, locator=None, levelset=False):
    """P1 interpolant of ``field`` (nodal, scalar or vector) at the new vertices.

    With ``levelset=True`` the result is clamped to [-1, 1].
    """
    nodes, weights = interpolation_operator(old_mesh, new_mesh.vertices, locator)
    out = interpolate(field, nodes, weights)
    return np.clip(out, -1.0, 1.0) if levelset else out
