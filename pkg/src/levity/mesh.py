"""Triangle mesh storage, connectivity, patches and element spectral geometry."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import GeometryError, MeshError

# Reference element: equilateral triangle inscribed in the unit circle,
# vertices at 90, 210 and 330 degrees (counter-clockwise).
REFERENCE_TRIANGLE = np.array(
    [[0.0, 1.0], [-np.sqrt(3.0) / 2.0, -0.5], [np.sqrt(3.0) / 2.0, -0.5]]
)
REFERENCE_AREA = 3.0 * np.sqrt(3.0) / 4.0
_REF_EDGES_INV = np.linalg.inv(
    np.column_stack(
        [REFERENCE_TRIANGLE[1] - REFERENCE_TRIANGLE[0], REFERENCE_TRIANGLE[2] - REFERENCE_TRIANGLE[0]]
    )
)


class TriMesh:
    """Conforming 2D triangulation with labelled boundary edges.

    Parameters
    ----------
    vertices : (n, 2) array_like
        Vertex coordinates.
    triangles : (m, 3) array_like of int
        Counter-clockwise vertex index triples.
    boundary_edges : (b, 2) array_like of int, optional
        Boundary edges. Recomputed from the triangles when omitted.
    edge_labels : (b,) array_like of int, optional
        Positive label per boundary edge. Defaults to 1 everywhere.

    Notes
    -----
    Instances are treated as immutable: derived connectivity is cached on
    first access. The remesher builds a new mesh instead of editing one.
    """

    def __init__(self, vertices, triangles, boundary_edges=None, edge_labels=None, check=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        if boundary_edges is None:
            boundary_edges = self._topological_boundary()
            if edge_labels is not None and len(edge_labels) != len(boundary_edges):
                raise MeshError("edge_labels given without matching boundary_edges")
        self.boundary_edges = self._orient(np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2))
        if edge_labels is None:
            edge_labels = np.ones(len(self.boundary_edges), dtype=np.int64)
        self.edge_labels = np.asarray(edge_labels, dtype=np.int64).reshape(-1)
        if len(self.edge_labels) != len(self.boundary_edges):
            raise MeshError("one label per boundary edge is required")
        if check:
            self.check()

    # -- basic sizes -----------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def __len__(self):
        return self.n_triangles

    def __repr__(self):
        return f"TriMesh({self.n_vertices} vertices, {self.n_triangles} triangles)"

    # -- measures ----------------------------------------------------------

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self):
        return self.signed_areas

    @property
    def area(self):
        return float(self.areas.sum())

    @cached_property
    def grad_basis(self):
        """Gradients of the three P1 hat functions on each element, shape (m, 3, 2)."""
        p = self.vertices[self.triangles]
        x, y = p[..., 0], p[..., 1]
        two_a = 2.0 * self.signed_areas
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([b, c], axis=2) / two_a[:, None, None]

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    # -- connectivity ------------------------------------------------------

    @cached_property
    def incidence(self):
        """Sparse (m, n) element-to-vertex incidence matrix."""
        m = self.n_triangles
        rows = np.repeat(np.arange(m), 3)
        return sparse.csr_matrix(
            (np.ones(3 * m), (rows, self.triangles.ravel())), shape=(m, self.n_vertices)
        )

    @cached_property
    def vertex_triangles(self):
        """Sparse (n, m) vertex-to-element incidence (transpose of :attr:`incidence`)."""
        return self.incidence.T.tocsr()

    @cached_property
    def patch_matrix(self):
        """Sparse (m, m) boolean matrix; row K marks the vertex patch of K."""
        p = (self.incidence @ self.incidence.T).tocsr()
        p.data[:] = 1.0
        p.sort_indices()
        return p

    @cached_property
    def edges(self):
        """Unique undirected edges as sorted vertex pairs, lexicographically ordered."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def _edge_counts(self):
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def _orient(self, be):
        # boundary edges follow the orientation of their triangle
        n = max(self.n_vertices, 1)
        directed = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        keys = np.sort(directed[:, 0] * n + directed[:, 1])
        k = be[:, 0] * n + be[:, 1]
        pos = np.clip(np.searchsorted(keys, k), 0, max(len(keys) - 1, 0))
        found = keys[pos] == k if len(keys) else np.zeros(len(be), dtype=bool)
        out = be.copy()
        out[~found] = be[~found][:, ::-1]
        return np.ascontiguousarray(out)

    def _topological_boundary(self):
        t = self.triangles
        directed = t[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        key = np.sort(directed, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.reshape(-1)
        return directed[counts[inv] == 1]

    @cached_property
    def vertex_labels(self):
        """Per-vertex label: 0 for interior, else the smallest incident boundary-edge label."""
        labels = np.zeros(self.n_vertices, dtype=np.int64)
        big = np.iinfo(np.int64).max
        tmp = np.full(self.n_vertices, big, dtype=np.int64)
        for col in (0, 1):
            np.minimum.at(tmp, self.boundary_edges[:, col], self.edge_labels)
        mask = tmp != big
        labels[mask] = tmp[mask]
        return labels

    @cached_property
    def corner_flags(self):
        """True at boundary vertices where the boundary polygon turns."""
        n = self.n_vertices
        flags = np.zeros(n, dtype=bool)
        be = self.boundary_edges
        if len(be) == 0:
            return flags
        d = self.vertices[be[:, 1]] - self.vertices[be[:, 0]]
        d /= np.linalg.norm(d, axis=1)[:, None]
        # each boundary vertex has one outgoing and one incoming boundary edge
        out_dir = np.zeros((n, 2))
        in_dir = np.zeros((n, 2))
        out_dir[be[:, 0]] = d
        in_dir[be[:, 1]] = d
        cross = in_dir[:, 0] * out_dir[:, 1] - in_dir[:, 1] * out_dir[:, 0]
        dot = (in_dir * out_dir).sum(axis=1)
        on_boundary = np.zeros(n, dtype=bool)
        on_boundary[be.ravel()] = True
        flags[on_boundary] = (np.abs(cross[on_boundary]) > 1e-10) | (dot[on_boundary] < 0)
        return flags

    @cached_property
    def junction_flags(self):
        """True at boundary vertices where the incident boundary-edge labels differ."""
        n = self.n_vertices
        lo = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        hi = np.full(n, -1, dtype=np.int64)
        for col in (0, 1):
            np.minimum.at(lo, self.boundary_edges[:, col], self.edge_labels)
            np.maximum.at(hi, self.boundary_edges[:, col], self.edge_labels)
        return (hi >= 0) & (lo != hi)

    @property
    def pinned_flags(self):
        """Vertices a remesher must never move or remove."""
        return self.corner_flags | self.junction_flags

    def boundary_length(self, label):
        be = self.boundary_edges[self.edge_labels == label]
        d = self.vertices[be[:, 1]] - self.vertices[be[:, 0]]
        return float(np.linalg.norm(d, axis=1).sum())

    # -- validation --------------------------------------------------------

    def check(self):
        """Raise if the mesh is not a valid conforming triangulation."""
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= self.n_vertices):
            raise MeshError("triangle refers to a missing vertex")
        bad = np.flatnonzero(self.signed_areas <= 0.0)
        if len(bad):
            raise GeometryError(f"element {bad[0]} has non-positive area", element=int(bad[0]))
        _, counts = self._edge_counts
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two triangles")
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise MeshError(f"isolated vertex {int(np.flatnonzero(~used)[0])}")
        n_boundary = int((counts == 1).sum())
        if n_boundary != len(self.boundary_edges):
            raise MeshError("boundary edge list does not match the triangulation")

    # -- transforms (used by tests and the writers) ------------------------

    def with_vertices(self, vertices):
        return TriMesh(vertices, self.triangles, self.boundary_edges, self.edge_labels)


@dataclass
class ElementGeometry:
    """Spectral description of the affine map from the reference element.

    Arrays carry a leading element axis when produced by
    :func:`element_geometries`; :func:`element_geometry` returns one element.
    ``eigenvectors[..., :, i]`` is ``r_i``.
    """

    jacobian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    aspect_ratios: np.ndarray

    def __getitem__(self, k):
        return ElementGeometry(
            self.jacobian[k], self.eigenvalues[k], self.eigenvectors[k], self.aspect_ratios[k]
        )


def _jacobians(mesh, elements=None):
    t = mesh.triangles if elements is None else mesh.triangles[elements]
    p = mesh.vertices[t]
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    return e @ _REF_EDGES_INV


def element_geometries(mesh, elements=None, tie_tol=1e-12):
    """Batched :func:`element_geometry` for all (or the given) elements."""
    jac = _jacobians(mesh, elements)
    areas = mesh.signed_areas if elements is None else mesh.signed_areas[elements]
    scale = np.abs(jac).max(axis=(1, 2))
    bad = np.flatnonzero(~(areas > 1e-14 * np.maximum(scale, 1e-300) ** 2))
    if len(bad):
        k = int(bad[0]) if elements is None else int(np.atleast_1d(elements)[bad[0]])
        raise GeometryError(f"element {k} is degenerate", element=k)
    # polar decomposition through the SVD: M = U S V^T, B = U S U^T
    u, s, _ = np.linalg.svd(jac)
    tie = (s[:, 0] - s[:, 1]) <= tie_tol * s[:, 0]
    u[tie] = np.eye(2)
    lam = s
    ratios = np.stack([lam[:, 0] / lam[:, 1], lam[:, 1] / lam[:, 0]], axis=1)
    return ElementGeometry(jac, lam, u, ratios)


def element_geometry(mesh, element):
    """Polar/spectral decomposition of the reference map of one element.

    Returns the Jacobian ``M_K`` of the map from the reference equilateral
    triangle, the eigenpairs ``(lambda_i, r_i)`` of the symmetric factor of
    its polar decomposition (``lambda_1 >= lambda_2``) and the aspect ratios
    ``s_1 = lambda_1 / lambda_2``, ``s_2 = 1 / s_1``.
    """
    return element_geometries(mesh, np.array([element]))[0]


def element_patch(mesh, element):
    """Element ids sharing at least one vertex with ``element`` (itself included)."""
    if not 0 <= element < mesh.n_triangles:
        raise IndexError(f"element {element} out of range")
    p = mesh.patch_matrix
    return set(p.indices[p.indptr[element] : p.indptr[element + 1]].tolist())


def measure(mesh, element):
    """Area of one element."""
    return float(abs(mesh.signed_areas[element]))


def patch_areas(mesh):
    """Total area of every element patch."""
    return mesh.patch_matrix @ mesh.areas


def triangle_area(a, b, c):
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
