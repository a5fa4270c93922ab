import numpy as np
import pytest
from scipy.linalg import polar

from levity.benchmarks import BENCHMARKS, generate_structured_mesh
from levity.errors import GeometryError, MeshError
from levity.mesh import (
    REFERENCE_TRIANGLE,
    TriMesh,
    element_geometries,
    element_geometry,
    element_patch,
    measure,
)

from conftest import perturbed_square


def single(points):
    return TriMesh(np.asarray(points, dtype=float), [[0, 1, 2]])


def rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


class TestElementGeometry:
    def test_reference_element_is_isotropic(self):
        g = element_geometry(single(REFERENCE_TRIANGLE), 0)
        np.testing.assert_allclose(g.eigenvalues, [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(g.aspect_ratios, [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(g.eigenvectors, np.eye(2))

    def test_rotated_equilateral_with_unit_circumradius(self):
        pts = REFERENCE_TRIANGLE @ rotation(0.7).T + [3.0, -2.0]
        g = element_geometry(single(pts), 0)
        np.testing.assert_allclose(g.eigenvalues, [1.0, 1.0], atol=1e-12)

    def test_stretched_reference(self):
        g = element_geometry(single(REFERENCE_TRIANGLE @ np.diag([4.0, 1.0])), 0)
        np.testing.assert_allclose(g.eigenvalues, [4.0, 1.0], rtol=1e-12)
        np.testing.assert_allclose(g.aspect_ratios, [4.0, 0.25], rtol=1e-12)
        np.testing.assert_allclose(np.abs(g.eigenvectors[:, 0]), [1.0, 0.0], atol=1e-12)

    def test_matches_scipy_polar_decomposition(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pts = rng.normal(size=(3, 2))
            e1, e2 = pts[1] - pts[0], pts[2] - pts[0]
            if e1[0] * e2[1] - e1[1] * e2[0] < 0:
                pts = pts[[0, 2, 1]]
            g = element_geometry(single(pts), 0)
            # map from the reference triangle, solved independently
            ref = np.column_stack([REFERENCE_TRIANGLE[1] - REFERENCE_TRIANGLE[0],
                                   REFERENCE_TRIANGLE[2] - REFERENCE_TRIANGLE[0]])
            act = np.column_stack([pts[1] - pts[0], pts[2] - pts[0]])
            M = act @ np.linalg.inv(ref)
            np.testing.assert_allclose(g.jacobian, M, atol=1e-12)
            _, B = polar(M, side="left")
            lam = np.sort(np.linalg.eigvalsh(B))[::-1]
            np.testing.assert_allclose(g.eigenvalues, lam, rtol=1e-10)
            for i in range(2):
                r = g.eigenvectors[:, i]
                np.testing.assert_allclose(B @ r, lam[i] * r, atol=1e-10)

    def test_aspect_ratio_product_is_one(self):
        mesh = perturbed_square(8, 0.3, seed=5)
        g = element_geometries(mesh)
        np.testing.assert_allclose(g.aspect_ratios.prod(axis=1), 1.0, atol=1e-12)
        assert np.all(g.eigenvalues[:, 0] >= g.eigenvalues[:, 1])

    def test_rotation_invariance(self):
        mesh = perturbed_square(5, 0.3, seed=1)
        R = rotation(1.234)
        moved = mesh.with_vertices(mesh.vertices @ R.T + [0.3, 7.0])
        a, b = element_geometries(mesh), element_geometries(moved)
        np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-10)
        np.testing.assert_allclose(a.aspect_ratios, b.aspect_ratios, rtol=1e-10)
        aniso = a.aspect_ratios[:, 0] > 1 + 1e-6
        # eigenvectors rotate with the element (up to sign)
        dots = np.abs(np.einsum("mk,mk->m", (a.eigenvectors[:, :, 0] @ R.T)[aniso], b.eigenvectors[aniso, :, 0]))
        np.testing.assert_allclose(dots, 1.0, atol=1e-8)

    def test_degenerate_element(self):
        mesh = TriMesh([[0, 0], [1, 0], [2, 0], [0, 1]], [[0, 1, 3], [1, 2, 3]], check=False)
        mesh.vertices[3] = [0.5, 0.0]
        with pytest.raises(GeometryError) as info:
            element_geometries(TriMesh(mesh.vertices, mesh.triangles, check=False))
        assert info.value.element == 0


def brute_patch(mesh, k):
    verts = set(mesh.triangles[k].tolist())
    return {j for j, t in enumerate(mesh.triangles.tolist()) if verts & set(t)}


class TestPatch:
    def test_interior_patch_has_13_elements(self):
        mesh = generate_structured_mesh((0, 1, 0, 1), 2 * 10 * 10)
        centre = np.argmin(np.linalg.norm(mesh.centroids - 0.5, axis=1))
        assert len(brute_patch(mesh, centre)) == 13
        assert element_patch(mesh, centre) == brute_patch(mesh, centre)

    def test_one_element_mesh(self):
        assert element_patch(single([[0, 0], [1, 0], [0, 1]]), 0) == {0}

    def test_corner_patch_is_smaller(self):
        mesh = generate_structured_mesh((0, 1, 0, 1), 2 * 10 * 10)
        corner = np.argmin(np.linalg.norm(mesh.centroids, axis=1))
        assert len(element_patch(mesh, corner)) < 13
        assert element_patch(mesh, corner) == brute_patch(mesh, corner)

    def test_all_patches_match_brute_force(self):
        mesh = perturbed_square(5)
        for k in range(mesh.n_triangles):
            assert element_patch(mesh, k) == brute_patch(mesh, k)


class TestMeasure:
    def test_unit_right_triangle(self):
        assert measure(single([[0, 0], [1, 0], [0, 1]]), 0) == pytest.approx(0.5)

    def test_reference_triangle(self):
        assert measure(single(REFERENCE_TRIANGLE), 0) == pytest.approx(3 * np.sqrt(3) / 4, rel=1e-14)

    def test_translation_invariance(self):
        pts = np.array([[0.1, 0.2], [1.3, 0.4], [0.5, 1.7]])
        assert measure(single(pts + [100.0, -50.0]), 0) == pytest.approx(measure(single(pts), 0), rel=1e-12)

    @pytest.mark.parametrize("name", sorted(BENCHMARKS))
    def test_benchmark_mesh_area(self, name):
        case = BENCHMARKS[name]()
        mesh = case.mesh(2000)
        assert abs(mesh.areas.sum() - case.area) <= 1e-10 * case.area


class TestTopology:
    def test_round_trip(self):
        mesh = perturbed_square(4)
        again = TriMesh(mesh.vertices, mesh.triangles)
        twice = TriMesh(again.vertices, again.triangles, again.boundary_edges, again.edge_labels)
        assert np.array_equal(again.boundary_edges, twice.boundary_edges)
        assert np.array_equal(mesh.edges, twice.edges)

    def test_edge_counts(self, unit_square):
        n_edges = len(unit_square.edges)
        # Euler characteristic of a disk
        assert unit_square.n_vertices - n_edges + unit_square.n_triangles == 1
        assert len(unit_square.boundary_edges) == 4 * 8

    def test_rejects_inverted_triangle(self):
        with pytest.raises((MeshError, GeometryError)):
            TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])

    def test_rejects_isolated_vertex(self):
        with pytest.raises(MeshError):
            TriMesh([[0, 0], [1, 0], [0, 1], [5, 5]], [[0, 1, 2]])

    def test_corners_and_labels(self):
        case = BENCHMARKS["CLC"]()
        mesh = case.mesh(400)
        corners = mesh.vertices[mesh.corner_flags]
        expected = {(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (0.0, 1.0)}
        assert {tuple(p) for p in corners.tolist()} == expected
        # label junctions of the load patch are pinned too
        pinned = {tuple(p) for p in mesh.vertices[mesh.pinned_flags].tolist()}
        assert {(2.0, 0.45), (2.0, 0.55)} <= pinned
        assert mesh.vertex_labels[np.argmin(np.linalg.norm(mesh.vertices - [1.0, 0.5], axis=1))] == 0
