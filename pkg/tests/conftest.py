import numpy as np
import pytest

from levity.benchmarks import generate_structured_mesh
from levity.mesh import TriMesh


def perturbed_square(n=6, amount=0.25, seed=0):
    """Unit square grid with randomly displaced interior vertices."""
    mesh = generate_structured_mesh((0.0, 1.0, 0.0, 1.0), 2 * n * n)
    rng = np.random.default_rng(seed)
    v = mesh.vertices.copy()
    interior = np.all((v > 1e-12) & (v < 1 - 1e-12), axis=1)
    v[interior] += rng.uniform(-amount, amount, (interior.sum(), 2)) / n
    return TriMesh(v, mesh.triangles, mesh.boundary_edges, mesh.edge_labels)


@pytest.fixture
def unit_square():
    return generate_structured_mesh((0.0, 1.0, 0.0, 1.0), 2 * 8 * 8)


@pytest.fixture
def unstructured_square():
    return perturbed_square()


def stretching_objective(G, s1, angle):
    """Sum of s_i r_i^T G r_i for s = (s1, 1/s1) along r_1 = (cos a, sin a)."""
    r1 = np.array([np.cos(angle), np.sin(angle)])
    r2 = np.array([-r1[1], r1[0]])
    return s1 * (r1 @ G @ r1) + (r2 @ G @ r2) / s1


def random_spd(rng, n):
    A = rng.normal(size=(n, 2, 2))
    return A @ np.swapaxes(A, 1, 2) + 1e-3 * np.eye(2)


# one line per acceptance criterion, repeated at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
