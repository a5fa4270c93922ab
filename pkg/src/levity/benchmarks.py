"""Built-in benchmark cases and structured mesh generation."""

from dataclasses import dataclass, field

import numpy as np

from .fem import BoundaryConditions, MaterialModel
from .mesh import TriMesh


@dataclass(frozen=True)
class Segment:
    """A labelled piece of one side of a rectangular domain.

    ``side`` is one of ``left``, ``right``, ``bottom``, ``top``; ``lo`` and
    ``hi`` bound the coordinate running along that side.
    """

    label: int
    side: str
    lo: float
    hi: float
    name: str = ""


@dataclass
class BenchmarkCase:
    name: str
    domain: tuple  # (x0, x1, y0, y1)
    segments: list  # labelled pieces; the rest of each side gets a free label
    free_labels: dict  # side -> label for the unlisted parts
    dirichlet: list = field(default_factory=list)
    traction: list = field(default_factory=list)
    pins: list = field(default_factory=list)
    defaults: dict = field(default_factory=dict)

    @property
    def area(self):
        x0, x1, y0, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    def breakpoints(self):
        """Coordinates along x and y where boundary labels change."""
        xs, ys = set(), set()
        for s in self.segments:
            target = xs if s.side in ("bottom", "top") else ys
            target.update((s.lo, s.hi))
        return sorted(xs), sorted(ys)

    def boundary_conditions(self):
        return BoundaryConditions(list(self.dirichlet), list(self.traction), list(self.pins))

    def label_edges(self, vertices, edges):
        """Assign a label to each boundary edge from its midpoint."""
        x0, x1, y0, y1 = self.domain
        mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
        scale = max(x1 - x0, y1 - y0)
        tol = 1e-9 * scale
        labels = np.zeros(len(edges), dtype=np.int64)
        sides = {
            "left": (np.abs(mid[:, 0] - x0) < tol, mid[:, 1]),
            "right": (np.abs(mid[:, 0] - x1) < tol, mid[:, 1]),
            "bottom": (np.abs(mid[:, 1] - y0) < tol, mid[:, 0]),
            "top": (np.abs(mid[:, 1] - y1) < tol, mid[:, 0]),
        }
        for side, (on, coord) in sides.items():
            labels[on & (labels == 0)] = self.free_labels[side]
            for s in self.segments:
                if s.side == side:
                    labels[on & (coord > s.lo - tol) & (coord < s.hi + tol)] = s.label
        if np.any(labels == 0):
            raise ValueError("boundary edge outside the rectangular domain")
        return labels

    def mesh(self, target_cardinality=None):
        n = target_cardinality or self.defaults.get("mesh_elements", 2000)
        return generate_structured_mesh(self.domain, n, case=self)

    def material(self):
        return MaterialModel(self.defaults.get("E", 1000.0), self.defaults.get("nu", 0.3))


def _grid_shape(width, height, target):
    best = None
    for ny in range(1, int(np.sqrt(target)) * 4 + 2):
        base = max(1, int(round(target / (2.0 * ny))))
        for nx in (base - 1, base, base + 1):
            if nx < 1:
                continue
            aspect = abs(np.log((width / nx) / (height / ny)))
            feasible = aspect <= np.log(1.1) + 1e-12
            key = (not feasible, abs(2 * nx * ny - target) if feasible else aspect, aspect)
            if best is None or key < best[0]:
                best = (key, nx, ny)
    return best[1], best[2]


def _snapped_lines(lo, hi, n, breaks):
    lines = np.linspace(lo, hi, n + 1)
    for b in breaks:
        if b <= lo or b >= hi:
            continue
        i = int(np.argmin(np.abs(lines - b)))
        if 0 < i < n:
            lines[i] = b
    if np.any(np.diff(lines) <= 0):
        raise ValueError("mesh too coarse to resolve the boundary label breakpoints")
    return lines


def generate_structured_mesh(domain, target_cardinality, case=None):
    """Uniform right-triangle grid on a rectangle.

    The grid has ``2 * nx * ny`` triangles, with ``nx, ny`` chosen so that
    the cell aspect ratio stays within 10% of one and the cardinality is
    as close as possible to ``target_cardinality``. When ``case`` is given,
    the grid lines nearest to the label breakpoints are moved onto them and
    the boundary edges get the case labels.
    """
    x0, x1, y0, y1 = (float(v) for v in domain)
    if target_cardinality < 2:
        raise ValueError("target cardinality must be at least 2")
    nx, ny = _grid_shape(x1 - x0, y1 - y0, target_cardinality)
    bx, by = case.breakpoints() if case is not None else ([], [])
    xs = _snapped_lines(x0, x1, nx, bx)
    ys = _snapped_lines(y0, y1, ny, by)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    # two triangles per cell, kept adjacent in the element ordering
    triangles = np.stack([np.column_stack([a, b, c]), np.column_stack([a, c, d])], axis=1).reshape(-1, 3)
    mesh = TriMesh(vertices, triangles, check=False)
    labels = case.label_edges(vertices, mesh.boundary_edges) if case is not None else None
    return TriMesh(vertices, triangles, mesh.boundary_edges, labels)


def _clc():
    return BenchmarkCase(
        name="CLC",
        domain=(0.0, 2.0, 0.0, 1.0),
        segments=[Segment(1, "left", 0.0, 1.0, "dirichlet"), Segment(4, "right", 0.45, 0.55, "traction")],
        free_labels={"left": 1, "bottom": 2, "right": 3, "top": 5},
        dirichlet=[(1, (0, 1), (0.0, 0.0))],
        traction=[(4, (0.0, -5.0))],
        defaults=dict(
            E=1000.0, nu=0.3, alpha=0.5, chi_min=1e-3, CTOL=1e-4, kmax=400, dt=0.1, tau=6e-4,
            TOL=8e-2, ATOL=5e-3, kStart=150, kAdapt=15, grade=1, h_iso=1.0 / 40.0, beta=10.0,
            mesh_elements=25600, phi0=1.0, holes=[(0.5, 0.5, 0.25), (1.5, 0.5, 0.25)],
        ),
    )


def _cblb():
    # Gamma_t is split at x = 0 so that the pinned vertex used to remove the
    # horizontal rigid-body mode is a mesh vertex on every adapted mesh.
    return BenchmarkCase(
        name="CBLB",
        domain=(-100.0, 100.0, 0.0, 120.0),
        segments=[
            Segment(1, "bottom", -100.0, -90.0, "dirichlet-left"),
            Segment(2, "bottom", 90.0, 100.0, "dirichlet-right"),
            Segment(3, "bottom", -10.0, 0.0, "traction-left"),
            Segment(4, "bottom", 0.0, 10.0, "traction-right"),
        ],
        free_labels={"left": 6, "bottom": 5, "right": 7, "top": 8},
        dirichlet=[(1, (1,), (0.0,)), (2, (1,), (0.0,))],
        traction=[(3, (0.0, -5.0)), (4, (0.0, -5.0))],
        pins=[((0.0, 0.0), (0,), (0.0,))],
        defaults=dict(
            E=1000.0, nu=0.3, alpha=0.5, chi_min=1e-3, CTOL=1e-4, kmax=400, dt=0.1, tau=0.5,
            TOL=0.35, ATOL=5e-3, kStart=175, kAdapt=15, grade=1, h_iso=2.0, beta=10.0,
            mesh_elements=69120, phi0=1.0, holes=[],
        ),
    )


def _clsc():
    return BenchmarkCase(
        name="CLSC",
        domain=(0.0, 160.0, 0.0, 128.0),
        segments=[Segment(1, "left", 0.0, 128.0, "dirichlet"), Segment(4, "right", 60.0, 68.0, "traction")],
        free_labels={"left": 1, "bottom": 2, "right": 3, "top": 5},
        dirichlet=[(1, (0, 1), (0.0, 0.0))],
        traction=[(4, (0.0, -5.0))],
        defaults=dict(
            E=1000.0, nu=0.3, alpha=0.5, chi_min=1e-3, CTOL=1e-4, kmax=400, dt=0.1, tau=1.0,
            TOL=0.35, ATOL=5e-3, kStart=175, kAdapt=15, grade=1, h_iso=2.0, beta=10.0,
            mesh_elements=4960, phi0=1.0, holes=[],
        ),
    )


BENCHMARKS = {"CLC": _clc, "CBLB": _cblb, "CLSC": _clsc}


def get_case(name):
    try:
        return BENCHMARKS[name.upper()]()
    except KeyError:
        raise KeyError(f"unknown benchmark case {name!r}; choose from {sorted(BENCHMARKS)}") from None


def initial_levelset(mesh, value=1.0, holes=()):
    """``value`` minus twice the indicator of each disk ``(cx, cy, r)``, clipped to [-1, 1]."""
    phi = np.full(mesh.n_vertices, float(value))
    for cx, cy, r in holes:
        inside = (mesh.vertices[:, 0] - cx) ** 2 + (mesh.vertices[:, 1] - cy) ** 2 <= r * r
        phi[inside] -= 2.0
    return np.clip(phi, -1.0, 1.0)
