"""Legacy VTK, SVG and CSV output (and VTK mesh input)."""

import csv
import math
import os
from pathlib import Path

import numpy as np

from .errors import LevityError, MeshError
from .mesh import TriMesh

VTK_LINE, VTK_TRIANGLE = 3, 5


def write_vtk(path, mesh, point_data=None, cell_data=None, title="levity mesh"):
    """Write a triangulation as a legacy ASCII unstructured grid.

    Boundary edges are written as line cells after the triangles and carry
    their label in the ``boundary_label`` cell field (0 on triangles).
    ``point_data`` values may be scalars (n,), vectors (n, 2) or tensors
    (n, 2, 2); ``cell_data`` values are per triangle.
    """
    path = Path(path)
    v, t, be = mesh.vertices, mesh.triangles, mesh.boundary_edges
    m, b = len(t), len(be)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(v)} double")
    lines += [f"{x!r} {y!r} 0.0" for x, y in v.tolist()]
    lines.append(f"CELLS {m + b} {4 * m + 3 * b}")
    lines += [f"3 {i} {j} {k}" for i, j, k in t.tolist()]
    lines += [f"2 {i} {j}" for i, j in be.tolist()]
    lines.append(f"CELL_TYPES {m + b}")
    lines += [str(VTK_TRIANGLE)] * m + [str(VTK_LINE)] * b
    lines.append(f"CELL_DATA {m + b}")
    lines += ["SCALARS boundary_label int 1", "LOOKUP_TABLE default"]
    lines += ["0"] * m + [str(int(x)) for x in mesh.edge_labels.tolist()]
    for name, values in (cell_data or {}).items():
        values = np.asarray(values, dtype=float).reshape(m)
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(x) for x in values.tolist()] + ["0.0"] * b
    if point_data:
        lines.append(f"POINT_DATA {len(v)}")
        for name, values in point_data.items():
            lines += _point_field(name, np.asarray(values, dtype=float), len(v))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise LevityError(f"cannot write {path}: {exc}") from exc


def _point_field(name, values, n):
    if values.shape == (n,):
        return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [repr(x) for x in values.tolist()]
    if values.shape == (n, 2):
        return [f"VECTORS {name} double"] + [f"{x!r} {y!r} 0.0" for x, y in values.tolist()]
    if values.shape == (n, 2, 2):
        out = [f"TENSORS {name} double"]
        for (a, b), (c, d) in values.tolist():
            out.append(f"{a!r} {b!r} 0.0 {c!r} {d!r} 0.0 0.0 0.0 0.0")
        return out
    raise ValueError(f"point field {name!r} has unsupported shape {values.shape}")


def read_vtk(path):
    """Read a legacy ASCII unstructured grid written by :func:`write_vtk`.

    Returns ``(mesh, point_data)``. Line cells define the boundary edges and
    their labels come from the ``boundary_label`` cell field when present.
    """
    path = Path(path)
    try:
        tokens = path.read_text().split("\n")
    except OSError as exc:
        raise LevityError(f"cannot read {path}: {exc}") from exc
    it = iter(tokens[4:])
    if len(tokens) < 4 or "UNSTRUCTURED_GRID" not in tokens[3]:
        raise MeshError(f"{path}: not a legacy unstructured grid")

    def numbers(count, cast=float):
        out = []
        while len(out) < count:
            out += [cast(x) for x in next(it).split()]
        return out

    points = cells = types = None
    labels, point_data, section, n_cells = None, {}, None, 0
    try:
        for line in it:
            words = line.split()
            if not words:
                continue
            key = words[0].upper()
            if key == "POINTS":
                n = int(words[1])
                points = np.array(numbers(3 * n)).reshape(n, 3)[:, :2]
            elif key == "CELLS":
                n_cells = int(words[1])
                cells = numbers(int(words[2]), int)
            elif key == "CELL_TYPES":
                types = numbers(int(words[1]), int)
            elif key in ("CELL_DATA", "POINT_DATA"):
                section = key
            elif key == "SCALARS":
                next(it)  # lookup table
                count = n_cells if section == "CELL_DATA" else len(points)
                values = np.array(numbers(count))
                if section == "CELL_DATA" and words[1] == "boundary_label":
                    labels = values.astype(np.int64)
                elif section == "POINT_DATA":
                    point_data[words[1]] = values
            elif key == "VECTORS":
                point_data[words[1]] = np.array(numbers(3 * len(points))).reshape(-1, 3)[:, :2]
            elif key == "TENSORS":
                point_data[words[1]] = np.array(numbers(9 * len(points))).reshape(-1, 3, 3)[:, :2, :2]
    except (StopIteration, ValueError) as exc:
        raise MeshError(f"{path}: malformed VTK file ({exc})") from exc
    if points is None or cells is None or types is None:
        raise MeshError(f"{path}: missing POINTS, CELLS or CELL_TYPES")
    tris, edges, edge_labels, pos = [], [], [], 0
    for c, kind in enumerate(types):
        size = cells[pos]
        conn = cells[pos + 1 : pos + 1 + size]
        pos += size + 1
        if kind == VTK_TRIANGLE:
            tris.append(conn)
        elif kind == VTK_LINE:
            edges.append(conn)
            edge_labels.append(int(labels[c]) if labels is not None else 1)
    if edges:
        mesh = TriMesh(points, tris, edges, edge_labels)
    else:
        mesh = TriMesh(points, tris)
    return mesh, point_data


def write_history_csv(path, history):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(history.COLUMNS)
            for r in history:
                writer.writerow([
                    r.iter, repr(r.compliance), repr(r.volume_fraction), r.cardinality,
                    "" if math.isnan(r.errComp) else repr(r.errComp),
                    "" if math.isnan(r.errMesh) else repr(r.errMesh),
                    int(r.adapted), f"{r.seconds:.6f}",
                ])
    except OSError as exc:
        raise LevityError(f"cannot write {path}: {exc}") from exc


def write_svg(path, polylines, domain, stroke=1.0):
    """Polylines in the domain frame (y up) with a fixed on-screen stroke width."""
    x0, x1, y0, y1 = domain
    w, h = x1 - x0, y1 - y0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0!r} {-y1!r} {w!r} {h!r}" '
        f'width="{800}" height="{800 * h / w:.0f}">',
        '<g transform="scale(1,-1)" fill="none" stroke-linejoin="round">',
        f'<rect x="{x0!r}" y="{y0!r}" width="{w!r}" height="{h!r}" stroke="#999999" '
        f'stroke-width="{stroke}" vector-effect="non-scaling-stroke"/>',
    ]
    for line in polylines:
        pts = " ".join(f"{x:.9g},{y:.9g}" for x, y in np.asarray(line).tolist())
        out.append(
            f'<polyline points="{pts}" stroke="#000000" stroke-width="{stroke}" '
            'vector-effect="non-scaling-stroke"/>'
        )
    out += ["</g>", "</svg>"]
    try:
        Path(path).write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise LevityError(f"cannot write {path}: {exc}") from exc


def write_layout_vtk(path, layout):
    """The clipped material region as a plain triangle grid."""
    if len(layout.triangles):
        region = TriMesh(layout.vertices, layout.triangles, check=False)
        write_vtk(path, region, title="levity layout")
        return
    lines = ["# vtk DataFile Version 3.0", "levity layout", "ASCII", "DATASET UNSTRUCTURED_GRID",
             "POINTS 0 double", "CELLS 0 0", "CELL_TYPES 0"]
    Path(path).write_text("\n".join(lines) + "\n")


def write_outputs(result, out_dir, domain=None):
    """Write ``history.csv``, ``mesh.vtk``, ``layout.vtk`` and ``boundary.svg``."""
    out = Path(out_dir)
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise LevityError(f"cannot create output directory {out}: {exc}") from exc
    if domain is None:
        lo, hi = result.mesh.vertices.min(axis=0), result.mesh.vertices.max(axis=0)
        domain = (lo[0], hi[0], lo[1], hi[1])
    chi = np.where(result.phi >= 0.0, 1.0, result.config.chi_min)
    write_history_csv(out / "history.csv", result.history)
    write_vtk(out / "mesh.vtk", result.mesh, point_data={"phi": result.phi, "chi": chi,
                                                          "displacement": result.displacement})
    write_layout_vtk(out / "layout.vtk", result.layout)
    write_svg(out / "boundary.svg", result.layout.polylines, domain)
    return [out / n for n in ("history.csv", "mesh.vtk", "layout.vtk", "boundary.svg")]
