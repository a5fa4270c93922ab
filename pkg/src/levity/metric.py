"""Optimal anisotropic metric from the estimator, nodal averaging and grading."""

from dataclasses import dataclass

import numpy as np

from .errors import MeshError, ParameterError
from .mesh import element_geometries
from .estimator import patch_matrices


@dataclass
class ElementSpec:
    """Target element: stretching factors, directions and semi-axis lengths.

    ``directions[..., :, i]`` is the direction along which the length is
    ``lengths[..., i]``. ``isotropic_fallback`` flags elements that received
    the background size because their patch matrix vanished.
    """

    stretching: np.ndarray
    directions: np.ndarray
    lengths: np.ndarray
    isotropic_fallback: np.ndarray


@dataclass
class MetricOptions:
    """Safeguards applied to the closed-form optimum."""

    s_max: float = 100.0
    eps_g: float = 1e-12
    h_min: float = None
    h_max: float = None

    def resolved(self, h_iso=None, diameter=None):
        h_max = self.h_max if self.h_max is not None else (diameter / 10.0 if diameter else np.inf)
        if self.h_min is not None:
            h_min = self.h_min
        elif h_iso is not None:
            h_min = min(h_iso, h_max) / 4.0
        else:
            h_min = 0.0
        if h_min > h_max:
            raise ParameterError(f"minimum size {h_min} exceeds maximum size {h_max}")
        return h_min, h_max


def _eig_desc(G):
    g, v = np.linalg.eigh(G)
    return g[..., ::-1], v[..., ::-1]


def optimal_element_spec(G_hat, TOL, card, patch_pullback_area, s_max=100.0, eps_g=1e-12,
                         g_ref=None, h_min=0.0, h_max=np.inf, h_bg=None):
    """Closed-form optimal element for scaled patch matrices ``G_hat``.

    Parameters
    ----------
    G_hat : (..., 2, 2) array_like
        Symmetric positive semidefinite scaled patch matrices.
    TOL : float
        Target global accuracy.
    card : int
        Current mesh cardinality.
    patch_pullback_area : float or array_like
        Area of each patch pulled back to the reference element.
    s_max : float
        Largest admitted ratio between the two target lengths.
    eps_g : float
        Relative floor on eigenvalues, against ``g_ref``.
    g_ref : float, optional
        Reference eigenvalue scale (default: the largest eigenvalue given).
    h_min, h_max : float
        Clamps on the target lengths. The short length is clamped first and
        the long one follows it with the optimal stretching factor, itself
        capped by ``h_max``.
    h_bg : float, optional
        Isotropic size for flat patches (default ``h_max``).

    Returns
    -------
    ElementSpec
        ``stretching[..., 0] >= stretching[..., 1]`` with unit product;
        ``lengths[..., 0]`` is measured along ``directions[..., :, 0]``, the
        eigenvector of the smaller eigenvalue.
    """
    if not TOL > 0 or not card >= 1:
        raise ParameterError("TOL must be positive and the cardinality at least one")
    G = np.asarray(G_hat, dtype=float)
    single = G.ndim == 2
    G = G.reshape(-1, 2, 2)
    area = np.broadcast_to(np.asarray(patch_pullback_area, dtype=float), G.shape[:1])
    if np.any(area <= 0):
        raise ParameterError("patch pull-back area must be positive")
    g, v = _eig_desc(0.5 * (G + np.swapaxes(G, 1, 2)))
    g = np.maximum(g, 0.0)
    if g_ref is None:
        g_ref = float(g[:, 0].max()) if len(g) else 0.0
    flat = g[:, 0] <= eps_g * g_ref if g_ref > 0 else np.ones(len(g), dtype=bool)
    g1 = g[:, 0]
    g2 = np.maximum.reduce([g[:, 1], g1 / s_max**2, np.full_like(g1, eps_g * g_ref)])
    g2 = np.where(flat, 1.0, g2)
    g1 = np.where(flat, 1.0, g1)

    stretch = np.stack([np.sqrt(g1 / g2), np.sqrt(g2 / g1)], axis=1)
    dirs = np.stack([v[:, :, 1], v[:, :, 0]], axis=2)
    C = np.sqrt(TOL**2 / (2.0 * card * area))
    lengths = np.stack([C / np.sqrt(g2), C / np.sqrt(g1)], axis=1)

    h_bg = h_max if h_bg is None else h_bg
    if np.any(flat):
        if not np.isfinite(h_bg):
            raise ParameterError("flat patch matrix and no background size")
        lengths[flat] = h_bg
        stretch[flat] = 1.0
        dirs[flat] = np.eye(2)
    # clamp the short axis and keep the optimal stretching for the long one
    ratio = np.minimum(lengths[:, 0] / lengths[:, 1], s_max)
    short = np.clip(lengths[:, 1], h_min, h_max)
    lengths = np.stack([np.clip(short * ratio, short, h_max), short], axis=1)
    spec = ElementSpec(stretch, dirs, lengths, flat)
    if single:
        spec = ElementSpec(stretch[0], dirs[0], lengths[0], bool(flat[0]))
    return spec


def element_metric(spec):
    """``R diag(1 / lengths^2) R^T`` for one spec or a batch."""
    R = np.asarray(spec.directions, dtype=float)
    lam = np.asarray(spec.lengths, dtype=float)
    return np.einsum("...ik,...k,...jk->...ij", R, 1.0 / lam**2, R)


def nodewise_metric(mesh, element_metrics):
    """Area-weighted mean of the element metrics around every vertex, (n, 2, 2)."""
    vt = mesh.vertex_triangles
    w = vt @ mesh.areas
    if np.any(w <= 0):
        raise MeshError("isolated vertex: no element to average the metric from")
    flat = np.asarray(element_metrics, dtype=float).reshape(-1, 4)
    out = (vt @ (mesh.areas[:, None] * flat)) / w[:, None]
    return out.reshape(-1, 2, 2)


def grade_metric(metric, chi, h_iso, grade):
    """Blend towards the isotropic size ``h_iso`` inside the material.

    ``grade = 0`` returns the input unchanged; otherwise every vertex gets
    ``(1 - chi) M + chi / h_iso^2 I``.
    """
    if not grade:
        return metric
    if not h_iso > 0:
        raise ParameterError("h_iso must be positive for a graded metric")
    chi = np.asarray(chi, dtype=float)
    out = (1.0 - chi)[:, None, None] * metric + (chi / h_iso**2)[:, None, None] * np.eye(2)
    assert np.all(np.linalg.eigvalsh(out) > 0), "graded metric lost positive definiteness"
    return out


def domain_diameter(mesh):
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    return float(np.hypot(*(hi - lo)))


def build_metric(mesh, w, TOL, chi=None, h_iso=None, grade=0, options=None):
    """Full chain: patch matrices, optimal specs, nodal averaging and grading.

    Returns the nodal metric (n, 2, 2) and the per-element specs.
    """
    options = options or MetricOptions()
    h_min, h_max = options.resolved(h_iso, domain_diameter(mesh))
    geom = element_geometries(mesh)
    data = patch_matrices(mesh, w)
    pullback = data.patch_area / np.prod(geom.eigenvalues, axis=1)
    spec = optimal_element_spec(
        data.scaled_matrix, TOL, mesh.n_triangles, pullback,
        s_max=options.s_max, eps_g=options.eps_g, h_min=h_min, h_max=h_max,
    )
    nodal = nodewise_metric(mesh, element_metric(spec))
    if grade:
        nodal = grade_metric(nodal, chi, h_iso, grade)
    return nodal, spec
