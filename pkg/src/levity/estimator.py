"""Recovery-based anisotropic error estimator for a P1 scalar field."""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mesh import element_geometries


def filter_levelset(phi, beta):
    """Sharpened level set ``tanh(beta phi) / tanh(beta)``."""
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    return np.tanh(beta * np.asarray(phi, dtype=float)) / np.tanh(beta)


def element_gradients(mesh, w):
    """Constant gradient of the P1 interpolant of ``w`` on every element, (m, 2)."""
    w = np.asarray(w, dtype=float)
    return np.einsum("mi,mik->mk", w[mesh.triangles], mesh.grad_basis)


@dataclass
class PatchGradientData:
    """Recovered gradient and scaled patch matrix for one or all elements.

    With a leading element axis, ``recovered_gradient`` is (m, 2),
    ``scaled_matrix`` is (m, 2, 2) and ``patch_area`` is (m,).
    """

    recovered_gradient: np.ndarray
    scaled_matrix: np.ndarray
    patch_area: np.ndarray

    @property
    def matrix(self):
        """Unscaled patch matrix ``G = |patch| * scaled_matrix``."""
        return np.asarray(self.patch_area)[..., None, None] * self.scaled_matrix

    def __getitem__(self, k):
        return PatchGradientData(self.recovered_gradient[k], self.scaled_matrix[k], self.patch_area[k])


def _patch_pairs(mesh):
    p = mesh.patch_matrix.tocoo()
    return p.row, p.col


def recovered_gradients(mesh, w):
    """Area-weighted patch average of the element gradients, for every element."""
    g = element_gradients(mesh, w)
    P = mesh.patch_matrix
    a = mesh.areas
    return (P @ (a[:, None] * g)) / (P @ a)[:, None]


def recovered_gradient(mesh, w, element):
    return recovered_gradients(mesh, w)[element]


def patch_matrices(mesh, w):
    """Patch gradient data for every element.

    ``G_K`` is the exact integral over the patch of ``e e^T`` with
    ``e = P_K - grad w|_T``, using the single recovered gradient of ``K``.
    """
    g = element_gradients(mesh, w)
    a = mesh.areas
    P = mesh.patch_matrix
    patch_area = P @ a
    rec = (P @ (a[:, None] * g)) / patch_area[:, None]
    rows, cols = _patch_pairs(mesh)
    e = rec[rows] - g[cols]
    outer = a[cols, None, None] * e[:, :, None] * e[:, None, :]
    G = np.zeros((mesh.n_triangles, 2, 2))
    np.add.at(G, rows, outer)
    return PatchGradientData(rec, G / patch_area[:, None, None], patch_area)


def patch_matrix(mesh, w, element):
    return patch_matrices(mesh, w)[element]


def local_estimator(geom, data):
    """Anisotropic local estimator ``eta_K`` from element geometry and patch data.

    Works on single elements or batches (leading element axis on both).
    """
    lam = np.asarray(geom.eigenvalues, dtype=float)
    r = np.asarray(geom.eigenvectors, dtype=float)
    G = data.matrix
    # r_i^T G r_i for each column i of r
    quad = np.einsum("...ki,...kl,...li->...i", r, G, r)
    eta2 = np.sum(lam**2 * quad, axis=-1) / np.prod(lam, axis=-1)
    return np.sqrt(np.maximum(eta2, 0.0))


def local_estimators(mesh, w, geom=None):
    """``eta_K`` for every element."""
    if geom is None:
        geom = element_geometries(mesh)
    return local_estimator(geom, patch_matrices(mesh, w))


def global_estimator(mesh, w):
    """``eta = sqrt(sum_K eta_K^2)``."""
    return float(np.sqrt(np.sum(local_estimators(mesh, w) ** 2)))
