"""P1 finite elements for the chi-weighted linear elasticity state equation."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import NumericalError, ParameterError, SolverError

logger = logging.getLogger(__name__)


def lame_coefficients(young_modulus, poisson_ratio):
    """Lame parameters ``(lambda, mu)`` from Young's modulus and Poisson's ratio."""
    E, nu = float(young_modulus), float(poisson_ratio)
    if not E > 0.0:
        raise ParameterError(f"Young modulus must be positive, got {E}")
    if not -1.0 < nu < 0.5:
        raise ParameterError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


@dataclass(frozen=True)
class MaterialModel:
    young_modulus: float = 1000.0
    poisson_ratio: float = 0.3

    def __post_init__(self):
        lame_coefficients(self.young_modulus, self.poisson_ratio)

    @property
    def lame_lambda(self):
        return lame_coefficients(self.young_modulus, self.poisson_ratio)[0]

    @property
    def lame_mu(self):
        return lame_coefficients(self.young_modulus, self.poisson_ratio)[1]

    @property
    def elasticity_matrix(self):
        """Plane-strain constitutive matrix in Voigt form (engineering shear)."""
        lam, mu = lame_coefficients(self.young_modulus, self.poisson_ratio)
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


@dataclass
class BoundaryConditions:
    """Dirichlet and traction data keyed by boundary label.

    ``dirichlet`` holds ``(label, components, values)`` triples, ``traction``
    holds ``(label, (tx, ty))`` pairs and ``pins`` holds
    ``(point, components, values)`` triples constraining the single vertex
    located at ``point``.
    """

    dirichlet: list = field(default_factory=list)
    traction: list = field(default_factory=list)
    pins: list = field(default_factory=list)

    def validate(self, mesh):
        labels = set(np.unique(mesh.edge_labels).tolist())
        d_labels = {lab for lab, _, _ in self.dirichlet}
        t_labels = {lab for lab, _ in self.traction}
        for lab in d_labels | t_labels:
            if lab not in labels:
                raise ParameterError(f"boundary label {lab} does not exist in the mesh")
        if d_labels & t_labels:
            raise ParameterError(f"labels {sorted(d_labels & t_labels)} carry both Dirichlet and traction data")
        if not self.dirichlet and not self.pins:
            raise SolverError("no Dirichlet constraint: the elasticity system is singular")

    def fixed_dofs(self, mesh):
        """Constrained degree-of-freedom indices and their prescribed values."""
        values = {}
        for label, comps, vals in self.dirichlet:
            verts = np.unique(mesh.boundary_edges[mesh.edge_labels == label])
            for c, v in zip(comps, vals):
                for dof in 2 * verts + c:
                    values[int(dof)] = float(v)
        for point, comps, vals in self.pins:
            d = np.linalg.norm(mesh.vertices - np.asarray(point, dtype=float), axis=1)
            vid = int(np.argmin(d))
            if d[vid] > 1e-9 * max(1.0, float(np.abs(mesh.vertices).max())):
                raise ParameterError(f"no mesh vertex at pinned point {tuple(point)}")
            for c, v in zip(comps, vals):
                values[2 * vid + c] = float(v)
        dofs = np.array(sorted(values), dtype=np.int64)
        return dofs, np.array([values[d] for d in dofs])

    def load_vector(self, mesh):
        f = np.zeros(2 * mesh.n_vertices)
        for label, t in self.traction:
            be = mesh.boundary_edges[mesh.edge_labels == label]
            length = np.linalg.norm(mesh.vertices[be[:, 1]] - mesh.vertices[be[:, 0]], axis=1)
            for c in (0, 1):
                w = 0.5 * t[c] * length
                np.add.at(f, 2 * be[:, 0] + c, w)
                np.add.at(f, 2 * be[:, 1] + c, w)
        return f


def strain_matrices(mesh):
    """Per-element strain-displacement matrices, shape (m, 3, 6)."""
    g = mesh.grad_basis
    m = mesh.n_triangles
    B = np.zeros((m, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    return B


class ElasticityProblem:
    """Cached P1 discretization of the elasticity problem on one mesh.

    The unit-density element matrices, the sparsity pattern and the load
    vector are built once; :meth:`solve` only rescales them by the
    element-centroid value of chi.
    """

    def __init__(self, mesh, material, bc):
        bc.validate(mesh)
        self.mesh = mesh
        self.material = material
        self.bc = bc
        self.B = strain_matrices(mesh)
        D = material.elasticity_matrix
        self.ke = mesh.areas[:, None, None] * np.einsum("mki,kl,mlj->mij", self.B, D, self.B)
        dofs = np.empty((mesh.n_triangles, 6), dtype=np.int64)
        dofs[:, 0::2] = 2 * mesh.triangles
        dofs[:, 1::2] = 2 * mesh.triangles + 1
        self.element_dofs = dofs
        self._rows = np.repeat(dofs, 6, axis=1).ravel()
        self._cols = np.tile(dofs, (1, 6)).ravel()
        self.n_dofs = 2 * mesh.n_vertices
        self.load = bc.load_vector(mesh)
        self.fixed, self.fixed_values = bc.fixed_dofs(mesh)
        free = np.ones(self.n_dofs, dtype=bool)
        free[self.fixed] = False
        self.free = np.flatnonzero(free)

    def element_chi(self, chi):
        """Centroid value of the P1 interpolant of nodal chi on each element."""
        if chi is None:
            return np.ones(self.mesh.n_triangles)
        chi = np.asarray(chi, dtype=float)
        if chi.ndim == 0:
            return np.full(self.mesh.n_triangles, float(chi))
        return chi[self.mesh.triangles].mean(axis=1)

    def stiffness(self, chi=None):
        """Global stiffness matrix weighted by chi (CSR, all dofs)."""
        w = self.element_chi(chi)
        data = (w[:, None, None] * self.ke).ravel()
        K = sparse.coo_matrix((data, (self._rows, self._cols)), shape=(self.n_dofs, self.n_dofs))
        return K.tocsr()

    def solve(self, chi=None, rtol=1e-10):
        """Displacement field, shape (n, 2), for the given nodal chi."""
        K = self.stiffness(chi)
        u = np.zeros(self.n_dofs)
        u[self.fixed] = self.fixed_values
        rhs = self.load - K @ u
        Kff = K[self.free][:, self.free].tocsc()
        b = rhs[self.free]
        try:
            x = spla.splu(Kff, permc_spec="MMD_AT_PLUS_A").solve(b)
        except RuntimeError as exc:
            logger.warning("direct factorization failed (%s); falling back to CG", exc)
            x = None
        if x is None or not np.all(np.isfinite(x)):
            x = self._cg(Kff, b, rtol)
        res = np.linalg.norm(Kff @ x - b)
        scale = max(np.linalg.norm(b), 1e-300)
        if not np.isfinite(res) or res > 1e-6 * scale:
            x = self._cg(Kff, b, rtol, x0=x if np.all(np.isfinite(x)) else None)
        u[self.free] = x
        return u.reshape(-1, 2)

    @staticmethod
    def _cg(A, b, rtol, x0=None):
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise SolverError("stiffness matrix has a non-positive diagonal entry")
        precond = spla.LinearOperator(A.shape, matvec=lambda r: r / diag)
        x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=20 * A.shape[0], M=precond)
        res = float(np.linalg.norm(A @ x - b))
        if info != 0 or res > 10 * rtol * max(np.linalg.norm(b), 1e-300):
            raise SolverError(f"conjugate gradient did not converge (residual {res:.3e})", residual=res)
        return x

    def compliance(self, u):
        return compliance(self.mesh, u, self.bc)

    def strain_energy_density(self, u):
        """sigma(u):epsilon(u) on every element (constant for P1)."""
        ue = np.asarray(u, dtype=float).reshape(-1)[self.element_dofs]
        eps = np.einsum("mij,mj->mi", self.B, ue)
        return np.einsum("mi,ij,mj->m", eps, self.material.elasticity_matrix, eps)


def solve_state(mesh, chi, material, bc):
    """Solve the chi-weighted elasticity problem; returns nodal displacements (n, 2)."""
    chi = np.asarray(chi, dtype=float)
    if chi.ndim and np.any(chi <= 0):
        raise ParameterError("chi must be strictly positive for a well-posed state equation")
    return ElasticityProblem(mesh, material, bc).solve(chi)


def compliance(mesh, u, bc):
    """Work of the tractions, integrated exactly edge by edge."""
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    total = 0.0
    for label, t in bc.traction:
        be = mesh.boundary_edges[mesh.edge_labels == label]
        length = np.linalg.norm(mesh.vertices[be[:, 1]] - mesh.vertices[be[:, 0]], axis=1)
        tu = u[be] @ np.asarray(t, dtype=float)
        total += float(np.sum(0.5 * length * (tu[:, 0] + tu[:, 1])))
    return total


def strain_energy_density(mesh, u, material, element=None):
    """sigma(u):epsilon(u) per element, or for a single element."""
    B = strain_matrices(mesh)
    dofs = np.empty((mesh.n_triangles, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    ue = np.asarray(u, dtype=float).reshape(-1)[dofs]
    eps = np.einsum("mij,mj->mi", B, ue)
    w = np.einsum("mi,ij,mj->m", eps, material.elasticity_matrix, eps)
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite strain energy density")
    return w if element is None else float(w[element])
