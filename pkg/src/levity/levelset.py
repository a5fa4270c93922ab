"""Level-set state: characteristic function, volume, sensitivity and evolution."""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import NumericalError, ParameterError, SolverError
from .fem import strain_energy_density


def characteristic(phi, chi_min):
    """Nodal material indicator: 1 where ``phi >= 0``, ``chi_min`` elsewhere."""
    if not 0.0 < chi_min < 1.0:
        raise ParameterError(f"chi_min must lie in (0, 1), got {chi_min}")
    phi = np.asarray(phi, dtype=float)
    return np.where(phi >= 0.0, 1.0, chi_min)


def volume(mesh, chi):
    """Exact integral of the P1 interpolant of nodal ``chi``."""
    chi = np.asarray(chi, dtype=float)
    return float(np.dot(mesh.areas, chi[mesh.triangles].mean(axis=1)))


def threshold(phi):
    """Clamp nodal values back into [-1, 1]."""
    return np.clip(np.asarray(phi, dtype=float), -1.0, 1.0)


@dataclass
class MultiplierState:
    """Volume multiplier ``theta`` and reaction normalization ``kappa``.

    ``rate`` bounds how fast the volume target moves towards ``alpha * V0``
    (fraction of ``V0`` per iteration).
    """

    theta: float = 0.0
    kappa: float = 1.0
    rate: float = 0.01

    def __post_init__(self):
        if self.theta < 0:
            raise ParameterError("theta must be nonnegative")
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if not self.rate > 0:
            raise ParameterError("volume rate must be positive")


def nodal_average(mesh, element_values):
    """Area-weighted average of element values over the elements around each vertex."""
    vt = mesh.vertex_triangles
    w = vt @ mesh.areas
    return (vt @ (mesh.areas * element_values)) / w


def lumped_weights(mesh):
    """Row sums of the P1 mass matrix (a third of the area around each vertex)."""
    return (mesh.vertex_triangles @ mesh.areas) / 3.0


def energy_density(mesh, u, chi, material):
    """Nodal chi * sigma(u):epsilon(u), averaged from elements by area."""
    chi_e = np.asarray(chi, dtype=float)[mesh.triangles].mean(axis=1)
    e = nodal_average(mesh, chi_e * strain_energy_density(mesh, u, material))
    if not np.all(np.isfinite(e)):
        raise NumericalError("non-finite energy density in the sensitivity")
    return e


def normalization(mesh, d):
    """``1 / mean|d|`` with area weights; 1 for an identically zero field."""
    w = lumped_weights(mesh)
    mean = float(np.dot(w, np.abs(d)) / w.sum())
    return 1.0 / mean if mean > 0.0 else 1.0


def sensitivity(mesh, u, chi, material, state, alpha, V0, phi=None, evolver=None, chi_min=1e-3):
    """Reaction term ``d = chi sigma(u):epsilon(u) - theta`` and its normalization.

    When the current level set ``phi`` and the ``evolver`` of the next step
    are given, ``state.theta`` is first chosen as the smallest nonnegative
    multiplier whose updated design meets the volume target
    ``max(alpha V0, C(chi) - rate V0)``. Otherwise ``state.theta`` is used
    as is. Returns ``(d, kappa)``; ``state.kappa`` is updated.
    """
    e = energy_density(mesh, u, chi, material)
    if phi is not None and evolver is not None:
        target = max(alpha * V0, volume(mesh, chi) - state.rate * V0)
        state.theta = select_multiplier(mesh, e, phi, evolver, chi_min, target)
    d = e - state.theta
    state.kappa = normalization(mesh, d)
    return d, state.kappa


def select_multiplier(mesh, e, phi, evolver, chi_min, target, iterations=60):
    """Bisection for the smallest theta whose evolved design has volume <= target."""
    base = evolver.diffuse(phi)
    response = evolver.react(e)

    def vol(theta):
        d = e - theta
        kappa = normalization(mesh, d)
        trial = threshold(base + kappa * (response - theta * evolver.dt))
        return volume(mesh, characteristic(trial, chi_min))

    if vol(0.0) <= target:
        return 0.0
    lo, hi = 0.0, max(float(e.max()), 1e-300)
    if vol(hi) > target:
        return hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if vol(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return hi


def mass_matrix(mesh):
    """Consistent P1 mass matrix."""
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    data = mesh.areas[:, None, None] * local[None]
    return _assemble(mesh, data)


def laplace_matrix(mesh):
    """P1 stiffness matrix of the Laplacian (natural Neumann boundary)."""
    g = mesh.grad_basis
    data = mesh.areas[:, None, None] * np.einsum("mik,mjk->mij", g, g)
    return _assemble(mesh, data)


def _assemble(mesh, data):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sparse.coo_matrix((data.ravel(), (rows, cols)), shape=(n, n)).tocsr()


class LevelSetEvolver:
    """Backward-Euler step of the reaction-diffusion evolution on a fixed mesh.

    Diffusion is implicit, the reaction explicit; the system matrix
    ``M / dt + tau K`` is factorized once per mesh.
    """

    def __init__(self, mesh, tau, dt):
        if not tau > 0 or not dt > 0:
            raise ParameterError("tau and dt must be positive")
        self.mesh, self.tau, self.dt = mesh, float(tau), float(dt)
        self.M = mass_matrix(mesh)
        A = (self.M / self.dt + self.tau * laplace_matrix(mesh)).tocsc()
        try:
            self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"level-set system factorization failed: {exc}") from exc

    def step(self, phi, d, kappa):
        rhs = self.M @ (np.asarray(phi, dtype=float) / self.dt + kappa * np.asarray(d, dtype=float))
        out = self._lu.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise SolverError("level-set update produced non-finite values")
        return out

    # the step is affine in (phi, d); the two parts are exposed for the
    # multiplier search, using that the system maps dt * 1 to M 1
    def diffuse(self, phi):
        return self._lu.solve(self.M @ (np.asarray(phi, dtype=float) / self.dt))

    def react(self, d):
        return self._lu.solve(self.M @ np.asarray(d, dtype=float))


def evolve_levelset(mesh, phi, d, kappa, tau, dt):
    """One semi-implicit step; the result is not thresholded."""
    return LevelSetEvolver(mesh, tau, dt).step(phi, d, kappa)
