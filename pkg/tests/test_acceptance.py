"""End-to-end acceptance checks on the built-in benchmarks.

Every test prints one ``criterion N: PASS|FAIL`` line, also repeated in the
terminal summary. The optimization runs are shared through a cache, so the
whole module costs about the sum of the distinct runs (about half an hour
on one core). ``LEVITY_FAST=1`` skips the two bridge runs of criterion 5.
"""

import functools
import math
import os

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.sparse.linalg import eigsh

import conftest
from conftest import perturbed_square, random_spd, stretching_objective
from levity.benchmarks import get_case
from levity.driver import RunConfig, max_aspect_ratio, run_fixed, run_levity
from levity.estimator import filter_levelset, global_estimator, local_estimators, patch_matrices, recovered_gradients
from levity.fem import BoundaryConditions, ElasticityProblem, MaterialModel, compliance
from levity.mesh import element_geometries
from levity.metric import optimal_element_spec
from levity.remesh import adapt_mesh

pytestmark = pytest.mark.acceptance

FAST = os.environ.get("LEVITY_FAST", "") not in ("", "0")


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def within(value, ref, rel):
    return abs(value - ref) <= rel * abs(ref)


class Watch:
    """Per-iteration checks: PSD of the scaled patch matrices, positive areas."""

    def __init__(self, beta):
        self.beta = beta
        self.worst_psd = 0.0
        self.min_area = math.inf
        self.calls = 0

    def __call__(self, k, state, history):
        G = patch_matrices(state.mesh, filter_levelset(state.phi, self.beta)).scaled_matrix
        lam = np.linalg.eigvalsh(G)
        scale = np.maximum(np.abs(lam).max(axis=1), 1e-300)
        self.worst_psd = min(self.worst_psd, float((lam[:, 0] / scale).min()))
        self.min_area = min(self.min_area, float(state.mesh.areas.min()))
        self.calls += 1


RUNS = {
    "CLC fixed": ("fixed", "CLC", {}),
    "CLC graded": ("levity", "CLC", {}),
    "CLC ungraded": ("levity", "CLC", {"grade": 0}),
    "CLSC plain": ("levity", "CLSC", {}),
    "CLSC perforated": ("levity", "CLSC", {"holes": [(40, 32, 12), (40, 96, 12), (100, 32, 12), (100, 96, 12)]}),
    "CLSC coarse": ("levity", "CLSC", {"mesh_elements": 2560}),
    "CBLB tau 0.5": ("levity", "CBLB", {"tau": 0.5}),
    "CBLB tau 2": ("levity", "CBLB", {"tau": 2.0}),
}


@functools.cache
def get(name):
    mode, case, overrides = RUNS[name]
    cfg = RunConfig.from_case(case, **overrides)
    watch = Watch(cfg.beta)
    res = (run_fixed if mode == "fixed" else run_levity)(cfg, callback=watch)
    return res, watch


def summary(res):
    return (f"J={res.layout.compliance:.5g} vol={res.history.last.volume_fraction:.4f} "
            f"iters={res.history.iterations} elements={res.mesh.n_triangles}")


def test_criterion_1_fixed_mesh_baseline():
    res, _ = get("CLC fixed")
    ok = res.converged and res.history.iterations < 400 and within(res.layout.compliance, 1.40e-2, 0.05)
    report(1, ok, f"CLC fixed mesh, {summary(res)} converged={res.converged} (target 1.40e-2 +-5%)")


def interface_band(mesh, phi, layers=2):
    """Elements cut by the zero level plus ``layers`` rings of neighbours."""
    t = mesh.triangles
    band = (phi[t] >= 0).any(axis=1) & (phi[t] < 0).any(axis=1)
    for _ in range(layers):
        touched = np.zeros(mesh.n_vertices, dtype=bool)
        touched[t[band].ravel()] = True
        band = touched[t].any(axis=1)
    return band


def test_criterion_2_graded_adaptive_run():
    res, _ = get("CLC graded")
    ar = element_geometries(res.mesh).aspect_ratios[:, 0]
    u2 = res.displacement[:, 1].min()
    near = interface_band(res.mesh, res.phi)[int(np.argmax(ar))]
    checks = {
        "converged": res.converged,
        "compliance": within(res.layout.compliance, 1.39e-2, 0.05),
        "min u_y": within(u2, -2.79e-2, 0.05),
        "cardinality": 4000 <= res.mesh.n_triangles <= 16000,
        "max aspect ratio": ar.max() >= 10,
        "near interface": bool(near),
    }
    failed = [k for k, v in checks.items() if not v]
    report(2, not failed, f"CLC graded, {summary(res)} min u_y={u2:.5g} max AR={ar.max():.2f} "
                          f"(at interface: {near}){' failed: ' + ', '.join(failed) if failed else ''}")


def test_criterion_3_grading_direction():
    graded, _ = get("CLC graded")
    flat, _ = get("CLC ungraded")
    ok = flat.layout.compliance < graded.layout.compliance
    report(3, ok, f"grade=0 J={flat.layout.compliance:.5g} < grade=1 J={graded.layout.compliance:.5g}")


def test_criterion_4_volume_feasibility():
    names = ["CLC fixed", "CLC graded", "CLC ungraded", "CLSC plain", "CLSC perforated", "CLSC coarse"]
    if not FAST:
        names += ["CBLB tau 0.5", "CBLB tau 2"]
    rows, ok = [], True
    for name in names:
        res, _ = get(name)
        if res.converged:
            vf = res.history.last.volume_fraction
            ok &= vf <= res.config.alpha + 0.02
            rows.append(f"{name} {vf:.4f}")
        else:
            rows.append(f"{name} not converged")
    report(4, ok, "volume fractions: " + "; ".join(rows))


def test_criterion_5_cantilever_bridge():
    if FAST:
        conftest.ACCEPTANCE[5] = "criterion 5: SKIP  bridge runs disabled by LEVITY_FAST"
        pytest.skip("LEVITY_FAST is set")
    low, _ = get("CBLB tau 0.5")
    high, _ = get("CBLB tau 2")
    ar_low, ar_high = max_aspect_ratio(low.mesh), max_aspect_ratio(high.mesh)
    ok = (within(low.layout.compliance, 62.61, 0.15) and high.mesh.n_triangles < low.mesh.n_triangles
          and ar_high < ar_low)
    report(5, ok, f"tau=0.5 {summary(low)} AR={ar_low:.2f}; tau=2 {summary(high)} AR={ar_high:.2f}")


def test_criterion_6_optimal_stretching():
    rng = np.random.default_rng(2024)
    G = random_spd(rng, 100)
    spec = optimal_element_spec(G, 1.0, 1, 1.0, s_max=np.inf)
    worst_random, worst_min = -np.inf, 0.0
    for k in range(100):
        s1 = spec.stretching[k, 0]
        angle = math.atan2(spec.directions[k, 1, 0], spec.directions[k, 0, 0])
        ours = stretching_objective(G[k], s1, angle)
        # random feasible candidates: s1 >= 1, any orientation
        cs = np.exp(rng.uniform(0, math.log(1e4), 10000))
        ca = rng.uniform(0, math.pi, 10000)
        r1 = np.stack([np.cos(ca), np.sin(ca)], axis=1)
        r2 = np.stack([-r1[:, 1], r1[:, 0]], axis=1)
        cand = cs * np.einsum("ni,ij,nj->n", r1, G[k], r1) + np.einsum("ni,ij,nj->n", r2, G[k], r2) / cs
        worst_random = max(worst_random, (ours - cand.min()) / abs(cand.min()))
        fun = lambda x: stretching_objective(G[k], math.exp(x[0]), x[1])
        best = min((minimize(fun, [0.5, a0], bounds=[(0, 20), (None, None)], method="L-BFGS-B",
                             options=dict(ftol=1e-15, gtol=1e-12)) for a0 in np.linspace(0, math.pi, 4, endpoint=False)),
                   key=lambda r: r.fun)
        worst_min = max(worst_min, abs(ours - best.fun))
    ok = worst_random <= 1e-12 and worst_min <= 1e-6
    report(6, ok, f"100 SPD matrices: closed form minus best of 1e4 candidates <= {worst_random:.2e} (relative), "
                  f"|closed form - numerical minimum| <= {worst_min:.2e}")


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def test_criterion_7_estimator_properties():
    mesh = perturbed_square(12, 0.3, seed=11)
    affine = mesh.vertices @ [1.3, -0.4] + 0.2
    eta_affine = global_estimator(mesh, affine)
    grad_err = np.abs(recovered_gradients(mesh, affine) - [1.3, -0.4]).max()
    rng = np.random.default_rng(5)
    w = rng.normal(size=mesh.n_vertices)
    moved = mesh.with_vertices(mesh.vertices @ rotation(1.1).T + [3.0, -7.0])
    a, b = local_estimators(mesh, w), local_estimators(moved, w)
    rigid = float(np.abs(a - b).max() / np.abs(a).max())
    names = ["CLC fixed", "CLC graded", "CLC ungraded", "CLSC plain", "CLSC perforated", "CLSC coarse"]
    if not FAST:
        names += ["CBLB tau 0.5", "CBLB tau 2"]
    worst, calls = 0.0, 0
    for name in names:
        _, watch = get(name)
        worst = min(worst, watch.worst_psd)
        calls += watch.calls
    ok = eta_affine <= 1e-12 and grad_err <= 1e-12 and rigid <= 1e-10 and worst >= -1e-12
    report(7, ok, f"affine eta={eta_affine:.1e}, recovered gradient error={grad_err:.1e}, rigid motion={rigid:.1e}, "
                  f"min eigenvalue/|G| over {calls} iterations={worst:.1e}")


def test_criterion_8_fem_properties():
    mesh = perturbed_square(8, 0.3, seed=8)
    A = np.array([[2e-3, -1e-3], [5e-4, 1e-3]])
    exact = mesh.vertices @ A.T + [1e-3, 2e-3]
    pins = [(mesh.vertices[v], (0, 1), exact[v]) for v in np.unique(mesh.boundary_edges)]
    prob = ElasticityProblem(mesh, MaterialModel(), BoundaryConditions(pins=pins))
    patch = float(np.abs(prob.solve(np.ones(mesh.n_vertices)) - exact).max())

    case = get_case("CLC")
    clc = case.mesh(3200)
    prob = ElasticityProblem(clc, case.material(), case.boundary_conditions())
    chi = np.where(np.random.default_rng(1).uniform(size=clc.n_vertices) < 0.5, 1.0, 1e-3)
    K = prob.stiffness(chi)
    sym = float(abs(K - K.T).max() / abs(K).max())
    Kff = K[prob.free][:, prob.free]
    lmin = float(eigsh(Kff, k=1, sigma=0, which="LM", return_eigenvectors=False)[0])
    u = prob.solve(chi)
    J = compliance(clc, u, case.boundary_conditions())
    rel = abs(J - u.ravel() @ prob.load) / abs(J)
    ok = patch <= 1e-10 and sym <= 1e-14 and lmin > 0 and rel <= 1e-12
    report(8, ok, f"patch test error={patch:.1e}, asymmetry={sym:.1e}, smallest free eigenvalue={lmin:.3e}, "
                  f"|J - u.f|/J={rel:.1e}")


def test_criterion_9_remesher_conformity():
    rows, ok = [], True
    for mesh, h in ((perturbed_square(6, 0.25, seed=0), 0.1), (get_case("CLC").mesh(800), 0.05)):
        metric = np.tile(np.eye(2) / h**2, (mesh.n_vertices, 1, 1))
        out, rep = adapt_mesh(mesh, metric, report=True)
        again = adapt_mesh(mesh, metric)
        a, b = out.edges.T
        L = np.linalg.norm(out.vertices[b] - out.vertices[a], axis=1) / h
        frac = float(np.mean((L >= 1 / math.sqrt(2)) & (L <= math.sqrt(2))))
        area = mesh.areas.sum()
        darea = abs(out.areas.sum() - area) / area
        same = np.array_equal(out.vertices, again.vertices) and np.array_equal(out.triangles, again.triangles)
        ok &= frac >= 0.9 and out.areas.min() > 0 and darea <= 1e-10 and same
        rows.append(f"h={h}: {out.n_triangles} elements, unit edges {100 * frac:.1f}%, min area {out.areas.min():.2e}, "
                    f"area error {darea:.1e}, identical rerun {same}")
    # every mesh met during the adaptive benchmark runs
    min_area = min(get(name)[1].min_area for name in ("CLC graded", "CLC ungraded", "CLSC plain"))
    ok &= min_area > 0
    rows.append(f"smallest element area over the adaptive runs {min_area:.2e}")
    report(9, ok, "; ".join(rows))


def test_criterion_10_initial_topology_and_resolution():
    plain, _ = get("CLSC plain")
    holes, _ = get("CLSC perforated")
    coarse, _ = get("CLSC coarse")

    def spread(a, b):
        return abs(a - b) / min(a, b)

    topo = spread(plain.layout.compliance, holes.layout.compliance)
    res = spread(plain.layout.compliance, coarse.layout.compliance)
    ok = topo <= 0.05 and res <= 0.05
    report(10, ok, f"CLSC phi0=1 J={plain.layout.compliance:.4g} (from {plain.config.mesh_elements} elements), "
                   f"perforated J={holes.layout.compliance:.4g}, {coarse.config.mesh_elements}-element start "
                   f"J={coarse.layout.compliance:.4g}; spreads {100 * topo:.2f}% and {100 * res:.2f}%")
