"""Optimization loops on a fixed mesh and with interleaved mesh adaptation."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .benchmarks import get_case, initial_levelset
from .errors import LevityError, ParameterError, RunAborted
from .estimator import filter_levelset
from .fem import ElasticityProblem, MaterialModel
from .levelset import LevelSetEvolver, MultiplierState, characteristic, sensitivity, threshold, volume
from .mesh import TriMesh, element_geometries
from .metric import MetricOptions, build_metric
from .remesh import AdaptParams, adapt_mesh
from .transfer import PointLocator, project_field

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Inputs of an optimization run.

    Defaults are those of the selected benchmark case; see
    :meth:`from_case`. ``holes`` lists ``(cx, cy, r)`` disks subtracted from
    the constant initial level set ``phi0``. ``volume_rate`` is the largest
    volume decrease per iteration (fraction of ``V0``) requested by the
    multiplier update, and a run counts as converged after ``patience``
    consecutive iterations with ``errComp <= CTOL`` on a design whose volume
    fraction is within ``volume_tolerance`` of ``alpha``.
    """

    case: str = "CLC"
    CTOL: float = 1e-4
    TOL: float = 8e-2
    ATOL: float = 5e-3
    kmax: int = 400
    kStart: int = 150
    kAdapt: int = 15
    grade: int = 1
    h_iso: float = 1.0 / 40.0
    dt: float = 0.1
    alpha: float = 0.5
    chi_min: float = 1e-3
    tau: float = 6e-4
    beta: float = 10.0
    phi0: float = 1.0
    holes: list = field(default_factory=list)
    mesh_elements: int = 25600
    E: float = 1000.0
    nu: float = 0.3
    out_dir: str = None
    volume_rate: float = 0.01
    volume_tolerance: float = 5e-3
    patience: int = 5
    h_min: float = None
    h_max: float = None

    @classmethod
    def from_case(cls, name="CLC", **overrides):
        case = get_case(name)
        names = {f.name for f in fields(cls)}
        values = {k: v for k, v in case.defaults.items() if k in names}
        values["holes"] = [tuple(h) for h in case.defaults.get("holes", [])]
        unknown = set(overrides) - names
        if unknown:
            raise ParameterError(f"unknown configuration keys: {sorted(unknown)}")
        values.update(overrides)
        values["case"] = case.name
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def validate(self):
        for name in ("CTOL", "TOL", "ATOL", "dt", "tau", "beta", "volume_rate"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.chi_min < 1.0:
            raise ParameterError(f"chi_min must lie in (0, 1), got {self.chi_min}")
        if self.kmax < 0 or self.kStart < 0 or self.kAdapt < 1:
            raise ParameterError("kmax, kStart must be nonnegative and kAdapt positive")
        if self.kmax > 0 and not self.kStart < self.kmax:
            raise ParameterError("kStart must be smaller than kmax")
        if self.grade not in (0, 1):
            raise ParameterError("grade must be 0 or 1")
        if not self.h_iso > 0:
            raise ParameterError("h_iso must be positive")
        if self.patience < 1:
            raise ParameterError("patience must be at least 1")
        if self.mesh_elements < 2:
            raise ParameterError("mesh_elements must be at least 2")
        for r in self.holes:
            if len(r) != 3 or not r[2] > 0:
                raise ParameterError(f"hole {r} must be (cx, cy, r) with r > 0")
        MaterialModel(self.E, self.nu)

    def benchmark(self):
        return get_case(self.case)

    @property
    def V0(self):
        return self.benchmark().area

    def as_dict(self):
        return asdict(self)


@dataclass
class IterationRecord:
    iter: int
    compliance: float
    volume_fraction: float
    cardinality: int
    errComp: float
    errMesh: float
    adapted: bool
    seconds: float


class ConvergenceHistory:
    """Per-iteration trace of a run; iteration 0 is the initial state."""

    COLUMNS = ("iter", "compliance", "volume_fraction", "cardinality", "errComp", "errMesh", "adapted", "seconds")

    def __init__(self):
        self.records = []

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def last(self):
        return self.records[-1] if self.records else None

    @property
    def iterations(self):
        """Number of completed optimization iterations."""
        return max(0, len(self.records) - 1)


@dataclass
class Layout:
    """Material region of a level set, clipped along its zero isocontour.

    ``vertices``/``triangles`` triangulate the region ``phi >= 0``;
    ``polylines`` are the zero-isocontour pieces, each an (k, 2) array.
    """

    mesh: TriMesh
    phi: np.ndarray
    vertices: np.ndarray
    triangles: np.ndarray
    polylines: list
    compliance: float = math.nan

    @property
    def area(self):
        if len(self.triangles) == 0:
            return 0.0
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return float(0.5 * np.sum(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]))


@dataclass
class RunResult:
    layout: Layout
    history: ConvergenceHistory
    mesh: TriMesh
    phi: np.ndarray
    displacement: np.ndarray
    converged: bool
    config: RunConfig

    def __iter__(self):
        return iter((self.layout, self.history, self.mesh))


def extract_layout(phi, mesh, compliance=math.nan):
    """Clip every element along the linear zero level of ``phi``.

    Vertices with ``phi = 0`` count as material. Crossing points are shared
    between the two elements of an edge, which lets the isocontour pieces be
    chained into polylines; they end on the boundary or close on themselves.
    """
    phi = np.asarray(phi, dtype=float)
    X = mesh.vertices
    points, index = [], {}

    def point(i, j):
        # crossing on edge (i, j), i material and j void
        t = phi[i] / (phi[i] - phi[j])
        key = ("v", i) if t == 0.0 else ("e", min(i, j), max(i, j))
        if key not in index:
            index[key] = len(points)
            points.append(X[i] + t * (X[j] - X[i]))
        return index[key], key

    def vertex(i):
        key = ("v", i)
        if key not in index:
            index[key] = len(points)
            points.append(X[i])
        return index[key]

    tris, segments = [], []
    mat = phi >= 0.0
    for t in mesh.triangles:
        m = mat[t]
        n = int(m.sum())
        if n == 3:
            tris.append([vertex(v) for v in t])
        elif n == 0:
            continue
        else:
            r = int(np.flatnonzero(m if n == 1 else ~m)[0])
            a, b, c = t[r], t[(r + 1) % 3], t[(r + 2) % 3]
            if n == 1:
                # a material; b and c void
                pb, kb = point(a, b)
                pc, kc = point(a, c)
                tris.append([vertex(a), pb, pc])
                segment = (pb, kb), (pc, kc)
            else:
                # a void; b and c material
                pb, kb = point(b, a)
                pc, kc = point(c, a)
                tris.append([pb, vertex(b), vertex(c)])
                tris.append([pb, vertex(c), pc])
                segment = (pc, kc), (pb, kb)
            if segment[0][1] != segment[1][1]:
                segments.append((segment[0][0], segment[1][0]))
    vertices = np.array(points).reshape(-1, 2)
    triangles = np.array(tris, dtype=np.int64).reshape(-1, 3)
    return Layout(mesh, phi, vertices, triangles, _chain(segments, vertices), compliance)


def _chain(segments, vertices):
    """Join segments sharing end points into polylines."""
    adj = {}
    for k, (a, b) in enumerate(segments):
        adj.setdefault(a, []).append(k)
        adj.setdefault(b, []).append(k)
    used = [False] * len(segments)
    lines = []

    def walk(start, k):
        path = [start]
        cur = start
        while k is not None:
            used[k] = True
            a, b = segments[k]
            cur = b if a == cur else a
            path.append(cur)
            k = next((j for j in adj[cur] if not used[j]), None)
        return path

    # open chains start at points of odd degree
    for p in sorted(adj):
        if len(adj[p]) % 2 == 1:
            k = next((j for j in adj[p] if not used[j]), None)
            if k is not None:
                lines.append(walk(p, k))
    for k in range(len(segments)):
        if not used[k]:
            lines.append(walk(segments[k][0], k))
    return [vertices[np.array(path)] for path in lines]


class _State:
    """Mesh-bound objects of the loop, rebuilt after every adaptation."""

    def __init__(self, cfg, mesh, phi, case):
        self.mesh = mesh
        self.phi = phi
        self.problem = ElasticityProblem(mesh, MaterialModel(cfg.E, cfg.nu), case.boundary_conditions())
        self.evolver = LevelSetEvolver(mesh, cfg.tau, cfg.dt)
        self.chi = characteristic(phi, cfg.chi_min)
        self.u = self.problem.solve(self.chi)
        self.compliance = self.problem.compliance(self.u)


def _initial(cfg):
    case = cfg.benchmark()
    mesh = case.mesh(cfg.mesh_elements)
    phi = initial_levelset(mesh, cfg.phi0, cfg.holes)
    return case, mesh, phi


def _step(cfg, st, multiplier, V0):
    """Sensitivity, evolution and thresholding; returns the new compliance."""
    d, kappa = sensitivity(
        st.mesh, st.u, st.chi, st.problem.material, multiplier, cfg.alpha, V0,
        phi=st.phi, evolver=st.evolver, chi_min=cfg.chi_min,
    )
    st.phi = threshold(st.evolver.step(st.phi, d, kappa))
    st.chi = characteristic(st.phi, cfg.chi_min)
    st.u = st.problem.solve(st.chi)
    return st.problem.compliance(st.u)


def _err(new, old):
    return abs(new - old) / abs(old) if old != 0 else (0.0 if new == 0 else math.inf)


class _Stopping:
    """Consecutive small compliance variations on a volume-feasible design."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.streak = 0

    def update(self, err, volume_fraction):
        feasible = volume_fraction <= self.cfg.alpha + self.cfg.volume_tolerance
        self.streak = self.streak + 1 if (err <= self.cfg.CTOL and feasible) else 0
        return self.streak >= self.cfg.patience


def run_fixed(cfg, callback=None):
    """Level-set optimization on the initial mesh (no adaptation).

    Returns a :class:`RunResult`; unpacks as ``(layout, history, mesh)``.
    Errors raised by the numerical modules abort the run with a
    :class:`RunAborted` carrying the partial history.
    """
    cfg.validate()
    case, mesh, phi = _initial(cfg)
    V0 = case.area
    history = ConvergenceHistory()
    t0 = time.perf_counter()
    try:
        st = _State(cfg, mesh, phi, case)
        history.append(IterationRecord(0, st.compliance, volume(mesh, st.chi) / V0, mesh.n_triangles,
                                       math.nan, math.nan, False, time.perf_counter() - t0))
        multiplier = MultiplierState(rate=cfg.volume_rate)
        stop = _Stopping(cfg)
        converged = False
        for k in range(1, cfg.kmax + 1):
            J = _step(cfg, st, multiplier, V0)
            err = _err(J, st.compliance)
            st.compliance = J
            vf = volume(st.mesh, st.chi) / V0
            history.append(IterationRecord(k, J, vf, mesh.n_triangles, err, math.nan, False,
                                           time.perf_counter() - t0))
            if callback:
                callback(k, st, history)
            if stop.update(err, vf):
                converged = True
                break
    except LevityError as exc:
        raise RunAborted(f"run aborted: {exc}", history=history) from exc
    layout = extract_layout(st.phi, st.mesh, st.compliance)
    return RunResult(layout, history, st.mesh, st.phi, st.u, converged, cfg)


def adapt_once(cfg, mesh, phi, chi):
    """Metric from the filtered level set, then a remeshing of ``mesh``."""
    w = filter_levelset(phi, cfg.beta)
    options = MetricOptions(h_min=cfg.h_min, h_max=cfg.h_max)
    metric, _ = build_metric(mesh, w, cfg.TOL, chi=chi, h_iso=cfg.h_iso, grade=cfg.grade, options=options)
    return adapt_mesh(mesh, metric, AdaptParams())


def run_levity(cfg, callback=None):
    """Level-set optimization with anisotropic mesh adaptation.

    Adaptation is attempted after ``kStart`` iterations whenever the
    compliance variation drops below ``CTOL`` or every ``kAdapt``
    iterations; the run ends once an adaptation changes the cardinality by
    at most ``ATOL`` (relative), or at ``kmax``.
    """
    cfg.validate()
    case, mesh, phi = _initial(cfg)
    V0 = case.area
    history = ConvergenceHistory()
    t0 = time.perf_counter()
    converged = False
    try:
        st = _State(cfg, mesh, phi, case)
        history.append(IterationRecord(0, st.compliance, volume(mesh, st.chi) / V0, mesh.n_triangles,
                                       math.nan, math.nan, False, time.perf_counter() - t0))
        multiplier = MultiplierState(rate=cfg.volume_rate)
        err_mesh = math.inf
        adapted_once = False
        k = 0
        while k < cfg.kmax and (not adapted_once or err_mesh > cfg.ATOL):
            k += 1
            J = _step(cfg, st, multiplier, V0)
            err = _err(J, st.compliance)
            st.compliance = J
            adapted = False
            if k > cfg.kStart and (err < cfg.CTOL or k % cfg.kAdapt == 0):
                old = st.mesh
                new = adapt_once(cfg, old, st.phi, st.chi)
                phi_new = project_field(old, st.phi, new, locator=PointLocator(old), levelset=True)
                err_mesh = abs(new.n_triangles - old.n_triangles) / old.n_triangles
                # the state is re-solved on the new mesh; the next variation
                # is measured against this compliance
                st = _State(cfg, new, phi_new, case)
                adapted = adapted_once = True
            vf = volume(st.mesh, st.chi) / V0
            history.append(IterationRecord(k, J, vf, st.mesh.n_triangles, err,
                                           err_mesh if adapted else math.nan, adapted,
                                           time.perf_counter() - t0))
            logger.info("k=%d J=%.6g vol=%.4f card=%d errComp=%.2e%s", k, J, vf, st.mesh.n_triangles, err,
                        f" adapted errMesh={err_mesh:.3e}" if adapted else "")
            if callback:
                callback(k, st, history)
        converged = adapted_once and err_mesh <= cfg.ATOL
    except LevityError as exc:
        raise RunAborted(f"run aborted: {exc}", history=history) from exc
    layout = extract_layout(st.phi, st.mesh, st.compliance)
    return RunResult(layout, history, st.mesh, st.phi, st.u, converged, cfg)


def max_aspect_ratio(mesh):
    return float(element_geometries(mesh).aspect_ratios[:, 0].max())
