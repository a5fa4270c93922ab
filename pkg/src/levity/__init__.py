"""Level-set topology optimization with anisotropic graded mesh adaptation."""

from .benchmarks import BENCHMARKS, BenchmarkCase, generate_structured_mesh, get_case, initial_levelset
from .config import parse_config, parse_config_text
from .driver import (
    ConvergenceHistory,
    Layout,
    RunConfig,
    RunResult,
    extract_layout,
    run_fixed,
    run_levity,
)
from .errors import (
    ConfigError,
    GeometryError,
    LevityError,
    LocationError,
    MeshError,
    NumericalError,
    ParameterError,
    RunAborted,
    SolverError,
)
from .fem import BoundaryConditions, MaterialModel, compliance, lame_coefficients, solve_state
from .mesh import ElementGeometry, TriMesh, element_geometry, element_patch, measure
from .remesh import AdaptParams, adapt_mesh, metric_edge_length

__all__ = [
    "AdaptParams", "BENCHMARKS", "BenchmarkCase", "BoundaryConditions", "ConfigError",
    "ConvergenceHistory", "ElementGeometry", "GeometryError", "Layout", "LevityError",
    "LocationError", "MaterialModel", "MeshError", "NumericalError", "ParameterError",
    "RunAborted", "RunConfig", "RunResult", "SolverError", "TriMesh", "adapt_mesh",
    "compliance", "element_geometry", "element_patch", "extract_layout",
    "generate_structured_mesh", "get_case", "initial_levelset", "lame_coefficients",
    "measure", "metric_edge_length", "parse_config", "parse_config_text", "run_fixed",
    "run_levity", "solve_state",
]
