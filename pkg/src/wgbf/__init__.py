"""Globally divergence-free weak Galerkin solver for the unsteady convective
Brinkman-Forchheimer equations on triangular meshes."""

from .assembly import DofMap, FieldState
from .cases import CavityProblem, ManufacturedCase, registry
from .config import parse_config, read_config
from .diagnostics import convergence_rates, divergence_check, errors_vs_exact, stability_monitor
from .experiments import ExperimentSpec, build_problem, run_cavity, run_convergence
from .mesh import Mesh, MeshError, generate_uniform, import_mesh
from .solver import (ConfigError, PicardNonconvergence, Problem, RunConfig, SolverError,
                     TransientSolver, run_transient)
from .weak import LocalOperatorCache

__version__ = "0.1.0"
