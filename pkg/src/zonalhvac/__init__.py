"""Finite-element model and optimal control of zoned heating in a two-room apartment."""

from .control import Bounds, ControlProblem, ControlVector, CostBreakdown, OptimizationResult, optimize
from .fem import Assembler, Coefficients, DofMap
from .flow import FlowBCs, FlowField, FlowSolver, FlowSolverError, solve_navier_stokes, solve_stokes
from .mesh import FloorPlan, Mesh, MeshError, Rect, Segment, canonical_apartment, generate
from .scenario import ConfigError, EnergyReport, Scenario, ScenarioConfig, energy_report
from .sparse_linalg import CsrMatrix, LUFactor, SingularMatrixError, Triplets, lu_solve, spmv, to_csr
from .thermal import ThermalState, ThermalStepper, ThermalTrajectory, zone_average

__all__ = [
    "Assembler", "Bounds", "Coefficients", "ConfigError", "ControlProblem", "ControlVector",
    "CostBreakdown", "CsrMatrix", "DofMap", "EnergyReport", "FloorPlan", "FlowBCs", "FlowField",
    "FlowSolver", "FlowSolverError", "LUFactor", "Mesh", "MeshError", "OptimizationResult", "Rect",
    "Scenario", "ScenarioConfig", "Segment", "SingularMatrixError", "ThermalState", "ThermalStepper",
    "ThermalTrajectory", "Triplets", "canonical_apartment", "energy_report", "generate", "lu_solve",
    "optimize", "solve_navier_stokes", "solve_stokes", "spmv", "to_csr", "zone_average",
]
