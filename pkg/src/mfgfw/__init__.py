"""Potential mean field games solved by best-response Frank-Wolfe iterations.

The package has two solver backends sharing one iteration loop: a dense
transition-kernel formulation used on small instances and as a brute-force
oracle, and a theta-scheme finite-difference formulation used for the 1D
congestion benchmark and its convergence experiments.
"""

__version__ = "0.1.0"

from .bench1d import BenchParams, Benchmark, build_benchmark, mesh_sweep
from .gfw import GfwConfig, IterationRecord, SolveResult, solve, stepsize
from .grid import Grid, divergence_h, gradient_h, laplacian_h, mixed_norm
from .kernel import (BestResponse, DiscreteProblem, Kernel, KernelScheme,
                     best_response, fp_solve, hjb_solve, transition, v_map)
from .potential import (FlowPair, PotentialCoupling, chi_inverse, chi_transform,
                        cost_J_linearized, cost_J_tilde, gap_diagnostics,
                        perspective_cost)
from .theta import (SeparableHamiltonian, ThetaConfig, ThetaScheme, cfl_check,
                    discretize_problem, fp_theta, hjb_theta,
                    implicit_heat_solve, v_theta)

__all__ = [
    "BenchParams", "Benchmark", "BestResponse", "DiscreteProblem", "FlowPair",
    "GfwConfig", "Grid", "IterationRecord", "Kernel", "KernelScheme",
    "PotentialCoupling", "SeparableHamiltonian", "SolveResult", "ThetaConfig",
    "ThetaScheme", "best_response", "build_benchmark", "cfl_check",
    "chi_inverse", "chi_transform", "cost_J_linearized", "cost_J_tilde",
    "discretize_problem", "divergence_h", "fp_solve", "fp_theta", "gap_diagnostics", "gradient_h",
    "hjb_solve", "hjb_theta", "implicit_heat_solve", "laplacian_h",
    "mesh_sweep", "mixed_norm", "perspective_cost", "solve", "stepsize",
    "transition", "v_map", "v_theta",
]
