"""Effective diffusivity of passive tracers in chaotic incompressible flows.

The package simulates the SDE dX = v(X) dt + sigma dW with
structure-preserving splitting integrators, estimates the effective
diffusivity from ensemble displacement moments, and cross-checks the
Lagrangian estimates two independent ways: an Eulerian spectral cell-problem
solver and a discretized transition-kernel laboratory.
"""

from .diffusivity import (ConvergenceTable, DiffusivityEstimate,
                          convergence_study, default_enhancement_horizon,
                          enhancement_scan, estimate_D, loglog_fit,
                          mixing_converged)
from .ensemble import (CheckpointSchedule, EnsembleState, MomentAccumulator,
                       advance, empty_accumulator, init_ensemble, merge,
                       record, run_simulation)
from .eulerian import (CorrectorField, TorusGrid2D, eulerian_diffusivity,
                       resolution_sweep, save_grid_csv, solve_cell_problem)
from .flows import (FLOW_REGISTRY, SeparableFlow2D, VelocityField, abc_drift,
                    abc_flow, as_field, as_separable, cellular_drift,
                    cellular_flow, divergence_probe, kolmogorov3d_type_drift,
                    kolmogorov3d_type_flow, kolmogorov_drift, kolmogorov_flow,
                    make_flow, zero_flow)
from .integrators import (SCHEMES, IntegratorConfig, deterministic_jacobian_det,
                          deterministic_map, euler_maruyama_step,
                          symplectic_step_2d, volume_preserving_step)
from .kernel_lab import (DiscreteCellSolution, KernelMatrix, build_kernel,
                         corrector_rate_check, decay_rate, discrete_cell_solve,
                         invariant_density, mode_decay_norms, save_density_csv,
                         second_eigenvalue)
from .noise import RngStream, gaussian_increments

__version__ = "0.1.0"
