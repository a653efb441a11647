"""P1 finite elements for parabolic optimal control with measure-in-time
data on an L-shaped domain: backward-Euler time stepping, box-constrained
piecewise-constant controls, projected-gradient optimizer, and a
convergence-study harness."""

from ._kernels import HAVE_COMPILED, backend_name
from .mesh import (Mesh, MeshError, MeshParseError, boundary_flags,
                   build_lshape_mesh, build_square_mesh, mesh_io, parse,
                   refine_uniform)
from .fem import (TRI_MIDPOINT, TRI_DEGREE5, AssemblyError, NodalField,
                  QuadratureRule, SolverError, SparseMatrix, apply_dirichlet,
                  assemble_load, assemble_mass, assemble_stiffness, cg_solve,
                  csr_from_coo, csr_submatrix, l2_project, ritz_project)
from .measure import (DiracAtom, MeasureError, TimeGrid, TimeMeasure,
                      atom_interval, measure_load, total_variation)
from .dynamics import (StepOperator, Trajectory, pk_average, solve_costate,
                       solve_state)
from .control import (Bounds, ControlField, OptimizerConfig, OptimizerReport,
                      box_project, cell_average, control_l2l2_norm,
                      cost_functional, kkt_residual, precompute_target_quad,
                      projected_gradient_solve, reduced_gradient)
from .verify import (PROBLEMS, ConvergenceReport, ManufacturedProblem,
                     StudyRow, eoc, final_time_error, gradient_fd_check,
                     l2l2_error, level_precompute, lshape_measure_problem,
                     run_convergence_study, smooth_tracking_problem,
                     study_time_steps)

__version__ = "0.1.0"
