"""Backward-Euler time stepping for the state and co-state equations.

State (forward):   (M/k + K) y^i = M/k y^{i-1} + <mu,.>_{I_i} + (u^i,.)
Co-state (backward): (M/k + K) z^{i-1} = M/k z^i + (y^i,.) - (P_k^i y_d,.),
with z^N = 0.  Both sweeps share one reduced matrix since the grid is
uniform; boundary conditions are homogeneous Dirichlet unless an
explicit boundary evaluator is supplied (the manufactured problem has a
nonzero trace for the state).
"""

import inspect
import io

import numpy as np

from .fem import (TRI_DEGREE5, SparseMatrix, NodalField, assemble_mass,
                  assemble_stiffness, assemble_load, csr_submatrix, cg_solve)
from .measure import measure_load


class Trajectory:
    """Time series of P1 fields: one nodal vector per time level 0..N."""

    def __init__(self, values, mesh, grid):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (grid.N + 1, mesh.n_vertices):
            raise ValueError("trajectory shape %s, expected (%d, %d)"
                             % (values.shape, grid.N + 1, mesh.n_vertices))
        self.values = values
        self.mesh = mesh
        self.grid = grid

    def level(self, i):
        """Nodal values at time level i (0-based, 0..N)."""
        return self.values[i]

    @property
    def fields(self):
        return [NodalField(self.values[i], self.mesh)
                for i in range(self.values.shape[0])]

    def __len__(self):
        return self.values.shape[0]

    def to_csv(self):
        """All levels as CSV rows (level, vertex_index, x, y, value)."""
        buf = io.StringIO()
        buf.write("level,vertex_index,x,y,value\n")
        xs = self.mesh.vertices
        for lev in range(self.values.shape[0]):
            for j in range(self.mesh.n_vertices):
                buf.write("%d,%d,%.10g,%.10g,%.10g\n"
                          % (lev, j, xs[j, 0], xs[j, 1], self.values[lev, j]))
        return buf.getvalue()


def _positional_arity(f):
    try:
        sig = inspect.signature(f)
    except (TypeError, ValueError):
        return 1  # ufunc etc: treat as a function of time only
    kinds = (inspect.Parameter.POSITIONAL_ONLY,
             inspect.Parameter.POSITIONAL_OR_KEYWORD)
    return sum(1 for p in sig.parameters.values()
               if p.kind in kinds and p.default is inspect.Parameter.empty)


def pk_average(f, grid, i, npts=4):
    """Interval mean (1/k) int_{I_i} f dt by Gauss quadrature.

    ``f`` is either a function of time alone (returns a float) or a
    space-time function f(points, t) (returns a spatial callable).  The
    4-point default is exact for the piecewise-polynomial catalog data
    as long as breakpoints sit on grid points.
    """
    ts, ws = grid.gauss_nodes(i, npts)
    if _positional_arity(f) >= 2:
        def averaged(pts):
            acc = ws[0] * np.asarray(f(pts, ts[0]), dtype=np.float64)
            for t, w in zip(ts[1:], ws[1:]):
                acc = acc + w * np.asarray(f(pts, t), dtype=np.float64)
            return acc / grid.k
        return averaged
    vals = np.array([float(f(t)) for t in ts])
    return float(ws @ vals) / grid.k


class StepOperator:
    """Reduced backward-Euler matrix (M/k + K), shared by both sweeps.

    Holds the full mass matrix, the interior-interior reduced system,
    and the interior-boundary coupling block used to lift inhomogeneous
    Dirichlet data.
    """

    def __init__(self, m, grid):
        M = assemble_mass(m)
        K = assemble_stiffness(m)
        if not np.array_equal(M.col_indices, K.col_indices):
            raise RuntimeError("mass/stiffness sparsity mismatch")
        vals = M.values / grid.k + K.values
        A = SparseMatrix(m.n_vertices, m.n_vertices, M.row_offsets,
                         M.col_indices, vals)
        self.mesh = m
        self.grid = grid
        self.M = M
        self.K = K
        self.interior = m.interior_indices()
        self.boundary = np.where(m.boundary)[0]
        self.A_red = csr_submatrix(A, self.interior, self.interior)
        self.A_ib = csr_submatrix(A, self.interior, self.boundary)
        # control coupling: piecewise-constant u against phi_j is exact,
        # each triangle sends u_K * |K|/3 to its three vertices
        self._third_areas = m.triangle_areas() / 3.0

    def control_load(self, u_row):
        """(u^i, phi_j) for one interval's cellwise values."""
        contrib = np.repeat(u_row * self._third_areas, 3)
        return np.bincount(self.mesh.triangles.reshape(-1), weights=contrib,
                           minlength=self.mesh.n_vertices)


def solve_state(m, grid, mu, u, y0, bc=None, rel_tol=1e-10, op=None,
                mu_loads=None):
    """Forward sweep of the fully discrete state equation.

    Parameters
    ----------
        m : Mesh
        grid : TimeGrid
        mu : TimeMeasure or None
        u : ControlField-like (values (N, n_triangles)) or None
        y0 : NodalField
            discrete initial state (L2 projection of the initial datum)
        bc : callable, optional
            Dirichlet trace g(points, t); None means homogeneous
        rel_tol : float
            CG tolerance per step
        op : StepOperator, optional
            reused system (must match m, grid)
        mu_loads : (N, n_vertices) array, optional
            precomputed measure pairing vectors, row i-1 for interval i

    Returns
    -------
        Trajectory with levels y^0..y^N
    """
    if op is None:
        op = StepOperator(m, grid)
    N = grid.N
    traj = np.zeros((N + 1, m.n_vertices))
    traj[0] = y0.values
    interior, boundary = op.interior, op.boundary
    x_warm = traj[0][interior].copy()
    for i in range(1, N + 1):
        rhs = op.M.matvec(traj[i - 1]) / grid.k
        if mu_loads is not None:
            rhs = rhs + mu_loads[i - 1]
        elif mu is not None:
            rhs = rhs + measure_load(mu, m, grid, i)
        if u is not None:
            rhs = rhs + op.control_load(u.values[i - 1])
        rhs_red = rhs[interior]
        if bc is not None and boundary.size:
            g = np.asarray(bc(m.vertices[boundary], grid.times[i]),
                           dtype=np.float64)
            traj[i, boundary] = g
            rhs_red = rhs_red - op.A_ib.matvec(g)
        x_warm = cg_solve(op.A_red, rhs_red, rel_tol=rel_tol, x0=x_warm)
        traj[i, interior] = x_warm
    return Trajectory(traj, m, grid)


def solve_costate(m, grid, ytraj, yd, rel_tol=1e-10, op=None, yd_loads=None):
    """Backward sweep of the fully discrete co-state equation.

    The terminal condition is z^N = 0 exactly and the boundary condition
    is homogeneous (the adjoint always lives in the zero-trace space, so
    the reduced gradient is the exact gradient of the discrete cost).

    Parameters
    ----------
        m : Mesh
        grid : TimeGrid
        ytraj : Trajectory
            discrete state from solve_state on the same mesh/grid
        yd : callable or None
            tracking target yd(points, t); averaged over I_i with
            pk_average and loaded with degree-5 quadrature (matching the
            cost functional's quadrature)
        yd_loads : (N, n_vertices) array, optional
            precomputed load vectors of P_k^i y_d, row i-1 for interval i

    Returns
    -------
        Trajectory with levels z^0..z^N (z^N = 0)
    """
    if op is None:
        op = StepOperator(m, grid)
    N = grid.N
    traj = np.zeros((N + 1, m.n_vertices))
    interior = op.interior
    x_warm = np.zeros(interior.size)
    for i in range(N, 0, -1):
        rhs = op.M.matvec(traj[i]) / grid.k + op.M.matvec(ytraj.values[i])
        if yd_loads is not None:
            rhs = rhs - yd_loads[i - 1]
        elif yd is not None:
            rhs = rhs - assemble_load(m, pk_average(yd, grid, i),
                                      q=TRI_DEGREE5)
        x_warm = cg_solve(op.A_red, rhs[interior], rel_tol=rel_tol, x0=x_warm)
        traj[i - 1, interior] = x_warm
    return Trajectory(traj, m, grid)
