"""Box-constrained piecewise-constant controls and the projected gradient.

Controls are constant on each (time interval, triangle) cell.  The cost

    J(u) = 1/2 sum_i k [ ||y^i - P_k^i y_d||^2 + alpha ||u^i||^2 ]

is minimized by projected-gradient iterations with the fixed step 1/alpha,
which makes every update the pointwise projection formula
u = clip(-cell_average(z)/alpha) of the optimality condition.
"""

import io

import numpy as np

from .fem import TRI_DEGREE5, NodalField, assemble_load, l2_project
from .measure import measure_load
from .dynamics import StepOperator, solve_state, solve_costate, pk_average


class Bounds:
    """Box constraints u_a <= u <= u_b."""

    def __init__(self, u_a, u_b):
        self.u_a = float(u_a)
        self.u_b = float(u_b)
        if not self.u_a < self.u_b:
            raise ValueError("bounds require u_a < u_b, got (%g, %g)"
                             % (self.u_a, self.u_b))

    def __repr__(self):
        return "Bounds(%g, %g)" % (self.u_a, self.u_b)


def box_project(v, bounds):
    """Clamp to [u_a, u_b]; works on scalars and arrays alike."""
    return np.clip(v, bounds.u_a, bounds.u_b)


class ControlField:
    """Cellwise-constant control: values[i-1, K] on interval i, triangle K."""

    def __init__(self, values, mesh, grid):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (grid.N, mesh.n_triangles):
            raise ValueError("control shape %s, expected (%d, %d)"
                             % (values.shape, grid.N, mesh.n_triangles))
        self.values = values
        self.mesh = mesh
        self.grid = grid

    @classmethod
    def zeros(cls, mesh, grid):
        return cls(np.zeros((grid.N, mesh.n_triangles)), mesh, grid)

    def copy(self):
        return ControlField(self.values.copy(), self.mesh, self.grid)

    def to_csv(self):
        """CSV rows (interval, triangle, centroid_x, centroid_y, value)."""
        buf = io.StringIO()
        buf.write("interval,triangle,centroid_x,centroid_y,value\n")
        cents = self.mesh.centroids()
        for i in range(self.grid.N):
            for k in range(self.mesh.n_triangles):
                buf.write("%d,%d,%.10g,%.10g,%.10g\n"
                          % (i + 1, k, cents[k, 0], cents[k, 1],
                             self.values[i, k]))
        return buf.getvalue()


class OptimizerConfig:
    """Projected-gradient parameters.

    step=None selects the fixed step 1/alpha; cg_tol is the linear-solver
    tolerance used inside the optimizer's PDE solves.
    """

    def __init__(self, alpha=1.0, bounds=None, step=None, tol=1e-8,
                 max_iter=500, cg_tol=1e-12):
        self.alpha = float(alpha)
        self.bounds = bounds if bounds is not None else Bounds(-0.5, 0.1)
        self.step = None if step is None else float(step)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.cg_tol = float(cg_tol)
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.step is not None and self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


class OptimizerReport:
    """What happened during projected_gradient_solve."""

    def __init__(self, iterations, cost_history, step_norms, kkt, converged):
        self.iterations = iterations
        self.cost_history = list(cost_history)
        self.step_norms = list(step_norms)
        self.kkt = kkt
        self.converged = converged

    def __repr__(self):
        return ("OptimizerReport(iterations=%d, converged=%s, kkt=%.3e)"
                % (self.iterations, self.converged, self.kkt))


def cell_average(z, mesh=None):
    """Per-triangle mean of a P1 field: (v0+v1+v2)/3, exact."""
    if mesh is None:
        mesh = z.mesh
    vals = z.values if hasattr(z, "values") else np.asarray(z)
    return vals[mesh.triangles].mean(axis=1)


def control_l2l2_norm(values, mesh, grid):
    """L2(L2) norm of a cellwise-constant function: sqrt(sum k |K| v^2)."""
    areas = mesh.triangle_areas()
    return float(np.sqrt(grid.k * np.sum((values * values) @ areas)))


def tracking_quad_values(ytraj, level):
    """P1 field at the degree-5 quadrature points of every triangle."""
    y = ytraj.values[level]
    return y[ytraj.mesh.triangles] @ TRI_DEGREE5.points.T  # (nt, nq)


def precompute_target_quad(m, grid, yd):
    """P_k^i y_d at the degree-5 quadrature points, all intervals.

    Returns (N, n_triangles, nq); this is the control-independent part of
    the tracking term and is reused across optimizer iterations.
    """
    pts = TRI_DEGREE5.physical_points(m).reshape(-1, 2)
    out = np.empty((grid.N, m.n_triangles, len(TRI_DEGREE5.weights)))
    for i in range(1, grid.N + 1):
        avg = pk_average(yd, grid, i)
        out[i - 1] = np.asarray(avg(pts)).reshape(m.n_triangles, -1)
    return out


def cost_functional(u, ytraj, yd, grid, cfg, yd_quad=None):
    """Discrete cost 1/2 sum_i k [ ||y^i - P_k^i y_d||^2 + alpha ||u^i||^2 ].

    The tracking norm uses degree-5 quadrature against the exact interval
    average of y_d; the control norm is exact (sum_K |K| u^2).

    Parameters
    ----------
        u : ControlField or None
        ytraj : Trajectory
        yd : callable or None
            yd(points, t); ignored when yd_quad is given
        yd_quad : (N, nt, nq) array, optional
            precomputed P_k^i y_d at quadrature points
    """
    m = ytraj.mesh
    areas = m.triangle_areas()
    w = TRI_DEGREE5.weights
    total = 0.0
    for i in range(1, grid.N + 1):
        yq = tracking_quad_values(ytraj, i)
        if yd_quad is not None:
            yq = yq - yd_quad[i - 1]
        elif yd is not None:
            avg = pk_average(yd, grid, i)
            pts = TRI_DEGREE5.physical_points(m).reshape(-1, 2)
            yq = yq - np.asarray(avg(pts)).reshape(m.n_triangles, -1)
        track = float(areas @ ((yq * yq) @ w))
        ctrl = 0.0
        if u is not None:
            row = u.values[i - 1]
            ctrl = float(areas @ (row * row))
        total += grid.k * (track + cfg.alpha * ctrl)
    return 0.5 * total


def reduced_gradient(u, ztraj, cfg):
    """Riesz representative of the cost derivative on the control space.

    g[i-1, K] = alpha*u[i-1, K] + cell_average(z^{i-1})_K; the directional
    derivative along the (i,K) indicator is k*|K|*g[i-1, K].
    """
    m = ztraj.mesh
    N = ztraj.grid.N
    if u.values.shape != (N, m.n_triangles):
        raise ValueError("control shape %s does not match grid/mesh (%d, %d)"
                         % (u.values.shape, N, m.n_triangles))
    # z^{i-1} pairs with u^i: cell averages of levels 0..N-1
    zc = ztraj.values[:-1][:, m.triangles].mean(axis=2)
    return cfg.alpha * u.values + zc


def kkt_residual(u, ztraj, cfg):
    """max_(i,K) |u - box_project(u - g)|: zero exactly at KKT points."""
    g = reduced_gradient(u, ztraj, cfg)
    return float(np.max(np.abs(u.values
                               - box_project(u.values - g, cfg.bounds))))


def projected_gradient_solve(problem, cfg, m, grid, op=None, mu_loads=None,
                             yd_loads=None, yd_quad=None, y0=None):
    """Projected-gradient loop for the measure-data control problem.

    Parameters
    ----------
        problem : object
            supplies ``measure`` (TimeMeasure or None), ``yd`` (callable),
            ``y0`` (callable or None) and ``state_bc`` (Dirichlet trace
            callable or None)
        cfg : OptimizerConfig
        m : Mesh
        grid : TimeGrid
        op, mu_loads, yd_loads, yd_quad : optional precomputations
            (shared step matrix, measure pairings, target loads, target
            quadrature values); computed here when absent
        y0 : NodalField, optional
            discrete initial state (overrides problem.y0)

    Returns
    -------
        (u, ytraj, ztraj, report); u, ytraj and ztraj are mutually
        consistent at return (ytraj solves the state at u, ztraj the
        co-state at ytraj).
    """
    if op is None:
        op = StepOperator(m, grid)
    if mu_loads is None and problem.measure is not None:
        mu_loads = np.stack([measure_load(problem.measure, m, grid, i)
                             for i in range(1, grid.N + 1)])
    if yd_loads is None and problem.yd is not None:
        yd_loads = np.stack([assemble_load(m, pk_average(problem.yd, grid, i),
                                           q=TRI_DEGREE5)
                             for i in range(1, grid.N + 1)])
    if yd_quad is None and problem.yd is not None:
        yd_quad = precompute_target_quad(m, grid, problem.yd)
    if y0 is None:
        if getattr(problem, "y0", None) is not None:
            y0 = l2_project(m, problem.y0, rel_tol=cfg.cg_tol)
        else:
            y0 = NodalField(np.zeros(m.n_vertices), m)
    bc = getattr(problem, "state_bc", None)
    step = cfg.step if cfg.step is not None else 1.0 / cfg.alpha

    def forward(uf):
        return solve_state(m, grid, None, uf, y0, bc=bc, rel_tol=cfg.cg_tol,
                           op=op, mu_loads=mu_loads)

    def backward(ytraj):
        return solve_costate(m, grid, ytraj, None, rel_tol=cfg.cg_tol,
                             op=op, yd_loads=yd_loads)

    u = ControlField.zeros(m, grid)
    cost_history = []
    step_norms = []
    converged = False
    iterations = 0
    for _ in range(cfg.max_iter):
        ytraj = forward(u)
        ztraj = backward(ytraj)
        cost_history.append(cost_functional(u, ytraj, None, grid, cfg,
                                            yd_quad=yd_quad))
        g = reduced_gradient(u, ztraj, cfg)
        u_next = ControlField(box_project(u.values - step * g, cfg.bounds),
                              m, grid)
        inc = control_l2l2_norm(u_next.values - u.values, m, grid)
        step_norms.append(inc)
        u = u_next
        iterations += 1
        if inc <= cfg.tol:
            converged = True
            break
    # recompute the triplet at the final control so it is self-consistent
    ytraj = forward(u)
    ztraj = backward(ytraj)
    cost_history.append(cost_functional(u, ytraj, None, grid, cfg,
                                        yd_quad=yd_quad))
    kkt = kkt_residual(u, ztraj, cfg)
    report = OptimizerReport(iterations, cost_history, step_norms, kkt,
                             converged)
    return u, ytraj, ztraj, report
