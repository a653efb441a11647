"""Manufactured problems, error norms, and the convergence-study driver.

The main catalog entry is the L-shape problem with a temporal Dirac atom
at t = 0.5: the exact state jumps in time across the atom, the co-state
is smooth, and the exact control is the clipped co-state.  A smooth
measure-free problem is included for gradient checking.
"""

import io

import numpy as np

from .mesh import build_lshape_mesh
from .fem import TRI_DEGREE5, NodalField, assemble_load, l2_project
from .measure import TimeGrid, TimeMeasure, DiracAtom, measure_load
from .dynamics import StepOperator, Trajectory, pk_average, solve_state, \
    solve_costate
from .control import (Bounds, ControlField, OptimizerConfig,
                      cost_functional, precompute_target_quad,
                      projected_gradient_solve, reduced_gradient)


class ManufacturedProblem:
    """A control problem with (optionally) known exact solution.

    ``y``, ``z``, ``u`` are exact evaluators f(points, t) -> (n,) or None
    when no closed form exists; ``measure`` is the TimeMeasure source (or
    None), ``yd`` the tracking target, ``y0`` the initial datum (None
    means zero), ``state_bc`` the Dirichlet trace of the state (None
    means homogeneous).
    """

    def __init__(self, name, T, alpha, bounds, measure, yd, y0=None,
                 y=None, z=None, u=None, state_bc=None):
        self.name = name
        self.T = float(T)
        self.alpha = float(alpha)
        self.bounds = bounds
        self.measure = measure
        self.yd = yd
        self.y0 = y0
        self.y = y
        self.z = z
        self.u = u
        self.state_bc = state_bc

    def __repr__(self):
        return "ManufacturedProblem(%r)" % self.name


def _r2(pts):
    return pts[:, 0] ** 2 + pts[:, 1] ** 2


def _S(pts):
    return np.sin(np.pi * _r2(pts))


def _lap_S(pts):
    r2 = _r2(pts)
    return 4.0 * np.pi * np.cos(np.pi * r2) \
        - 4.0 * np.pi ** 2 * r2 * np.sin(np.pi * r2)


def _p(t):
    # time factor of the exact state: jumps by 2t at t = 0.5
    return t * t if t < 0.5 else t * t + 2.0 * t


def _gamma(t):
    # absolutely continuous part of dp/dt
    return 2.0 * t if t < 0.5 else 2.0 * t + 2.0


def lshape_measure_problem():
    """The L-shape example with a Dirac atom at t = 0.5.

    Exact solution: y = sin(pi|x|^2) * (t^2 for t<0.5, t^2+2t after),
    z = sin(pi|x|^2)*t, u = clip(-z).  The source measure is
    sigma*tau = S(x)*delta(t-0.5) + [S*gamma(t) - lap(S)*p(t) - u(x,t)]dt
    and the target is y_d = S + lap(S)*t + S*p(t).
    """
    ua, ub = -0.5, 0.1

    def y_exact(pts, t):
        return _S(pts) * _p(t)

    def z_exact(pts, t):
        return _S(pts) * t

    def u_exact(pts, t):
        return np.clip(-z_exact(pts, t), ua, ub)

    def sigma(pts, t):
        return _S(pts) * _gamma(t) - _lap_S(pts) * _p(t) - u_exact(pts, t)

    def yd(pts, t):
        return _S(pts) + _lap_S(pts) * t + _S(pts) * _p(t)

    measure = TimeMeasure(atoms=[DiracAtom(0.5, 1.0, profile=_S)],
                          density=lambda ts: np.ones(np.shape(ts)),
                          sigma=sigma)
    return ManufacturedProblem(
        name="lshape-measure", T=1.0, alpha=1.0, bounds=Bounds(ua, ub),
        measure=measure, yd=yd, y0=None, y=y_exact, z=z_exact, u=u_exact)


def smooth_tracking_problem():
    """Measure-free smooth tracking problem (no exact solution attached)."""

    def yd(pts, t):
        return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1]) \
            * (1.0 + t)

    return ManufacturedProblem(
        name="smooth-tracking", T=1.0, alpha=1.0, bounds=Bounds(-0.5, 0.1),
        measure=None, yd=yd)


PROBLEMS = {
    "lshape-measure": lshape_measure_problem,
    "smooth-tracking": smooth_tracking_problem,
}


def _time_nodes(grid, i, npts=2):
    return grid.gauss_nodes(i, npts)


def l2l2_error(discrete, exact, m, grid, time_index="right"):
    """L2(0,T;L2) distance between a discrete field and an evaluator.

    The discrete object is constant in time on each interval: a
    Trajectory contributes level i on I_i when time_index="right" (state
    convention y^i) and level i-1 when "left" (co-state convention
    z^{i-1}); a ControlField contributes its cellwise constants.  Space
    uses degree-5 quadrature, time 2-point Gauss per interval.
    """
    areas = m.triangle_areas()
    w = TRI_DEGREE5.weights
    pts = TRI_DEGREE5.physical_points(m)
    flat = pts.reshape(-1, 2)
    is_traj = isinstance(discrete, Trajectory)
    if time_index not in ("right", "left"):
        raise ValueError("time_index must be 'right' or 'left'")
    total = 0.0
    for i in range(1, grid.N + 1):
        if is_traj:
            lev = i if time_index == "right" else i - 1
            dq = discrete.values[lev][m.triangles] @ TRI_DEGREE5.points.T
        else:
            dq = discrete.values[i - 1][:, None]
        ts, tw = _time_nodes(grid, i)
        for t, wt in zip(ts, tw):
            diff = dq - np.asarray(exact(flat, t)).reshape(m.n_triangles, -1)
            total += wt * float(areas @ ((diff * diff) @ w))
    return float(np.sqrt(total))


def final_time_error(ytraj, exact, m=None):
    """L2(Omega) distance at t = T (degree-5 quadrature).

    Accepts a Trajectory (compares y^N) or a ControlField (compares the
    last interval's cellwise constants).
    """
    if m is None:
        m = ytraj.mesh
    T = ytraj.grid.T
    areas = m.triangle_areas()
    w = TRI_DEGREE5.weights
    pts = TRI_DEGREE5.physical_points(m)
    if isinstance(ytraj, Trajectory):
        dq = ytraj.values[-1][m.triangles] @ TRI_DEGREE5.points.T
    else:
        dq = ytraj.values[-1][:, None]
    diff = dq - np.asarray(exact(pts.reshape(-1, 2), T)).reshape(
        m.n_triangles, -1)
    return float(np.sqrt(areas @ ((diff * diff) @ w)))


def eoc(E1, E2, h1, h2):
    """Empirical order of convergence log(E1/E2)/log(h1/h2)."""
    if E1 <= 0.0 or E2 <= 0.0 or h1 <= 0.0 or h2 <= 0.0:
        raise ValueError("eoc needs positive errors and mesh sizes")
    if h1 <= h2:
        raise ValueError("eoc needs h1 > h2")
    return float(np.log(E1 / E2) / np.log(h1 / h2))


class StudyRow:
    """One level of a convergence study."""

    def __init__(self, level, h, dof, N, err_y, err_z, err_u,
                 rate_y=None, rate_z=None, rate_u=None,
                 final_y=None, final_z=None, final_u=None,
                 cost=None, iterations=None, kkt=None, error=None):
        self.level = level
        self.h = h
        self.dof = dof
        self.N = N
        self.err_y = err_y
        self.err_z = err_z
        self.err_u = err_u
        self.rate_y = rate_y
        self.rate_z = rate_z
        self.rate_u = rate_u
        self.final_y = final_y
        self.final_z = final_z
        self.final_u = final_u
        self.cost = cost
        self.iterations = iterations
        self.kkt = kkt
        self.error = error  # message when this level failed


def _g6(x):
    return "" if x is None else "%.6g" % x


class ConvergenceReport:
    """Study results; to_csv() emits the pinned column layout."""

    def __init__(self, rows, problem_name):
        self.rows = rows
        self.problem_name = problem_name

    def to_csv(self):
        lines = ["level,h,dof,N,err_y,err_z,err_u,rate_y,rate_z,rate_u"]
        for r in self.rows:
            if r.error is not None:
                lines.append("%d,,,,,,,,," % r.level)
                continue
            lines.append(",".join([
                "%d" % r.level, _g6(r.h), "%d" % r.dof, "%d" % r.N,
                _g6(r.err_y), _g6(r.err_z), _g6(r.err_u),
                _g6(r.rate_y), _g6(r.rate_z), _g6(r.rate_u)]))
        return "\n".join(lines) + "\n"

    def to_text(self):
        buf = io.StringIO()
        buf.write("convergence study: %s\n" % self.problem_name)
        buf.write("%5s %10s %6s %6s %12s %12s %12s %8s %8s %8s\n"
                  % ("n", "h", "dof", "N", "err_y", "err_z", "err_u",
                     "rate_y", "rate_z", "rate_u"))
        for r in self.rows:
            if r.error is not None:
                buf.write("%5d  FAILED: %s\n" % (r.level, r.error))
                continue
            buf.write("%5d %10.4g %6d %6d %12.5g %12.5g %12.5g %8s %8s %8s\n"
                      % (r.level, r.h, r.dof, r.N, r.err_y, r.err_z, r.err_u,
                         _g6(r.rate_y), _g6(r.rate_z), _g6(r.rate_u)))
        ok = [r for r in self.rows if r.error is None]
        if ok:
            buf.write("final-time errors (t = T):\n")
            for r in ok:
                buf.write("%5d  y: %.5g  z: %.5g  u: %.5g\n"
                          % (r.level, r.final_y, r.final_z, r.final_u))
            buf.write("optimizer: ")
            buf.write("  ".join("n=%d: %d its, kkt=%.2e"
                                % (r.level, r.iterations, r.kkt)
                                for r in ok))
            buf.write("\n")
        return buf.getvalue()


def study_time_steps(n, T=1.0):
    """N = ceil(T/h^2) rounded up to even, so t=0.5 is a grid point."""
    h = np.sqrt(2.0) / n
    N = int(np.ceil(T / h ** 2))
    if N % 2:
        N += 1
    return N


def level_precompute(problem, m, grid):
    """Control-independent per-level data: step matrix, measure pairings,
    target loads and target quadrature values."""
    op = StepOperator(m, grid)
    mu_loads = None
    if problem.measure is not None:
        mu_loads = np.stack([measure_load(problem.measure, m, grid, i)
                             for i in range(1, grid.N + 1)])
    yd_loads = None
    yd_quad = None
    if problem.yd is not None:
        yd_loads = np.stack([assemble_load(m, pk_average(problem.yd, grid, i),
                                           q=TRI_DEGREE5)
                             for i in range(1, grid.N + 1)])
        yd_quad = precompute_target_quad(m, grid, problem.yd)
    return op, mu_loads, yd_loads, yd_quad


def run_convergence_study(levels, cfg=None, problem=None, progress=None):
    """Refinement study of the projected-gradient solution.

    Parameters
    ----------
        levels : list of int
            grid parameters n (even, strictly increasing)
        cfg : OptimizerConfig, optional
        problem : ManufacturedProblem, optional
            defaults to the L-shape measure problem; must carry exact
            y/z/u evaluators
        progress : callable, optional
            called with one status line per level

    Returns
    -------
        ConvergenceReport; a level that fails at runtime produces a row
        with an error message and the study continues.
    """
    levels = [int(n) for n in levels]
    if not levels:
        raise ValueError("study needs at least one level")
    for n in levels:
        if n < 2 or n % 2:
            raise ValueError("levels must be even and >= 2, got %d" % n)
    for a, b in zip(levels, levels[1:]):
        if b <= a:
            raise ValueError("levels must be strictly increasing")
    if problem is None:
        problem = lshape_measure_problem()
    if cfg is None:
        cfg = OptimizerConfig(alpha=problem.alpha, bounds=problem.bounds)
    if problem.y is None or problem.z is None or problem.u is None:
        raise ValueError("study problem needs exact y, z, u evaluators")
    rows = []
    prev = None
    for n in levels:
        try:
            m = build_lshape_mesh(n)
            N = study_time_steps(n, problem.T)
            grid = TimeGrid(problem.T, N)
            if progress:
                progress("level n=%d: %d interior dof, N=%d"
                         % (n, m.interior_indices().size, N))
            op, mu_loads, yd_loads, yd_quad = level_precompute(problem, m,
                                                               grid)
            u, ytraj, ztraj, rep = projected_gradient_solve(
                problem, cfg, m, grid, op=op, mu_loads=mu_loads,
                yd_loads=yd_loads, yd_quad=yd_quad)
            row = StudyRow(
                level=n, h=m.h, dof=int(m.interior_indices().size), N=N,
                err_y=l2l2_error(ytraj, problem.y, m, grid, "right"),
                err_z=l2l2_error(ztraj, problem.z, m, grid, "left"),
                err_u=l2l2_error(u, problem.u, m, grid),
                final_y=final_time_error(ytraj, problem.y),
                final_z=final_time_error(ztraj, problem.z),
                final_u=final_time_error(u, problem.u),
                cost=rep.cost_history[-1], iterations=rep.iterations,
                kkt=rep.kkt)
            if prev is not None:
                row.rate_y = eoc(prev.err_y, row.err_y, prev.h, row.h)
                row.rate_z = eoc(prev.err_z, row.err_z, prev.h, row.h)
                row.rate_u = eoc(prev.err_u, row.err_u, prev.h, row.h)
            rows.append(row)
            prev = row
            if progress:
                progress("level n=%d: err_y=%.4g err_z=%.4g err_u=%.4g"
                         % (n, row.err_y, row.err_z, row.err_u))
        except Exception as exc:  # record and continue with later levels
            rows.append(StudyRow(level=n, h=None, dof=None, N=None,
                                 err_y=None, err_z=None, err_u=None,
                                 error=str(exc)))
            prev = None
    return ConvergenceReport(rows, problem.name)


def gradient_fd_check(problem, n, N, num_components=20, eps=1e-5, seed=0):
    """Worst relative error of the reduced gradient vs central differences.

    Perturbs ``num_components`` random (interval, triangle) cells of a
    random in-bounds control by +-eps and compares the cost difference
    quotient against k*|K|*g.  All linear solves run at tolerance 1e-14
    so solver noise stays below the differencing noise.
    """
    m = build_lshape_mesh(n)
    grid = TimeGrid(problem.T, N)
    cfg = OptimizerConfig(alpha=problem.alpha, bounds=problem.bounds,
                          cg_tol=1e-14)
    op, mu_loads, yd_loads, yd_quad = level_precompute(problem, m, grid)
    if problem.y0 is not None:
        y0 = l2_project(m, problem.y0, rel_tol=cfg.cg_tol)
    else:
        y0 = NodalField(np.zeros(m.n_vertices), m)
    rng = np.random.default_rng(seed)
    nt = m.n_triangles
    u_vals = rng.uniform(problem.bounds.u_a, problem.bounds.u_b,
                         size=(grid.N, nt))
    areas = m.triangle_areas()

    def state_at(vals):
        return solve_state(m, grid, None, ControlField(vals, m, grid), y0,
                           bc=problem.state_bc, rel_tol=cfg.cg_tol, op=op,
                           mu_loads=mu_loads)

    def cost_at(vals):
        ytraj = state_at(vals)
        return cost_functional(ControlField(vals, m, grid), ytraj, None,
                               grid, cfg, yd_quad=yd_quad)

    ytraj = state_at(u_vals)
    ztraj = solve_costate(m, grid, ytraj, None, rel_tol=cfg.cg_tol, op=op,
                          yd_loads=yd_loads)
    g = reduced_gradient(ControlField(u_vals, m, grid), ztraj, cfg)
    worst = 0.0
    for _ in range(num_components):
        i = int(rng.integers(0, grid.N))
        K = int(rng.integers(0, nt))
        bump = np.zeros_like(u_vals)
        bump[i, K] = eps
        fd = (cost_at(u_vals + bump) - cost_at(u_vals - bump)) / (2.0 * eps)
        predicted = grid.k * areas[K] * g[i, K]
        denom = max(abs(predicted), abs(fd), 1e-14)
        worst = max(worst, abs(fd - predicted) / denom)
    return worst
