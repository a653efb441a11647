"""Acceptance gate: one test per shipped guarantee.

Each test pins the tolerance it promises; none of them consult environment
state.  The convergence study is run once per session and shared.
"""
import time

import numpy as np
import pytest

from measopt import (Bounds, ControlField, NodalField, OptimizerConfig,
                     TimeGrid, TimeMeasure, Trajectory, assemble_load,
                     assemble_mass, assemble_stiffness, box_project,
                     build_lshape_mesh, build_square_mesh, cell_average,
                     gradient_fd_check, l2_project, level_precompute,
                     lshape_measure_problem, measure_load, Mesh,
                     projected_gradient_solve, ritz_project,
                     run_convergence_study, solve_costate, solve_state,
                     study_time_steps)

from _dense import dense_costate, dense_state

REFERENCE_ERRORS = (3.1954e-1, 1.0126e-1, 6.4634e-2)  # err_y, err_z, err_u
RATE_BAND = (0.35, 0.80)
STUDY_LEVELS = [4, 8, 16, 32]


@pytest.fixture(scope="session")
def study():
    t0 = time.perf_counter()
    report = run_convergence_study(STUDY_LEVELS)
    elapsed = time.perf_counter() - t0
    return report, elapsed


def test_convergence_rates_in_band_and_errors_decrease(study):
    report, elapsed = study
    assert elapsed < 300.0, "study took %.1f s" % elapsed
    rows = report.rows
    assert [r.level for r in rows] == STUDY_LEVELS
    assert all(r.error is None for r in rows)
    for col in ("err_y", "err_z", "err_u"):
        vals = [getattr(r, col) for r in rows]
        assert all(b < a for a, b in zip(vals, vals[1:])), \
            "%s does not strictly decrease: %s" % (col, vals)
    violations = []
    for r in rows[1:]:
        for col in ("rate_y", "rate_z", "rate_u"):
            rate = getattr(r, col)
            if not (RATE_BAND[0] <= rate <= RATE_BAND[1]):
                violations.append("n=%d %s=%.4g" % (r.level, col, rate))
    assert not violations, \
        "rates outside [%.2f, %.2f]: %s" % (RATE_BAND[0], RATE_BAND[1],
                                            "; ".join(violations))


def test_error_magnitudes_within_factor_five_of_reference(study):
    report, _ = study
    rows = [r for r in report.rows if r.error is None]
    row = min(rows, key=lambda r: abs(r.dof - 225))
    measured = (row.err_y, row.err_z, row.err_u)
    for name, got, ref in zip(("err_y", "err_z", "err_u"), measured,
                              REFERENCE_ERRORS):
        ratio = got / ref
        assert 0.2 <= ratio <= 5.0, \
            "%s=%.4g vs reference %.4g (ratio %.3g) at n=%d (dof %d)" \
            % (name, got, ref, ratio, row.level, row.dof)


def test_solvers_match_dense_oracle_on_small_meshes():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    meshes = [build_lshape_mesh(2), build_lshape_mesh(4),
              build_lshape_mesh(6), build_square_mesh(2),
              build_square_mesh(3), build_square_mesh(4),
              build_square_mesh(5), build_square_mesh(6)]
    for m in meshes:
        assert len(m.interior_indices()) <= 30
        for N in (1, 5, 8):
            grid = TimeGrid(1.0, N)
            mu_loads = rng.standard_normal((N, m.n_vertices))
            u = ControlField(rng.standard_normal((N, m.n_triangles)), m,
                             grid)
            y0v = rng.standard_normal(m.n_vertices)
            y = solve_state(m, grid, None, u, NodalField(y0v, m),
                            rel_tol=1e-13, mu_loads=mu_loads)
            y_ref = dense_state(m, grid, mu_loads, u.values, y0v)
            scale = 1.0 + np.abs(y_ref)
            assert np.max(np.abs(y.values - y_ref) / scale) <= 1e-10

            yd_loads = rng.standard_normal((N, m.n_vertices))
            z = solve_costate(m, grid, y, None, rel_tol=1e-13,
                              yd_loads=yd_loads)
            z_ref = dense_costate(m, grid, y_ref, yd_loads)
            scale = 1.0 + np.abs(z_ref)
            assert np.max(np.abs(z.values - z_ref) / scale) <= 1e-10
    assert time.perf_counter() - t0 < 5.0


def test_reduced_gradient_matches_finite_differences():
    t0 = time.perf_counter()
    worst = gradient_fd_check(lshape_measure_problem(), n=4, N=4,
                              num_components=20, eps=1e-5, seed=0)
    assert worst <= 1e-5, "worst relative fd error %.3e" % worst
    assert time.perf_counter() - t0 < 30.0


def test_optimizer_reaches_kkt_tolerance():
    problem = lshape_measure_problem()
    n = 8
    m = build_lshape_mesh(n)
    grid = TimeGrid(problem.T, study_time_steps(n, problem.T))
    cfg = OptimizerConfig(alpha=problem.alpha, bounds=problem.bounds,
                          tol=1e-10)
    op, mu_loads, yd_loads, yd_quad = level_precompute(problem, m, grid)
    u, ytraj, ztraj, report = projected_gradient_solve(
        problem, cfg, m, grid, op=op, mu_loads=mu_loads,
        yd_loads=yd_loads, yd_quad=yd_quad)
    assert report.converged
    assert report.kkt <= 1e-9, "kkt residual %.3e" % report.kkt
    hist = report.cost_history
    assert all(b <= a for a, b in zip(hist, hist[1:])), \
        "cost history increases: %s" % hist


def test_exact_local_kernels():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    ref = Mesh(verts, np.array([[0, 1, 2]]),
               boundary=np.ones(3, dtype=bool))
    K = assemble_stiffness(ref).toarray()
    M = assemble_mass(ref).toarray()
    K_hand = np.array([[1.0, -0.5, -0.5],
                       [-0.5, 0.5, 0.0],
                       [-0.5, 0.0, 0.5]])
    M_hand = np.array([[2.0, 1.0, 1.0],
                       [1.0, 2.0, 1.0],
                       [1.0, 1.0, 2.0]]) / 24.0
    assert np.max(np.abs(K - K_hand)) <= 1e-14
    assert np.max(np.abs(M - M_hand)) <= 1e-14
    for n in (2, 4, 8, 16, 32):
        m = build_lshape_mesh(n)
        assert abs(assemble_mass(m).values.sum() - 0.75) <= 1e-12
        Kn = assemble_stiffness(m)
        row_sums = np.zeros(m.n_vertices)
        np.add.at(row_sums, np.repeat(np.arange(m.n_vertices),
                                      np.diff(Kn.row_offsets)), Kn.values)
        assert np.max(np.abs(row_sums)) <= 1e-13


def test_dirac_pairing_exact_values():
    m = build_lshape_mesh(8)
    grid = TimeGrid(1.0, 4)  # k = 0.25
    tm = TimeMeasure(atoms=[(0.5, 1.0)])  # sigma defaults to 1
    sums = [measure_load(tm, m, grid, i).sum() for i in range(1, 5)]
    assert abs(sums[1] - 3.0) <= 1e-13
    assert abs(sums[0]) <= 1e-13
    assert abs(sums[2]) <= 1e-13
    assert abs(sums[3]) <= 1e-13


def test_projection_properties():
    m = build_lshape_mesh(8)
    rng = np.random.default_rng(2024)

    f = NodalField(rng.standard_normal(m.n_vertices), m)
    p = l2_project(m, f, rel_tol=1e-12)
    assert np.max(np.abs(p.values - f.values)) <= 1e-10

    vals = rng.standard_normal(m.n_vertices)
    vals[m.boundary] = 0.0
    q = ritz_project(m, NodalField(vals, m), rel_tol=1e-12)
    assert np.max(np.abs(q.values - vals)) <= 1e-10

    # Galerkin orthogonality: the projection residual against every basis
    # function is at solver tolerance
    M = assemble_mass(m)
    g = NodalField(rng.standard_normal(m.n_vertices), m)
    pg = l2_project(m, g, rel_tol=1e-12)
    resid = M @ pg.values - M @ g.values
    assert np.max(np.abs(resid)) <= 1e-10

    K = assemble_stiffness(m)
    h = rng.standard_normal(m.n_vertices)
    h[m.boundary] = 0.0
    ph = ritz_project(m, NodalField(h, m), rel_tol=1e-12)
    interior = m.interior_indices()
    resid_r = (K @ ph.values - K @ h)[interior]
    assert np.max(np.abs(resid_r)) <= 1e-10

    bounds = Bounds(-0.5, 0.1)
    samples = rng.uniform(-3.0, 3.0, size=10000)
    other = rng.uniform(-3.0, 3.0, size=10000)
    pa = box_project(samples, bounds)
    pb = box_project(other, bounds)
    assert np.array_equal(box_project(pa, bounds), pa)
    assert np.all(np.abs(pa - pb) <= np.abs(samples - other) + 1e-15)


def test_deterministic_outputs():
    a = run_convergence_study([4, 8]).to_csv()
    b = run_convergence_study([4, 8]).to_csv()
    assert a.encode() == b.encode()

    m = build_lshape_mesh(8)
    K1 = assemble_stiffness(m)
    M1 = assemble_mass(m)
    for chunk in (1, 17, 64):
        K2 = assemble_stiffness(m, chunk_size=chunk)
        M2 = assemble_mass(m, chunk_size=chunk)
        assert np.array_equal(K1.col_indices, K2.col_indices)
        assert np.max(np.abs(K1.values - K2.values)) <= 1e-15
        assert np.max(np.abs(M1.values - M2.values)) <= 1e-15
