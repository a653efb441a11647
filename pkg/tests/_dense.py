"""Dense direct-solve replicas of the two time-stepping recurrences.

Used by the unit and acceptance tests as an independent oracle: the same
linear algebra, but with dense numpy factorizations instead of CSR + CG.
"""
import numpy as np

from measopt import assemble_mass, assemble_stiffness


def dense_operator(m, grid):
    M = assemble_mass(m).toarray()
    K = assemble_stiffness(m).toarray()
    A = M / grid.k + K
    interior = m.interior_indices()
    boundary = np.where(m.boundary)[0]
    return M, A, interior, boundary


def dense_state(m, grid, mu_loads, u_values, y0_values, bc=None):
    """Forward sweep: (M/k + K) y^i = M y^{i-1}/k + mu^i + B u^i."""
    M, A, interior, boundary = dense_operator(m, grid)
    areas = m.triangle_areas()
    traj = np.zeros((grid.N + 1, m.n_vertices))
    traj[0] = y0_values
    for i in range(1, grid.N + 1):
        rhs = M @ traj[i - 1] / grid.k
        if mu_loads is not None:
            rhs = rhs + mu_loads[i - 1]
        if u_values is not None:
            contrib = np.repeat(u_values[i - 1] * areas / 3.0, 3)
            rhs = rhs + np.bincount(m.triangles.reshape(-1),
                                    weights=contrib,
                                    minlength=m.n_vertices)
        if bc is not None and boundary.size:
            g = np.asarray(bc(m.vertices[boundary], grid.times[i]),
                           dtype=np.float64)
            traj[i, boundary] = g
            rhs_red = rhs[interior] - A[np.ix_(interior, boundary)] @ g
        else:
            rhs_red = rhs[interior]
        if interior.size:
            traj[i, interior] = np.linalg.solve(
                A[np.ix_(interior, interior)], rhs_red)
    return traj


def dense_costate(m, grid, y_values, yd_loads):
    """Backward sweep: (M/k + K) z^{i-1} = M z^i/k + M y^i - yd_load^i."""
    M, A, interior, _ = dense_operator(m, grid)
    traj = np.zeros((grid.N + 1, m.n_vertices))
    for i in range(grid.N, 0, -1):
        rhs = M @ traj[i] / grid.k + M @ y_values[i]
        if yd_loads is not None:
            rhs = rhs - yd_loads[i - 1]
        if interior.size:
            traj[i - 1, interior] = np.linalg.solve(
                A[np.ix_(interior, interior)], rhs[interior])
    return traj
