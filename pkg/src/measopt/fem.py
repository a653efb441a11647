"""P1 finite elements on triangle meshes.

Assembly of stiffness A(v,w) = (grad v, grad w) and mass (v,w) matrices in
CSR form, load vectors by quadrature, L2 and energy (Ritz) projections,
Dirichlet elimination to a reduced SPD system, and a deterministic
conjugate-gradient solver.

Assembly is bitwise deterministic: local element matrices are computed
vectorized over elements, stacked in element order, and accumulated into
CSR with a stable sort, so chunked ("parallel") assembly produces the
same matrix as one-shot assembly bit for bit, and the assembled matrices
are exactly symmetric.
"""

import io

import numpy as np

from . import _kernels
from .mesh import Mesh


class AssemblyError(ValueError):
    """Mesh unfit for assembly (degenerate element)."""


class SolverError(RuntimeError):
    """Iterative solver failed to converge; carries the final residual."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__("%s (residual %.3e)" % (message, residual))


class QuadratureRule:
    """Quadrature on the reference triangle in barycentric coordinates.

    ``points`` is (nq, 3) with rows summing to 1, ``weights`` is (nq,)
    summing to 1 (weights are relative to the triangle area), ``degree``
    is the highest polynomial degree integrated exactly.
    """

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.degree = degree

    def physical_points(self, m):
        """Map the rule to every triangle: (nt, nq, 2) physical points."""
        p = m.vertices[m.triangles]  # (nt, 3, 2)
        return np.einsum("qa,eak->eqk", self.points, p)


# degree-2 rule: edge midpoints, exact for quadratics -- the default for
# load vectors (P1 test function x linear data is quadratic)
TRI_MIDPOINT = QuadratureRule(
    [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    degree=2,
)

# 7-point degree-5 rule, used for error norms so quadrature error stays
# below discretization error
_A1 = (6.0 - np.sqrt(15.0)) / 21.0
_A2 = (6.0 + np.sqrt(15.0)) / 21.0
_W1 = (155.0 - np.sqrt(15.0)) / 1200.0
_W2 = (155.0 + np.sqrt(15.0)) / 1200.0
TRI_DEGREE5 = QuadratureRule(
    [[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
     [_A1, _A1, 1.0 - 2.0 * _A1],
     [_A1, 1.0 - 2.0 * _A1, _A1],
     [1.0 - 2.0 * _A1, _A1, _A1],
     [_A2, _A2, 1.0 - 2.0 * _A2],
     [_A2, 1.0 - 2.0 * _A2, _A2],
     [1.0 - 2.0 * _A2, _A2, _A2]],
    [9.0 / 40.0, _W1, _W1, _W1, _W2, _W2, _W2],
    degree=5,
)


class NodalField:
    """A P1 function given by one value per mesh vertex."""

    def __init__(self, values, mesh):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != (mesh.n_vertices,):
            raise ValueError("field length %d != vertex count %d"
                             % (values.size, mesh.n_vertices))
        self.values = values
        self.mesh = mesh

    def __repr__(self):
        return "NodalField(%d values)" % self.values.size


class SparseMatrix:
    """CSR sparse matrix with sorted column indices per row.

    The matrix-vector product dispatches to the compiled kernel when the
    extension is available and to the NumPy fallback otherwise.
    """

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self._row_index = None  # lazy decompressed rows for the fallback

    @property
    def nnz(self):
        return self.values.size

    def matvec(self, x, out=None):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError("dimension mismatch in matvec")
        if out is None:
            out = np.empty(self.n_rows)
        if _kernels.HAVE_COMPILED:
            _kernels.csr_matvec(self.row_offsets, self.col_indices,
                                self.values, x, out)
        else:
            if self._row_index is None:
                self._row_index = np.repeat(np.arange(self.n_rows),
                                            np.diff(self.row_offsets))
            _kernels.csr_matvec(self.row_offsets, self.col_indices,
                                self.values, x, out,
                                row_index=self._row_index)
        return out

    def __matmul__(self, x):
        return self.matvec(x)

    def diagonal(self):
        d = np.zeros(self.n_rows)
        for i in range(self.n_rows):
            lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
            cols = self.col_indices[lo:hi]
            hit = np.searchsorted(cols, i)
            if hit < cols.size and cols[hit] == i:
                d[i] = self.values[lo + hit]
        return d

    def toarray(self):
        dense = np.zeros((self.n_rows, self.n_cols))
        row_index = np.repeat(np.arange(self.n_rows),
                              np.diff(self.row_offsets))
        dense[row_index, self.col_indices] = self.values
        return dense

    def to_matrix_market(self):
        """MatrixMarket coordinate text (1-based), for debugging."""
        buf = io.StringIO()
        buf.write("%%MatrixMarket matrix coordinate real general\n")
        buf.write("%d %d %d\n" % (self.n_rows, self.n_cols, self.nnz))
        row_index = np.repeat(np.arange(self.n_rows),
                              np.diff(self.row_offsets))
        for r, c, v in zip(row_index, self.col_indices, self.values):
            buf.write("%d %d %.17g\n" % (r + 1, c + 1, v))
        return buf.getvalue()

    def __repr__(self):
        return "SparseMatrix(%dx%d, nnz=%d)" % (self.n_rows, self.n_cols,
                                                self.nnz)


def csr_from_coo(rows, cols, values, shape):
    """Build a SparseMatrix from COO triplets, summing duplicates.

    The sort is stable and duplicate entries are accumulated in their
    input (element) order, which is what makes assembly deterministic.
    """
    n_rows, n_cols = shape
    order = np.lexsort((cols, rows))
    r = rows[order]
    c = cols[order]
    v = values[order]
    if r.size == 0:
        return SparseMatrix(n_rows, n_cols, np.zeros(n_rows + 1, np.int64),
                            np.empty(0, np.int64), np.empty(0))
    first = np.empty(r.size, dtype=bool)
    first[0] = True
    first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    gid = np.cumsum(first) - 1
    summed = np.bincount(gid, weights=v)
    ur = r[first]
    uc = c[first]
    counts = np.bincount(ur, minlength=n_rows)
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return SparseMatrix(n_rows, n_cols, offsets, uc, summed)


def csr_submatrix(A, rows, cols):
    """Extract A[rows][:, cols] preserving entry order (no duplicates)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    row_index = np.repeat(np.arange(A.n_rows), np.diff(A.row_offsets))
    rmap = np.full(A.n_rows, -1, dtype=np.int64)
    rmap[rows] = np.arange(rows.size)
    cmap = np.full(A.n_cols, -1, dtype=np.int64)
    cmap[cols] = np.arange(cols.size)
    keep = (rmap[row_index] >= 0) & (cmap[A.col_indices] >= 0)
    rr = rmap[row_index[keep]]
    cc = cmap[A.col_indices[keep]]
    vv = A.values[keep]
    counts = np.bincount(rr, minlength=rows.size)
    offsets = np.zeros(rows.size + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return SparseMatrix(rows.size, cols.size, offsets, cc, vv)


def _p1_gradients(m):
    """Constant P1 basis gradients per element: (nt, 3, 2), plus areas."""
    p = m.vertices[m.triangles]
    x = p[:, :, 0]
    y = p[:, :, 1]
    det = ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
           - (y[:, 1] - y[:, 0]) * (x[:, 2] - x[:, 0]))
    g = np.empty((m.n_triangles, 3, 2))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        g[:, a, 0] = (y[:, b] - y[:, c]) / det
        g[:, a, 1] = (x[:, c] - x[:, b]) / det
    return g, 0.5 * det


_MASS_TEMPLATE = np.array([[2.0, 1.0, 1.0],
                           [1.0, 2.0, 1.0],
                           [1.0, 1.0, 2.0]]) / 12.0


def _check_areas(m):
    areas = m.triangle_areas()
    if np.any(areas <= 1e-14):
        raise AssemblyError("degenerate triangle (area <= 1e-14)")
    return areas


def _assemble(m, local_fn, chunk_size):
    """Shared COO pipeline: local (nc,3,3) blocks -> global CSR."""
    nt = m.n_triangles
    if chunk_size is None or chunk_size >= nt:
        chunks = [slice(0, nt)]
    else:
        chunks = [slice(s, min(s + chunk_size, nt))
                  for s in range(0, nt, chunk_size)]
    rows_parts, cols_parts, vals_parts = [], [], []
    for sl in chunks:
        t = m.triangles[sl]
        loc = local_fn(sl)  # (nc, 3, 3)
        rows_parts.append(np.repeat(t, 3, axis=1).reshape(-1))
        cols_parts.append(np.tile(t, (1, 3)).reshape(-1))
        vals_parts.append(loc.reshape(-1))
    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)
    return csr_from_coo(rows, cols, vals, (m.n_vertices, m.n_vertices))


def assemble_stiffness(m, chunk_size=None):
    """Stiffness matrix K with K[i,j] = integral of grad(phi_i).grad(phi_j).

    Parameters
    ----------
        m : Mesh
        chunk_size : int, optional
            process elements in chunks of this size (deterministic ordered
            merge; the result is identical to one-shot assembly)

    Returns
    -------
        SparseMatrix, exactly symmetric, row sums zero
    """
    _check_areas(m)
    g, areas = _p1_gradients(m)

    def local(sl):
        gs = g[sl]
        return np.einsum("eak,ebk->eab", gs, gs) * areas[sl, None, None]

    return _assemble(m, local, chunk_size)


def assemble_mass(m, chunk_size=None):
    """Mass matrix M with M[i,j] = integral of phi_i.phi_j (exact for P1)."""
    areas = _check_areas(m)

    def local(sl):
        return _MASS_TEMPLATE[None, :, :] * areas[sl, None, None]

    return _assemble(m, local, chunk_size)


def assemble_load(m, f, q=TRI_MIDPOINT):
    """Load vector b with b[j] ~ integral of f.phi_j by quadrature.

    Parameters
    ----------
        m : Mesh
        f : callable
            vectorized spatial function, f(points (n,2)) -> (n,) values
        q : QuadratureRule

    Returns
    -------
        (nv,) array
    """
    areas = _check_areas(m)
    pts = q.physical_points(m)  # (nt, nq, 2)
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=np.float64)
    vals = vals.reshape(m.n_triangles, len(q.weights))
    # contrib[e, a] = area_e * sum_q w_q f(x_eq) lambda_a(x_q)
    contrib = areas[:, None] * np.einsum("eq,q,qa->ea", vals, q.weights,
                                         q.points)
    return np.bincount(m.triangles.reshape(-1), weights=contrib.reshape(-1),
                       minlength=m.n_vertices)


def cg_solve(A, b, rel_tol=1e-10, max_iter=None, x0=None, jacobi=False):
    """Conjugate gradients for SPD systems, deterministic iteration order.

    Parameters
    ----------
        A : SparseMatrix (SPD)
        b : (n,) array
        rel_tol : float
            stop when ||b - Ax|| <= rel_tol * ||b||
        max_iter : int, optional
            iteration cap, default 10*n
        x0 : (n,) array, optional
            warm start (default zero)
        jacobi : bool
            use diagonal preconditioning

    Raises
    ------
        SolverError
            iteration cap reached; the exception carries the residual
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    if n == 0:
        return np.empty(0)
    if not (0.0 < rel_tol < 1.0):
        raise ValueError("rel_tol must be in (0, 1)")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - (A @ x)
    d = A.diagonal() if jacobi else None
    z = r / d if jacobi else r.copy()
    p = z.copy()
    rz = float(r @ z)
    tol = rel_tol * bnorm
    Ap = np.empty(n)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol:
            return x
        A.matvec(p, out=Ap)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = r / d if jacobi else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol:
        return x
    raise SolverError("cg reached iteration cap %d" % max_iter,
                      float(np.linalg.norm(r)))


def apply_dirichlet(A, b, m):
    """Eliminate Dirichlet (boundary) rows and columns.

    Parameters
    ----------
        A : SparseMatrix on the full vertex set
        b : (nv,) load vector
        m : Mesh

    Returns
    -------
        (A_red, b_red, free) : reduced SPD system and the indices of the
        free (interior) vertices; a mesh without interior vertices yields
        an empty system.
    """
    free = m.interior_indices()
    return csr_submatrix(A, free, free), np.asarray(b)[free], free


def l2_project(m, f, rel_tol=1e-10, q=TRI_MIDPOINT):
    """L2 projection onto the P1 space: solves M p = load(f).

    ``f`` may be a vectorized spatial callable or an existing NodalField
    (in which case the load is M @ f.values and the projection is exact
    up to solver tolerance).
    """
    M = assemble_mass(m)
    if isinstance(f, NodalField):
        b = M @ f.values
    else:
        b = assemble_load(m, f, q=q)
    return NodalField(cg_solve(M, b, rel_tol=rel_tol), m)


def ritz_project(m, f, grad=None, laplacian=None, rel_tol=1e-10):
    """Energy (Ritz) projection onto P1 functions vanishing on the boundary.

    Solves K p = rhs on interior vertices with rhs_j = integral of
    grad(f).grad(phi_j), computed from the analytic ``grad`` (degree-5
    quadrature) or, alternatively, as the load of ``-laplacian``.  A
    NodalField input is projected through rhs = K @ f.values.

    Parameters
    ----------
        m : Mesh
        f : callable or NodalField
            the function to project; must vanish on the domain boundary
        grad : callable, optional
            vectorized gradient, grad(points (n,2)) -> (n,2)
        laplacian : callable, optional
            vectorized Laplacian of f

    Raises
    ------
        ValueError
            callable ``f`` supplied without grad or laplacian
    """
    K = assemble_stiffness(m)
    if isinstance(f, NodalField):
        rhs = K @ f.values
    elif grad is not None:
        g, areas = _p1_gradients(m)
        pts = TRI_DEGREE5.physical_points(m)
        gf = np.asarray(grad(pts.reshape(-1, 2)), dtype=np.float64)
        gf = gf.reshape(m.n_triangles, len(TRI_DEGREE5.weights), 2)
        mean_grad = np.einsum("q,eqk->ek", TRI_DEGREE5.weights, gf)
        contrib = areas[:, None] * np.einsum("ek,eak->ea", mean_grad, g)
        rhs = np.bincount(m.triangles.reshape(-1),
                          weights=contrib.reshape(-1),
                          minlength=m.n_vertices)
    elif laplacian is not None:
        rhs = assemble_load(m, lambda x: -np.asarray(laplacian(x)),
                            q=TRI_DEGREE5)
    else:
        raise ValueError("ritz_project needs grad= or laplacian= for a "
                         "callable input")
    K_red, rhs_red, free = apply_dirichlet(K, rhs, m)
    values = np.zeros(m.n_vertices)
    if free.size:
        values[free] = cg_solve(K_red, rhs_red, rel_tol=rel_tol)
    return NodalField(values, m)
