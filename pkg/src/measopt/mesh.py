"""Conforming triangulations of the L-shaped domain (0,1)^2 \\ [0.5,1]^2.

Meshes are structured: a uniform grid of squares of side 1/n, each square
split into two triangles by the diagonal from its lower-left to its
upper-right corner.  The re-entrant corner (0.5, 0.5) is always a mesh
vertex (n must be even), and boundary vertices are detected geometrically
by distance to the polygon edges, so the classification survives
refinement and serialization round trips.

Vertices are stored as an (nv, 2) float array, triangles as an (nt, 3)
int array of vertex indices in counter-clockwise order.
"""

import warnings

import numpy as np

GEOM_TOL = 1e-12

# Corner lists (counter-clockwise) of the supported polygonal domains.
LSHAPE_POLYGON = (
    (0.0, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0),
)
UNIT_SQUARE_POLYGON = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


class MeshError(ValueError):
    """Invalid mesh parameters or a mesh failing validation."""


class MeshParseError(MeshError):
    """Malformed mesh text; carries the offending 1-based line number."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__("line %d: %s" % (line_number, message))


class Mesh:
    """Immutable conforming triangulation.

    Parameters
    ----------
        vertices : (nv, 2) float array
            vertex coordinates
        triangles : (nt, 3) int array
            vertex indices per triangle, counter-clockwise
        boundary : (nv,) bool array, optional
            boundary-vertex flags; recomputed from ``polygon`` when omitted
        polygon : sequence of (x, y), optional
            corners of the polygonal domain, used for geometric boundary
            detection; kept on the mesh so refinement can reuse it
    """

    def __init__(self, vertices, triangles, boundary=None, polygon=None):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        self.vertices = vertices
        self.triangles = triangles
        self.polygon = tuple(map(tuple, polygon)) if polygon is not None else None
        self._validate()
        if boundary is None:
            if self.polygon is None:
                boundary = self._boundary_from_edges()
            else:
                boundary = boundary_flags(vertices, self.polygon)
        self.boundary = np.ascontiguousarray(boundary, dtype=bool)
        if self.boundary.shape != (self.n_vertices,):
            raise MeshError("boundary flag array has wrong length")
        for a in (self.vertices, self.triangles, self.boundary):
            a.setflags(write=False)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def h(self):
        """Mesh size: maximum edge length over all triangles."""
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.sqrt((e ** 2).sum(axis=2)).max())

    def triangle_areas(self):
        """(nt,) array of triangle areas (all positive)."""
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self):
        """(nt, 2) array of triangle centroids."""
        return self.vertices[self.triangles].mean(axis=1)

    def interior_indices(self):
        """Indices of non-boundary (free) vertices, ascending."""
        return np.flatnonzero(~self.boundary)

    def __repr__(self):
        return "Mesh(%d vertices, %d triangles, h=%.6g)" % (
            self.n_vertices, self.n_triangles, self.h)

    # -- internals ---------------------------------------------------------

    def _validate(self):
        nv = self.n_vertices
        t = self.triangles
        if t.size and (t.min() < 0 or t.max() >= nv):
            raise MeshError("triangle references a missing vertex")
        if np.any(t[:, 0] == t[:, 1]) or np.any(t[:, 1] == t[:, 2]) \
                or np.any(t[:, 0] == t[:, 2]):
            raise MeshError("triangle with repeated vertices")
        p = self.vertices[t]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        flipped = signed < 0
        if np.any(flipped):
            warnings.warn("reoriented %d clockwise triangle(s)" % flipped.sum())
            t = t.copy()
            t[flipped] = t[flipped][:, [0, 2, 1]]
            self.triangles = t
            signed = np.abs(signed)
        if np.any(signed <= 1e-14):
            raise MeshError("degenerate triangle (area <= 1e-14)")
        # Conformity: each undirected edge belongs to one or two triangles,
        # and an internal edge is traversed once in each direction.
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(edges, axis=1)
        _, inverse, counts = np.unique(und, axis=0, return_inverse=True,
                                       return_counts=True)
        if counts.max(initial=1) > 2:
            raise MeshError("edge shared by more than two triangles")
        flip = edges[:, 0] > edges[:, 1]
        flips_per_edge = np.bincount(inverse, weights=flip.astype(float),
                                     minlength=counts.size)
        if np.any((counts == 2) & (flips_per_edge != 1)):
            raise MeshError("internal edge traversed twice in the same "
                            "direction (non-conforming mesh)")

    def _boundary_from_edges(self):
        # No polygon available: boundary vertices are endpoints of edges
        # that belong to a single triangle.
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(edges, axis=1)
        uniq, counts = np.unique(und, axis=0, return_counts=True)
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[uniq[counts == 1].ravel()] = True
        return flags


def boundary_flags(vertices, polygon):
    """Geometric boundary detection: distance to a polygon edge <= 1e-12.

    Parameters
    ----------
        vertices : (nv, 2) array
        polygon : sequence of corner points, counter-clockwise

    Returns
    -------
        (nv,) bool array
    """
    v = np.asarray(vertices, dtype=np.float64)
    flags = np.zeros(len(v), dtype=bool)
    corners = np.asarray(polygon, dtype=np.float64)
    for i in range(len(corners)):
        a = corners[i]
        b = corners[(i + 1) % len(corners)]
        ab = b - a
        ab2 = ab @ ab
        s = np.clip(((v - a) @ ab) / ab2, 0.0, 1.0)
        foot = a + s[:, None] * ab
        dist = np.sqrt(((v - foot) ** 2).sum(axis=1))
        flags |= dist <= GEOM_TOL
    return flags


def build_lshape_mesh(n):
    """Structured triangulation of the L-shape (0,1)^2 \\ [0.5,1]^2.

    Squares of side 1/n, split lower-left to upper-right; h = sqrt(2)/n.
    n must be even so that the re-entrant corner (0.5, 0.5) is a vertex.

    Parameters
    ----------
        n : int
            subdivisions per unit length (even, >= 2)

    Returns
    -------
        Mesh
    """
    return _build_grid_mesh(n, LSHAPE_POLYGON, _inside_lshape)


def build_square_mesh(n):
    """Structured triangulation of the unit square with squares of side 1/n.

    Same grid-and-diagonal construction as :func:`build_lshape_mesh`; used
    for small self-contained examples and oracle tests.
    """
    return _build_grid_mesh(n, UNIT_SQUARE_POLYGON,
                            lambda cx, cy: np.ones_like(cx, dtype=bool),
                            require_even=False)


def _inside_lshape(cx, cy):
    # cell-centre test: the cell belongs to the L-shape iff it is not in
    # the removed quadrant [0.5,1]^2
    return (cx < 0.5) | (cy < 0.5)


def _build_grid_mesh(n, polygon, cell_filter, require_even=True):
    if n is None or int(n) != n or n < 1:
        raise MeshError("n must be a positive integer, got %r" % (n,))
    n = int(n)
    if require_even and n % 2 != 0:
        raise MeshError("n must be even so that x=0.5 is a gridline "
                        "(got n=%d)" % n)
    # full grid vertex candidates, row-major (j*(n+1)+i) -> (i/n, j/n)
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    gx = ii.ravel() / n
    gy = jj.ravel() / n

    ci, cj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ci = ci.ravel()
    cj = cj.ravel()
    keep = cell_filter((ci + 0.5) / n, (cj + 0.5) / n)
    ci, cj = ci[keep], cj[keep]

    # corner indices of each kept cell in the full grid
    ll = cj * (n + 1) + ci
    lr = ll + 1
    ul = ll + (n + 1)
    ur = ul + 1
    # split along the lower-left -> upper-right diagonal, cell-major with
    # the two children of a cell adjacent
    tris_full = np.stack([np.stack([ll, lr, ur], axis=1),
                          np.stack([ll, ur, ul], axis=1)],
                         axis=1).reshape(-1, 3)

    used = np.zeros((n + 1) * (n + 1), dtype=bool)
    used[tris_full.ravel()] = True
    remap = np.full((n + 1) * (n + 1), -1, dtype=np.int64)
    remap[used] = np.arange(used.sum())
    vertices = np.stack([gx[used], gy[used]], axis=1)
    triangles = remap[tris_full]
    return Mesh(vertices, triangles, polygon=polygon)


def refine_uniform(m):
    """Red refinement: split every triangle into 4 congruent children.

    Edge midpoints become new vertices; h halves; boundary flags are
    recomputed geometrically from the mesh polygon when available,
    otherwise from edge incidence.

    Parameters
    ----------
        m : Mesh

    Returns
    -------
        Mesh
    """
    t = m.triangles
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    und = np.sort(edges, axis=1)
    uniq, inverse = np.unique(und, axis=0, return_inverse=True)
    nv = m.n_vertices
    mid_index = nv + np.arange(len(uniq))
    midpoints = 0.5 * (m.vertices[uniq[:, 0]] + m.vertices[uniq[:, 1]])
    vertices = np.concatenate([m.vertices, midpoints])

    nt = m.n_triangles
    m01 = mid_index[inverse[:nt]]
    m12 = mid_index[inverse[nt:2 * nt]]
    m20 = mid_index[inverse[2 * nt:]]
    children = np.concatenate([
        np.stack([t[:, 0], m01, m20], axis=1),
        np.stack([t[:, 1], m12, m01], axis=1),
        np.stack([t[:, 2], m20, m12], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])
    # group the 4 children of each parent together
    order = np.argsort(np.tile(np.arange(nt), 4), kind="stable")
    children = children[order]

    if m.polygon is not None:
        return Mesh(vertices, children, polygon=m.polygon)
    # combinatorial fallback: a midpoint is boundary iff its edge belongs
    # to exactly one triangle
    counts = np.bincount(inverse, minlength=len(uniq))
    boundary = np.concatenate([m.boundary, counts == 1])
    return Mesh(vertices, children, boundary=boundary)


def mesh_io(m):
    """Serialize a mesh to the text format.

    Line 1 ``mesh-v1``; line 2 ``<nv> <nt>``; nv vertex lines
    ``x y flag``; nt triangle lines ``v0 v1 v2`` (0-based).  Coordinates
    are printed with 17 significant digits so parsing reproduces the mesh
    exactly.
    """
    lines = ["mesh-v1", "%d %d" % (m.n_vertices, m.n_triangles)]
    for (x, y), f in zip(m.vertices, m.boundary):
        lines.append("%.17g %.17g %d" % (x, y, int(f)))
    for v0, v1, v2 in m.triangles:
        lines.append("%d %d %d" % (v0, v1, v2))
    return "\n".join(lines) + "\n"


def parse(text):
    """Parse the text format produced by :func:`mesh_io`.

    Raises
    ------
        MeshParseError
            malformed text, with the offending line number
        MeshError
            structurally invalid mesh (missing vertex, non-conforming, ...)
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != "mesh-v1":
        raise MeshParseError(1, "expected header 'mesh-v1'")
    if len(lines) < 2:
        raise MeshParseError(2, "missing vertex/triangle counts")
    try:
        nv, nt = map(int, lines[1].split())
    except ValueError:
        raise MeshParseError(2, "expected '<nv> <nt>'") from None
    if nv < 0 or nt < 0 or len(lines) < 2 + nv + nt:
        raise MeshParseError(len(lines), "truncated file: expected %d vertex "
                             "and %d triangle lines" % (nv, nt))
    vertices = np.empty((nv, 2))
    flags = np.empty(nv, dtype=bool)
    for j in range(nv):
        ln = 2 + j
        parts = lines[ln].split()
        if len(parts) != 3:
            raise MeshParseError(ln + 1, "expected 'x y flag'")
        try:
            vertices[j, 0] = float(parts[0])
            vertices[j, 1] = float(parts[1])
            flag = int(parts[2])
        except ValueError:
            raise MeshParseError(ln + 1, "malformed vertex line") from None
        if flag not in (0, 1):
            raise MeshParseError(ln + 1, "boundary flag must be 0 or 1")
        flags[j] = bool(flag)
    triangles = np.empty((nt, 3), dtype=np.int64)
    for j in range(nt):
        ln = 2 + nv + j
        parts = lines[ln].split()
        if len(parts) != 3:
            raise MeshParseError(ln + 1, "expected 'v0 v1 v2'")
        try:
            triangles[j] = [int(p) for p in parts]
        except ValueError:
            raise MeshParseError(ln + 1, "malformed triangle line") from None
    return Mesh(vertices, triangles, boundary=flags)
