"""Time grids and measure-in-time source data.

The source measure has the separated form mu = sigma*tau where sigma(x,t)
is a spatial-temporal profile and tau is a real Borel measure in time
consisting of finitely many Dirac atoms plus an absolutely continuous
part with density d(t).  The discrete scheme only ever sees the measure
through interval pairings

    <mu, phi_j>_{I_i} = (1/k) [ sum_{t* in I_i} w * int sigma(x,t*) phi_j dx
                                + int_{I_i} d(t) int sigma(x,t) phi_j dx dt ]

on the half-open intervals I_i = (t_{i-1}, t_i].
"""

import numpy as np

from .fem import TRI_MIDPOINT, assemble_load


class MeasureError(ValueError):
    """Invalid time grid or measure data."""


# relative tolerance for deciding an atom sits exactly on a grid point
SNAP_TOL = 1e-12


class TimeGrid:
    """Uniform partition of [0, T] into N intervals I_i = (t_{i-1}, t_i].

    Parameters
    ----------
        T : float
            final time, > 0
        N : int
            number of steps, >= 1
    """

    def __init__(self, T, N):
        T = float(T)
        if not np.isfinite(T) or T <= 0.0:
            raise MeasureError("final time must be positive")
        if not isinstance(N, (int, np.integer)) or N < 1:
            raise MeasureError("step count must be a positive integer")
        self.T = T
        self.N = int(N)
        self.k = T / N
        self.times = np.linspace(0.0, T, self.N + 1)

    def interval(self, i):
        """Endpoints (t_{i-1}, t_i) of interval i (1-based)."""
        if not 1 <= i <= self.N:
            raise MeasureError("interval index %d outside 1..%d" % (i, self.N))
        return self.times[i - 1], self.times[i]

    def gauss_nodes(self, i, npts=4):
        """Gauss nodes/weights on I_i; weights sum to k."""
        a, b = self.interval(i)
        x, w = np.polynomial.legendre.leggauss(npts)
        half = 0.5 * (b - a)
        return a + half * (x + 1.0), half * w

    def __repr__(self):
        return "TimeGrid(T=%g, N=%d)" % (self.T, self.N)


class DiracAtom:
    """One temporal Dirac atom: weight * delta(t - time).

    ``profile``, when given, is the spatial coefficient carried by this
    atom (a vectorized callable on (n,2) point arrays); when None the
    measure's sigma evaluated at the atom time is used.
    """

    def __init__(self, time, weight, profile=None):
        self.time = float(time)
        self.weight = float(weight)
        self.profile = profile
        if not (np.isfinite(self.time) and np.isfinite(self.weight)):
            raise MeasureError("atom time and weight must be finite")

    def __repr__(self):
        return "DiracAtom(t=%g, w=%g)" % (self.time, self.weight)


class TimeMeasure:
    """mu = sigma*tau with tau = sum of atoms + d(t) dt.

    Parameters
    ----------
        atoms : iterable of DiracAtom or (time, weight) pairs
        density : callable or None
            d(t), vectorized over t; None means no absolutely
            continuous part
        sigma : callable or None
            sigma(points (n,2), t) -> (n,); None means sigma = 1

    The empty measure (no atoms, no density) is allowed and pairs to
    zero.  Instances are treated as immutable.
    """

    def __init__(self, atoms=(), density=None, sigma=None):
        normed = []
        for a in atoms:
            if isinstance(a, DiracAtom):
                normed.append(a)
            else:
                t, w = a
                normed.append(DiracAtom(t, w))
        self.atoms = tuple(normed)
        self.density = density
        self.sigma = sigma

    def sigma_at(self, pts, t):
        if self.sigma is None:
            return np.ones(pts.shape[0])
        return np.asarray(self.sigma(pts, t), dtype=np.float64)


def atom_interval(grid, t):
    """Index i of the interval I_i = (t_{i-1}, t_i] containing time t.

    Atoms sitting on a grid point (within a relative snap tolerance)
    belong to the left interval, per the right-closed convention; t=0 is
    assigned to I_1.

    Raises
    ------
        MeasureError
            t outside [0, T]
    """
    tol = SNAP_TOL * max(1.0, grid.T)
    if t < -tol or t > grid.T + tol:
        raise MeasureError("atom at t=%g outside [0, %g]" % (t, grid.T))
    raw = t / grid.k
    nearest = int(round(raw))
    if abs(t - nearest * grid.k) <= tol:
        i = max(nearest, 1)  # grid point -> left interval; t=0 -> I_1
    else:
        i = int(np.ceil(raw))
    return min(max(i, 1), grid.N)


def _density_values(d, ts):
    vals = d(ts)
    if np.ndim(vals) == 0:  # scalar-only callable
        vals = np.array([d(t) for t in ts])
    return np.asarray(vals, dtype=np.float64)


def total_variation(tm, T=1.0):
    """Total variation of the temporal part: sum|w| + int_0^T |d(t)| dt.

    The density integral uses composite 4-point Gauss on a 1024-cell
    grid over [0, T].
    """
    tv = sum(abs(a.weight) for a in tm.atoms)
    if tm.density is not None:
        edges = np.linspace(0.0, T, 1025)
        x, w = np.polynomial.legendre.leggauss(4)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        ts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        ws = (half[:, None] * w[None, :]).ravel()
        tv += float(ws @ np.abs(_density_values(tm.density, ts)))
    return tv


def measure_load(tm, m, grid, i, q=TRI_MIDPOINT):
    """Fully discrete pairing vector: component j = <mu, phi_j>_{I_i}.

    Parameters
    ----------
        tm : TimeMeasure
        m : Mesh
        grid : TimeGrid
        i : int
            interval index, 1-based
        q : QuadratureRule
            spatial rule for the profile loads

    Returns
    -------
        (n_vertices,) array; the 1/k scaling of the pairing is included.

    The density part integrates in time with 4-point Gauss per interval
    (exact for the polynomial-in-t catalog data).
    """
    if not 1 <= i <= grid.N:
        raise MeasureError("interval index %d outside 1..%d" % (i, grid.N))
    out = np.zeros(m.n_vertices)
    for atom in tm.atoms:
        if atom_interval(grid, atom.time) != i:
            continue
        if atom.profile is not None:
            f = atom.profile
        else:
            t_star = atom.time
            f = lambda pts, _t=t_star: tm.sigma_at(pts, _t)
        out += atom.weight * assemble_load(m, f, q=q)
    if tm.density is not None:
        ts, ws = grid.gauss_nodes(i)
        dvals = _density_values(tm.density, ts)
        for t, w, dv in zip(ts, ws, dvals):
            if dv == 0.0:
                continue
            out += (w * dv) * assemble_load(m,
                                            lambda pts, _t=t: tm.sigma_at(pts, _t),
                                            q=q)
    return out / grid.k
