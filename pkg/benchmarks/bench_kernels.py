#!/usr/bin/env python3
"""Compare the compiled matvec kernel against the NumPy fallback.

Times CSR matrix-vector products and a full CG solve on the stiffness
matrices of the study meshes.  Run after `pip install -e .`:

    python3 benchmarks/bench_kernels.py
"""
import time

import numpy as np

from measopt import (apply_dirichlet, assemble_stiffness, assemble_mass,
                     build_lshape_mesh, cg_solve)
from measopt._kernels import HAVE_COMPILED, _fallback

if HAVE_COMPILED:
    from measopt._kernels import _speedups


def time_matvec(fn, A, x, out, repeats):
    # warm up, then best-of-5 batches
    fn(A.row_offsets, A.col_indices, A.values, x, out)
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn(A.row_offsets, A.col_indices, A.values, x, out)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def time_cg(A, b, backend, compiled):
    # point the dispatch in fem.SparseMatrix.matvec at one backend
    from measopt import _kernels
    old = _kernels.csr_matvec, _kernels.HAVE_COMPILED
    _kernels.csr_matvec, _kernels.HAVE_COMPILED = backend, compiled
    try:
        t0 = time.perf_counter()
        cg_solve(A, b, rel_tol=1e-10)
        return time.perf_counter() - t0
    finally:
        _kernels.csr_matvec, _kernels.HAVE_COMPILED = old


def main():
    print("compiled extension available: %s" % HAVE_COMPILED)
    print()
    print("%6s %10s %12s %12s %9s" % ("n", "nnz", "fallback", "compiled",
                                      "speedup"))
    for n in (16, 32, 64, 128):
        m = build_lshape_mesh(n)
        K = assemble_stiffness(m)
        x = np.linspace(0.0, 1.0, K.n_cols)
        out = np.empty(K.n_rows)
        repeats = max(3, 2_000_000 // K.nnz)
        t_fb = time_matvec(_fallback.csr_matvec, K, x, out, repeats)
        if HAVE_COMPILED:
            t_sp = time_matvec(_speedups.csr_matvec, K, x, out, repeats)
            print("%6d %10d %10.3g us %10.3g us %8.1fx"
                  % (n, K.nnz, t_fb * 1e6, t_sp * 1e6, t_fb / t_sp))
        else:
            print("%6d %10d %10.3g us %12s" % (n, K.nnz, t_fb * 1e6, "-"))
    print()

    # one full Poisson-style CG solve on the finest mesh
    m = build_lshape_mesh(64)
    K = assemble_stiffness(m)
    M = assemble_mass(m)
    b = M @ np.ones(m.n_vertices)
    A_red, b_red, _ = apply_dirichlet(K, b, m)
    t_fb = time_cg(A_red, b_red, _fallback.csr_matvec, compiled=False)
    line = "cg on n=64 interior system (%d unknowns): fallback %.3g s" \
        % (A_red.n_rows, t_fb)
    if HAVE_COMPILED:
        t_sp = time_cg(A_red, b_red, _speedups.csr_matvec, compiled=True)
        line += ", compiled %.3g s (%.1fx)" % (t_sp, t_fb / t_sp)
    print(line)


if __name__ == "__main__":
    main()
