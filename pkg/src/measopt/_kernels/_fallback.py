"""Pure-NumPy versions of the hot kernels.

Kept behaviourally identical to the compiled versions in ``_speedups.pyx``;
any change here must be mirrored there.
"""

import numpy as np


def csr_matvec(row_offsets, col_indices, values, x, out, row_index=None):
    """out <- A @ x for a CSR matrix given by (row_offsets, col_indices, values).

    ``row_index`` is the decompressed row index per stored entry; callers that
    perform many products with the same matrix pass a cached copy, otherwise
    it is rebuilt on every call.
    """
    if row_index is None:
        n_rows = len(row_offsets) - 1
        row_index = np.repeat(np.arange(n_rows), np.diff(row_offsets))
    prod = values * x[col_indices]
    acc = np.bincount(row_index, weights=prod, minlength=len(row_offsets) - 1)
    out[:] = acc
    return out
