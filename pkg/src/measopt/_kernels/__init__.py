"""Hot numerical kernels with a compiled (Cython) core and a NumPy fallback.

The compiled extension is optional: if it was not built (or the environment
variable MEASOPT_NO_SPEEDUPS is set), the pure-NumPy implementations in
``_fallback`` are used instead.  Both backends implement the same
``csr_matvec(row_offsets, col_indices, values, x, out)`` contract.
"""

import os

from . import _fallback

if os.environ.get("MEASOPT_NO_SPEEDUPS"):
    _speedups = None
else:
    try:
        from . import _speedups
    except ImportError:
        _speedups = None

HAVE_COMPILED = _speedups is not None

if HAVE_COMPILED:
    csr_matvec = _speedups.csr_matvec
else:
    csr_matvec = _fallback.csr_matvec


def backend_name():
    """Name of the active matvec backend ('compiled' or 'fallback')."""
    return "compiled" if HAVE_COMPILED else "fallback"
