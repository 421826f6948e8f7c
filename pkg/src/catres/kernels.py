"""Kernel dispatch: compiled extension when importable, NumPy otherwise.

Set ``CATRES_PURE_PYTHON=1`` to force the NumPy path.
"""
import os

from . import _fallback

__all__ = ["BACKEND", "as_csr32", "lindblad_rhs", "wigner_grid"]

BACKEND = "python"
wigner_grid = _fallback.wigner_grid
lindblad_rhs = _fallback.lindblad_rhs

if os.environ.get("CATRES_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import lindblad_rhs, wigner_grid
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"


def as_csr32(m):
    """CSR copy with complex128 data and int32 indices, as the compiled kernels expect."""
    import numpy as np
    import scipy.sparse as sp

    c = sp.csr_matrix(m, dtype=np.complex128)
    c.sort_indices()
    c.indices = c.indices.astype(np.int32)
    c.indptr = c.indptr.astype(np.int32)
    return c
