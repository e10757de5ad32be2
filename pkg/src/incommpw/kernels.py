"""Kernel backend dispatch.

The compiled Cython kernel is used when importable; otherwise the chunked
numpy implementation takes over.  Setting the environment variable
``INCOMMPW_PURE_PYTHON=1`` forces the fallback (useful for benchmarking and
for verifying backend equivalence).
"""

import os

from . import _kernels_py

if os.environ.get("INCOMMPW_PURE_PYTHON") == "1":
    _impl = _kernels_py
    HAVE_COMPILED = False
else:
    try:
        from . import _kernels as _impl

        HAVE_COMPILED = True
    except ImportError:
        _impl = _kernels_py
        HAVE_COMPILED = False

BACKEND = "compiled" if HAVE_COMPILED else "numpy"


def fill_potential_terms(H, m, n, v1_table, v1_mask, v2_table, v2_mask):
    """Add both layer-potential coupling terms to H in place.

    ``v*_table``/``v*_mask`` are the dense offset tables from
    ``FourierPotential.difference_table``.  Returns ``(miss1, miss2)``, the
    number of couplings whose coefficient was not stored (each contributed 0).
    """
    import numpy as np

    return _impl.fill_potential_terms(
        H,
        np.ascontiguousarray(m, dtype=np.int64),
        np.ascontiguousarray(n, dtype=np.int64),
        np.ascontiguousarray(v1_table.ravel(), dtype=np.complex128),
        np.ascontiguousarray(v1_mask.ravel().astype(np.uint8)),
        np.asarray(v1_table.shape, dtype=np.int64),
        np.ascontiguousarray(v2_table.ravel(), dtype=np.complex128),
        np.ascontiguousarray(v2_mask.ravel().astype(np.uint8)),
        np.asarray(v2_table.shape, dtype=np.int64),
    )
