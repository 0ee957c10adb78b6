"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``GSOT_PURE_PYTHON=1`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("GSOT_PURE_PYTHON", "") not in ("", "0"):
    from gsot._jacobi_py import orthogonalize_rows
else:
    try:
        from gsot._jacobi import orthogonalize_rows

        BACKEND = "cython"
    except ImportError:  # extension not built
        from gsot._jacobi_py import orthogonalize_rows

__all__ = ["BACKEND", "orthogonalize_rows"]
