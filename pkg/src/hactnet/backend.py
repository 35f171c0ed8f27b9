"""Selects the kernel backend at import.

The compiled extension is preferred; the pure-numpy fallback is used when
the extension is missing or when HACTNET_PURE_PYTHON is set to a non-empty
value. Both expose the same functions with bit-identical outputs.
"""

from __future__ import annotations

import os

from . import _kernels_np

if os.environ.get("HACTNET_PURE_PYTHON"):
    kernels = _kernels_np
else:
    try:
        from . import _kernels_cy as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_np


def active_backend() -> str:
    """Name of the kernel backend in use ("cython" or "numpy")."""
    return kernels.BACKEND_NAME
