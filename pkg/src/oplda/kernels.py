"""Hot-kernel dispatch.

The compiled extension is used when it imports; otherwise the numpy versions
in ``_kernels_py`` are used. Set ``OPLDA_PURE_PYTHON=1`` to force the fallback.
"""

import os

from oplda import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("OPLDA_PURE_PYTHON"):
    try:
        from oplda import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

gh_transform = _impl.gh_transform
gh_derivative = _impl.gh_derivative
gh_inverse = _impl.gh_inverse
segment_sums = _impl.segment_sums

GRID_LO = _kernels_py.GRID_LO
GRID_HI = _kernels_py.GRID_HI
GRID_SIZE = _kernels_py.GRID_SIZE
SMALL_G = _kernels_py.SMALL_G

__all__ = [
    "BACKEND",
    "gh_transform",
    "gh_derivative",
    "gh_inverse",
    "segment_sums",
]
