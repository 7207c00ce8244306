"""Select the regression-tree kernels at import time.

The compiled extension is used when it was built; set
``KNOBFORGE_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

BACKEND = "python"

if os.environ.get("KNOBFORGE_PURE_PYTHON", "") not in ("", "0"):
    from . import _forest_py as forest_kernels
else:
    try:
        from . import _forest_ext as forest_kernels

        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _forest_py as forest_kernels

__all__ = ["BACKEND", "forest_kernels"]
