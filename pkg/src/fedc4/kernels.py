"""Kernel backend selection.

The compiled extension is used when it was built; ``FEDC4_PURE_PYTHON=1``
forces the pure-Python twins.
"""

import os

if os.getenv("FEDC4_PURE_PYTHON") == "1":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        from . import _kernels_py as _impl

BACKEND = "cython" if _impl.__name__.endswith("._kernels") else "python"

local_move = _impl.local_move
sorted_w1 = _impl.sorted_w1
