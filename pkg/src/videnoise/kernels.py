"""Hot-kernel backend selection.

The compiled extension is preferred when it imported cleanly; otherwise the
numpy twin in ``_kernels_py`` serves the same contracts. Set the environment
variable ``VIDENOISE_PURE_PYTHON=1`` to force the numpy backend (used by the
benchmark and the backend-equivalence tests).
"""

import os

from . import _kernels_py

if os.environ.get("VIDENOISE_PURE_PYTHON", "").strip().lower() in {"1", "true", "yes"}:
    _impl = _kernels_py
    COMPILED = False
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _impl = _kernels_py
        COMPILED = False
    else:
        _impl = _compiled
        COMPILED = True

BACKEND = "compiled" if COMPILED else "numpy"

gather_patches = _impl.gather_patches
gather_bm_patches = _impl.gather_bm_patches
deposit_patches = _impl.deposit_patches
block_match = _impl.block_match
