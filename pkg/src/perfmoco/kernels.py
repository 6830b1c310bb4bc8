"""Backend selection for the registration kernels.

Imports the compiled extension when it built successfully, otherwise falls
back to the pure-numpy implementations.  Set ``PERFMOCO_PURE_PYTHON=1`` to
force the fallback (used by the parity tests and benchmarks).
"""

import os

from . import _kernels_py

if os.environ.get("PERFMOCO_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

bilinear_warp = _impl.bilinear_warp
demons_force = _impl.demons_force


def backend_name():
    """Return ``"cython"`` or ``"python"`` for the active backend."""
    return "cython" if _impl.__name__.endswith("._kernels") else "python"
