"""Hot-loop backend selection.

The compiled ``_kernels`` extension is used when importable; set
``KGCEP_PURE_PYTHON=1`` to force the pure-Python fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
sgd_epoch = _kernels_py.sgd_epoch

if os.environ.get("KGCEP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        sgd_epoch = _kernels.sgd_epoch
        BACKEND = "cython"


def get_backend(name=None):
    """Return ``(name, sgd_epoch)`` for ``name`` in {None, 'python', 'cython'}."""
    if name is None:
        return BACKEND, sgd_epoch
    if name == "python":
        return "python", _kernels_py.sgd_epoch
    if name == "cython":
        from . import _kernels
        return "cython", _kernels.sgd_epoch
    raise ValueError(f"unknown backend {name!r}")
