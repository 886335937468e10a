"""Collision kernel backend, chosen at import.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
pure-Python ``_pykernels`` module is used. Setting ``MMDRRT_PURE_PYTHON=1``
forces the fallback.
"""

import os

from . import _pykernels

try:
    if os.environ.get("MMDRRT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _backend
except ImportError:
    _backend = _pykernels

CollisionModel = _backend.CollisionModel
PyCollisionModel = _pykernels.CollisionModel
BACKEND = CollisionModel.backend


def compiled_available():
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True


def get_model_class(backend=None):
    """Return the kernel class for ``backend`` ('cython', 'python' or None for default)."""
    if backend is None:
        return CollisionModel
    if backend == "python":
        return _pykernels.CollisionModel
    if backend == "cython":
        from . import _ckernels

        return _ckernels.CollisionModel
    raise ValueError(f"unknown kernel backend {backend!r}")
