"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the numpy
fallback is used. ``CRASHSMA_BACKEND=python`` forces the fallback and
``CRASHSMA_BACKEND=compiled`` makes a missing extension an import error.
"""

import logging
import os

from . import _pykernels

logger = logging.getLogger(__name__)

_choice = os.environ.get("CRASHSMA_BACKEND", "auto").lower()
if _choice not in ("auto", "python", "compiled"):
    raise ImportError(f"CRASHSMA_BACKEND must be auto, python or compiled, got {_choice!r}")

kernels = _pykernels
name = "python"

if _choice != "python":
    try:
        from . import _ckernels
    except ImportError:
        if _choice == "compiled":
            raise
        logger.debug("compiled kernels unavailable, using numpy fallback")
    else:
        kernels = _ckernels
        name = "compiled"


def available():
    """Names of the backends that can be loaded in this interpreter."""
    out = ["python"]
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        pass
    else:
        out.append("compiled")
    return out


def get(backend=None):
    """Return the kernel module for ``backend`` (None means the active one)."""
    if backend is None:
        return kernels
    if backend == "python":
        return _pykernels
    if backend == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")
