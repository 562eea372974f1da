"""Kernel backend selection.

The compiled backend is used when importable; set ``DDIQC_PURE_PYTHON=1``
to force the NumPy fallback.
"""
import os

from . import _pykernels

if os.environ.get("DDIQC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
hankel = _impl.hankel
block_convolve = _impl.block_convolve
ss_simulate = _impl.ss_simulate


def available_backends():
    """Return the importable kernel modules keyed by backend name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
