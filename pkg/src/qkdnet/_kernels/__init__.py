"""Backend selection for the hot kernels.

The compiled extension is preferred; set ``QKDNET_PURE_PYTHON=1`` to
force the numpy fallback. ``BACKEND`` names the active one.
"""
import os

from . import _python

if os.environ.get("QKDNET_PURE_PYTHON", "") not in ("", "0"):
    _impl = _python
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _python

BACKEND = _impl.BACKEND
cascade = _impl.cascade
toeplitz_hash = _impl.toeplitz_hash


def compiled():
    """Return the compiled backend module, or None if it is not built."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


__all__ = ["BACKEND", "cascade", "toeplitz_hash", "compiled"]
