"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise, or when
``PI_ORACLE_PURE=1``, the numpy implementation in ``_kernels_py`` is used.
Both expose ``posterior_batch`` and ``log_mixture_batch`` with identical
signatures.
"""
import os

from . import _kernels_py

if os.environ.get("PI_ORACLE_PURE", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

posterior_batch = _impl.posterior_batch
log_mixture_batch = _impl.log_mixture_batch

__all__ = ["BACKEND", "posterior_batch", "log_mixture_batch"]
