"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``LCWRA_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("LCWRA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

theta_values = _impl.theta_values
theta_terms = _impl.theta_terms
greedy_fill = _impl.greedy_fill
phase1_eval = _impl.phase1_eval


def backend_module(name):
    """Return the kernel module for ``name`` (``"python"`` or ``"cython"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
