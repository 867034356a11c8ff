"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. ``TDIMPUTE_BACKEND=python`` or ``=compiled`` forces a
choice (forcing ``compiled`` without the extension built is an error).

The four kernels re-exported here are the package's hot loops:
``nan_euclidean``, ``knn_impute``, ``forward_fill_2d``, ``delta_2d``.
"""

import os

from . import _pykernels

_forced = os.environ.get("TDIMPUTE_BACKEND", "").strip().lower()

_impl = None
if _forced == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _forced == "compiled":
            raise ImportError(
                "TDIMPUTE_BACKEND=compiled but the extension is not built; "
                "reinstall the package or drop the override"
            )
        _impl = _pykernels

BACKEND = _impl.BACKEND_NAME
nan_euclidean = _impl.nan_euclidean
knn_impute = _impl.knn_impute
forward_fill_2d = _impl.forward_fill_2d
delta_2d = _impl.delta_2d


def available_backends():
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the kernel module for an explicit backend name (benchmarks)."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
