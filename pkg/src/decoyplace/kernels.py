"""Backend selection for the shortest-path kernels.

The compiled extension is used when it imports cleanly; otherwise the
pure-Python module takes over. Set ``DECOYPLACE_PURE=1`` to force the
fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("DECOYPLACE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def all_pairs_dag(n, topo, in_ptr, in_src, in_w, rtol):
    return _impl.all_pairs_dag(n, topo, in_ptr, in_src, in_w, rtol)


def extract_paths(pred, dist):
    return _impl.extract_paths(pred, dist)


def count_augmented(n, topo, in_ptr, in_src, in_w, is_decoy, sources, is_target, rtol):
    return _impl.count_augmented(n, topo, in_ptr, in_src, in_w, is_decoy, sources, is_target, rtol)
