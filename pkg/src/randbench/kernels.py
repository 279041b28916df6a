"""Select the compiled propagation kernel, falling back to numpy.

Set ``RANDBENCH_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"

if os.environ.get("RANDBENCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py


def propagate(table, codes, vec):
    """Propagate ``vec`` through the transfer matrices ``table[codes]`` in order."""
    return _impl.propagate(
        np.ascontiguousarray(table, dtype=np.float64),
        np.ascontiguousarray(codes, dtype=np.int32),
        np.ascontiguousarray(vec, dtype=np.float64),
    )


def propagate_many(table, codes, lengths, vec):
    """Batched :func:`propagate` over the rows of a padded code matrix."""
    return _impl.propagate_many(
        np.ascontiguousarray(table, dtype=np.float64),
        np.ascontiguousarray(codes, dtype=np.int32),
        np.ascontiguousarray(lengths, dtype=np.int64),
        np.ascontiguousarray(vec, dtype=np.float64),
    )
