"""Selects the hash-bitvector kernel at import time.

The compiled extension is preferred; the NumPy fallback is used when the
extension is missing or when ``FLOCPRIV_PURE_PYTHON=1`` is set. Both
implementations are bit-identical (enforced by tests), so the choice only
affects speed.
"""

from __future__ import annotations

import os

import numpy as np

from . import _simhash_py

if os.environ.get("FLOCPRIV_PURE_PYTHON") == "1":
    _impl = _simhash_py
    KERNEL_NAME = "numpy-fallback"
else:
    try:
        from . import _simhash_cy as _impl  # type: ignore[no-redef]

        KERNEL_NAME = "compiled"
    except ImportError:
        _impl = _simhash_py
        KERNEL_NAME = "numpy-fallback"


def simhash_rows(
    values: np.ndarray,
    offsets: np.ndarray,
    bit_length: int,
    seed_key: int,
    *,
    impl=None,
) -> np.ndarray:
    """Hash bitvectors for every row of a CSR (values, offsets) layout.

    ``values`` are 64-bit domain hashes, sorted ascending within each row.
    ``impl`` ("compiled" or "python") overrides the module-level kernel
    choice; used by the benchmark and the equivalence tests.
    """
    values = np.ascontiguousarray(values, dtype=np.uint64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    out = np.empty(len(offsets) - 1, dtype=np.uint64)
    module = _impl
    if impl == "python":
        module = _simhash_py
    elif impl == "compiled":
        from . import _simhash_cy as module  # type: ignore[no-redef]
    elif impl is not None:
        module = impl
    module.simhash_rows(values, offsets, int(bit_length), np.uint64(seed_key), out)
    return out
