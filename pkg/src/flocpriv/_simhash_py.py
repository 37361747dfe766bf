"""NumPy fallback for the hash-bitvector kernel.

Must produce bit-identical output to the compiled kernel: the uniform
draws are exact (integer scramble, then an exact power-of-two scale) and
the floating-point accumulation below replays the same IEEE add sequence
the compiled loop uses (uniforms j = 0..11 first, then domains in ascending
hash order). ``np.sum`` is pairwise and would round differently, so the
reductions are written as explicit sequential adds.
"""

from __future__ import annotations

import numpy as np

from .hashing import DRAWS_PER_FEATURE, GOLDEN, INV_2_53, MIX_C1, MIX_C2

_U64 = np.uint64
_SHIFT_33 = _U64(33)
_SHIFT_11 = _U64(11)

# Bound on the (rows, row_len, bit_length, 12) scratch block, in elements.
_CHUNK_BUDGET = 4_000_000


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> _SHIFT_33)
    x = x * _U64(MIX_C1)
    x = x ^ (x >> _SHIFT_33)
    x = x * _U64(MIX_C2)
    return x ^ (x >> _SHIFT_33)


def _feature_sums(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Per-(row, domain, bit) feature values, shape ``keys.shape + (bits,)``.

    ``counters`` has shape (bits, 12) and holds GOLDEN * (t + 1) for draw
    index t = bit * 12 + j.
    """
    raw = keys[..., None, None] + counters  # broadcast, wraps mod 2**64
    u = (_mix64(raw) >> _SHIFT_11).astype(np.float64) * INV_2_53
    acc = u[..., 0].copy()
    for j in range(1, DRAWS_PER_FEATURE):
        acc += u[..., j]
    return acc - 6.0


def simhash_rows(
    values: np.ndarray,
    offsets: np.ndarray,
    bit_length: int,
    seed_key: int,
    out: np.ndarray,
) -> None:
    """Fill ``out[i]`` with the hash bitvector of row i of a CSR layout.

    ``values`` holds concatenated 64-bit domain hashes, each row slice
    sorted ascending; ``offsets`` is the usual length n_rows + 1 index
    array. Bit b of the result (counting from the most significant end of
    a ``bit_length``-wide value) is 1 iff the summed feature is > 0.
    """
    n_rows = len(offsets) - 1
    if n_rows == 0:
        return
    counters = (
        np.arange(1, bit_length * DRAWS_PER_FEATURE + 1, dtype=np.uint64)
        * _U64(GOLDEN)
    ).reshape(bit_length, DRAWS_PER_FEATURE)
    lengths = np.diff(offsets)
    shifts = np.arange(bit_length - 1, -1, -1, dtype=np.uint64)
    keys_all = _mix64(np.asarray(values, dtype=np.uint64) ^ _U64(seed_key))

    with np.errstate(over="ignore"):
        for length in np.unique(lengths):
            rows = np.nonzero(lengths == length)[0]
            if length == 0:
                out[rows] = 0
                continue
            per_row = int(length) * bit_length * DRAWS_PER_FEATURE
            block = max(1, _CHUNK_BUDGET // per_row)
            starts_all = offsets[rows]
            for lo in range(0, len(rows), block):
                rows_c = rows[lo : lo + block]
                starts = starts_all[lo : lo + block]
                idx = starts[:, None] + np.arange(length)
                feats = _feature_sums(keys_all[idx], counters)
                acc = feats[:, 0, :].copy()
                for d in range(1, int(length)):
                    acc += feats[:, d, :]
                bits = (acc > 0.0).astype(np.uint64)
                out[rows_c] = np.bitwise_or.reduce(bits << shifts, axis=1)
