# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hash-bitvector kernel.

Scalar twin of ``_simhash_py.simhash_rows``; the two must stay
bit-identical, so the accumulation order here (12 uniforms per feature,
then domains in ascending hash order) is load-bearing. Built with
-ffp-contract=off so the compiler cannot fuse the multiply-add sequence
into FMA instructions and change the rounding.
"""

from libc.stdint cimport int64_t, uint64_t


cdef extern from *:
    """
    static const uint64_t FP_GOLDEN = 0x9E3779B97F4A7C15ULL;
    static const uint64_t FP_MIX_C1 = 0xFF51AFD7ED558CCDULL;
    static const uint64_t FP_MIX_C2 = 0xC4CEB9FE1A85EC53ULL;
    static const double FP_INV_2_53 = 1.1102230246251565e-16; /* 2**-53 */
    """
    const uint64_t FP_GOLDEN
    const uint64_t FP_MIX_C1
    const uint64_t FP_MIX_C2
    const double FP_INV_2_53

cdef enum:
    DRAWS = 12


cdef inline uint64_t _mix64(uint64_t x) noexcept nogil:
    x ^= x >> 33
    x *= FP_MIX_C1
    x ^= x >> 33
    x *= FP_MIX_C2
    x ^= x >> 33
    return x


def simhash_rows(
    const uint64_t[::1] values,
    const int64_t[::1] offsets,
    int bit_length,
    uint64_t seed_key,
    uint64_t[::1] out,
):
    """Fill ``out[i]`` with the hash bitvector of CSR row i (see fallback)."""
    cdef Py_ssize_t n_rows = offsets.shape[0] - 1
    cdef Py_ssize_t i, d
    cdef int64_t lo, hi
    cdef int b, j
    cdef uint64_t key0, base, value, one = 1
    cdef double s12, acc

    with nogil:
        for i in range(n_rows):
            lo = offsets[i]
            hi = offsets[i + 1]
            value = 0
            for b in range(bit_length):
                acc = 0.0
                for d in range(lo, hi):
                    key0 = _mix64(values[d] ^ seed_key)
                    base = key0 + FP_GOLDEN * (<uint64_t>b * DRAWS + 1)
                    s12 = 0.0
                    for j in range(DRAWS):
                        s12 += <double>(
                            _mix64(base + FP_GOLDEN * <uint64_t>j) >> 11
                        ) * FP_INV_2_53
                    acc += s12 - 6.0
                if acc > 0.0:
                    value |= one << (bit_length - 1 - b)
            out[i] = value
