# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled twins of the ``_kernels_py`` hot-path functions.

Semantics must match ``_kernels_py`` exactly; the test suite runs the same
vectors against both implementations whenever this module is importable.
"""

from libc.stdint cimport uint8_t, uint32_t, uint64_t


def internet_checksum(data) -> int:
    """Ones'-complement checksum over big-endian 16-bit words (RFC 1071)."""
    cdef const uint8_t[::1] buf = data
    cdef uint64_t total = 0
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t n = buf.shape[0]
    while i + 1 < n:
        total += (<uint32_t> buf[i] << 8) | buf[i + 1]
        i += 2
    if n & 1:
        total += <uint32_t> buf[n - 1] << 8
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def checksum_valid(data) -> bool:
    """True iff the ones'-complement sum over ``data`` folds to 0xFFFF."""
    cdef const uint8_t[::1] buf = data
    cdef uint64_t total = 0
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t n = buf.shape[0]
    while i + 1 < n:
        total += (<uint32_t> buf[i] << 8) | buf[i + 1]
        i += 2
    if n & 1:
        total += <uint32_t> buf[n - 1] << 8
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return total == 0xFFFF


def byte_swap_32(x) -> int:
    """Reverse the four bytes of a 32-bit unsigned integer."""
    cdef uint32_t v = <uint32_t> (<uint64_t> x)
    return (
        ((v & 0x000000FFu) << 24)
        | ((v & 0x0000FF00u) << 8)
        | ((v >> 8) & 0x0000FF00u)
        | ((v >> 24) & 0x000000FFu)
    )
