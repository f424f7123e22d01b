"""Pure-Python byte-level kernels.

These three functions sit on the per-packet hot path (every probe built and
every reply parsed goes through the checksum at least once).  A compiled
twin with identical semantics lives in ``_speedups.pyx``; ``wire.py`` picks
whichever imports.  Keep the two in sync.
"""

import struct


def internet_checksum(data) -> int:
    """Ones'-complement checksum over big-endian 16-bit words (RFC 1071).

    Odd-length input is padded with one zero byte for summation.
    """
    if not isinstance(data, bytes):
        data = bytes(data)
    if len(data) & 1:
        data = data + b"\x00"
    total = sum(struct.unpack("!%dH" % (len(data) >> 1), data))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def checksum_valid(data) -> bool:
    """True iff the ones'-complement sum over ``data`` folds to 0xFFFF."""
    if not isinstance(data, bytes):
        data = bytes(data)
    if len(data) & 1:
        data = data + b"\x00"
    total = sum(struct.unpack("!%dH" % (len(data) >> 1), data))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return total == 0xFFFF


def byte_swap_32(x: int) -> int:
    """Reverse the four bytes of a 32-bit unsigned integer."""
    return (
        ((x & 0x000000FF) << 24)
        | ((x & 0x0000FF00) << 8)
        | ((x >> 8) & 0x0000FF00)
        | ((x >> 24) & 0x000000FF)
    )
