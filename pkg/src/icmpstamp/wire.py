"""Bit-exact codec for ICMP timestamp request/reply payloads.

Wire layout (20 bytes, all fields big-endian):

    byte 0      type (13 request / 14 reply)
    byte 1      code (0)
    bytes 2-3   checksum
    bytes 4-5   identifier
    bytes 6-7   sequence number
    bytes 8-11  originate timestamp
    bytes 12-15 receive timestamp
    bytes 16-19 transmit timestamp

Timestamps carry milliseconds since UTC midnight unless the most
significant bit is set, in which case the value is non-standard.  The
codec deals only with the ICMP payload; IP headers belong to the
transport layer.

The checksum and byte-swap kernels come from the compiled ``_speedups``
extension when it is available, otherwise from the pure-Python
``_kernels_py`` module.  Set ``ICMPSTAMP_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace

if os.environ.get("ICMPSTAMP_PURE"):
    from icmpstamp import _kernels_py as _kernels

    _BACKEND = "pure"
else:
    try:
        from icmpstamp import _speedups as _kernels  # type: ignore[no-redef]

        _BACKEND = "compiled"
    except ImportError:
        from icmpstamp import _kernels_py as _kernels  # type: ignore[no-redef]

        _BACKEND = "pure"

TIMESTAMP_REQUEST = 13
TIMESTAMP_REPLY = 14
MESSAGE_LEN = 20

_LAYOUT = struct.Struct("!BBHHHIII")
_U16 = 0xFFFF
_U32 = 0xFFFFFFFF


class WireError(ValueError):
    """Malformed timestamp message or field out of range."""


class TruncatedMessage(WireError):
    """Buffer shorter than the 20-byte timestamp message."""


class NotATimestamp(WireError):
    """ICMP type is neither timestamp request (13) nor reply (14)."""


def kernel_backend() -> str:
    """Which kernel implementation is active: ``"compiled"`` or ``"pure"``."""
    return _BACKEND


@dataclass(frozen=True)
class TimestampMessage:
    """One ICMP timestamp request or reply.

    ``trailing_data`` records that decode saw bytes past the 20-byte
    message (middleboxes pad); it is not part of the wire image and is
    ignored in comparisons.
    """

    icmp_type: int
    code: int = 0
    checksum: int = 0
    ident: int = 0
    seq: int = 0
    orig_ts: int = 0
    recv_ts: int = 0
    xmit_ts: int = 0
    trailing_data: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.icmp_type not in (TIMESTAMP_REQUEST, TIMESTAMP_REPLY):
            raise NotATimestamp(f"icmp_type must be 13 or 14, got {self.icmp_type}")
        if not 0 <= self.code <= 0xFF:
            raise WireError(f"code out of 8-bit range: {self.code}")
        for name in ("checksum", "ident", "seq"):
            v = getattr(self, name)
            if not 0 <= v <= _U16:
                raise WireError(f"{name} out of 16-bit range: {v}")
        for name in ("orig_ts", "recv_ts", "xmit_ts"):
            v = getattr(self, name)
            if not 0 <= v <= _U32:
                raise WireError(f"{name} out of 32-bit range: {v}")

    @property
    def is_request(self) -> bool:
        return self.icmp_type == TIMESTAMP_REQUEST

    @property
    def is_reply(self) -> bool:
        return self.icmp_type == TIMESTAMP_REPLY


def encode(msg: TimestampMessage) -> bytes:
    """Serialize to the 20-byte wire image.

    The checksum field is emitted verbatim; callers decide whether it is
    valid (bad-checksum probes rely on this).
    """
    return _LAYOUT.pack(
        msg.icmp_type,
        msg.code,
        msg.checksum,
        msg.ident,
        msg.seq,
        msg.orig_ts,
        msg.recv_ts,
        msg.xmit_ts,
    )


def decode(buf) -> TimestampMessage:
    """Parse a timestamp message from ``buf``.

    Raises TruncatedMessage below 20 bytes and NotATimestamp for other
    ICMP types.  Bytes past 20 are ignored but flagged via
    ``trailing_data``.
    """
    view = memoryview(buf)
    if len(view) < MESSAGE_LEN:
        raise TruncatedMessage(f"need {MESSAGE_LEN} bytes, got {len(view)}")
    icmp_type = view[0]
    if icmp_type not in (TIMESTAMP_REQUEST, TIMESTAMP_REPLY):
        raise NotATimestamp(f"ICMP type {icmp_type} is not a timestamp message")
    fields = _LAYOUT.unpack_from(view, 0)
    return TimestampMessage(*fields, trailing_data=len(view) > MESSAGE_LEN)


def internet_checksum(data) -> int:
    """RFC 1071 ones'-complement checksum of ``data``.

    Placing the result in the message's checksum field makes the
    ones'-complement sum over the whole message fold to 0xFFFF.
    """
    return _kernels.internet_checksum(data)


def verify_checksum(msg_bytes) -> bool:
    """True iff the checksum over the full message (field included) holds."""
    if len(msg_bytes) < MESSAGE_LEN:
        raise TruncatedMessage(f"need {MESSAGE_LEN} bytes, got {len(msg_bytes)}")
    return _kernels.checksum_valid(msg_bytes)


def byte_swap_32(x: int) -> int:
    """Reverse the four bytes of ``x``; involutive."""
    if not 0 <= x <= _U32:
        raise ValueError(f"not a 32-bit unsigned value: {x}")
    return _kernels.byte_swap_32(x)


def fill_checksum(msg: TimestampMessage) -> TimestampMessage:
    """Return ``msg`` with a freshly computed, valid checksum field."""
    zeroed = replace(msg, checksum=0)
    return replace(msg, checksum=internet_checksum(encode(zeroed)))
