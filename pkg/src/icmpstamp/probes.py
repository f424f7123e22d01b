"""The four timestamp request types and reply tamper verification.

Every request encodes verification material so that a reply proves, by
itself plus the stored probe record, that nothing on the path rewrote the
originate timestamp, identifier, or sequence number:

* standard / bad-checksum / duplicate requests derive (id, seq) from the
  low 32 bits of MD5(destination . originate_timestamp);
* bad-clock requests pick (id, seq) and derive the originate timestamp
  from the low 32 bits of MD5(destination . id . seq).

MD5 is fine here: the hash only needs to make blind field rewrites
detectable, not resist deliberate collision search.

Hash input convention: the destination IPv4 address as 4 big-endian
bytes, then the originate timestamp as 4 big-endian bytes (or id and seq
as 2+2 big-endian bytes).  "Low 32 bits" means the final four digest
bytes read big-endian; id takes the high 16 of those bits, seq the low
16.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from hashlib import md5
from ipaddress import IPv4Address

from icmpstamp import wire
from icmpstamp.clock import ms_since_utc_midnight
from icmpstamp.wire import TIMESTAMP_REPLY, TIMESTAMP_REQUEST, TimestampMessage


class ProbeKind(Enum):
    STANDARD = "standard"
    BAD_CLOCK = "bad_clock"
    BAD_CHECKSUM = "bad_checksum"
    DUPLICATE = "duplicate"


class TamperVerdict(Enum):
    CLEAN = "clean"
    ORIGINATE_MODIFIED = "originate_modified"
    ID_SEQ_MODIFIED = "id_seq_modified"
    UNMATCHED = "unmatched"


@dataclass(frozen=True)
class ProbeRecord:
    """One sent probe: what went out, where, and when."""

    kind: ProbeKind
    dest: str
    send_time: datetime
    message: TimestampMessage
    round_no: int = 0


def _dest_bytes(dest: str) -> bytes:
    return IPv4Address(dest).packed


def hash_id_seq(dest: str, orig_ts: int) -> tuple[int, int]:
    """(id, seq) for a probe whose originate timestamp is authoritative."""
    digest = md5(_dest_bytes(dest) + orig_ts.to_bytes(4, "big")).digest()
    low32 = int.from_bytes(digest[-4:], "big")
    return low32 >> 16, low32 & 0xFFFF


def hash_orig(dest: str, ident: int, seq: int) -> int:
    """Originate timestamp for a bad-clock probe with chosen (id, seq)."""
    digest = md5(
        _dest_bytes(dest) + ident.to_bytes(2, "big") + seq.to_bytes(2, "big")
    ).digest()
    return int.from_bytes(digest[-4:], "big")


def make_standard(dest: str, now: datetime) -> ProbeRecord:
    """Correct originate timestamp, zeroed receive/transmit fields."""
    orig = ms_since_utc_midnight(now)
    ident, seq = hash_id_seq(dest, orig)
    msg = wire.fill_checksum(
        TimestampMessage(TIMESTAMP_REQUEST, ident=ident, seq=seq, orig_ts=orig)
    )
    return ProbeRecord(ProbeKind.STANDARD, dest, now, msg)


def make_bad_clock(dest: str, ident: int, seq: int, now: datetime) -> ProbeRecord:
    """Hash-derived originate timestamp; generally not a valid time of day."""
    orig = hash_orig(dest, ident, seq)
    msg = wire.fill_checksum(
        TimestampMessage(TIMESTAMP_REQUEST, ident=ident, seq=seq, orig_ts=orig)
    )
    return ProbeRecord(ProbeKind.BAD_CLOCK, dest, now, msg)


def make_bad_checksum(dest: str, now: datetime, rng: random.Random) -> ProbeRecord:
    """A standard probe carrying a deliberately wrong checksum.

    The checksum is drawn uniformly and redrawn until the message actually
    fails verification (this also skips the rare second value that the
    ones'-complement sum accepts).
    """
    base = make_standard(dest, now)
    while True:
        candidate = replace(base.message, checksum=rng.getrandbits(16))
        if not wire.verify_checksum(wire.encode(candidate)):
            return ProbeRecord(ProbeKind.BAD_CHECKSUM, dest, now, candidate)


def make_duplicate(dest: str, now: datetime, round_no: int = 1) -> ProbeRecord:
    """All three timestamps preset to the same correct value.

    Sent a few seconds after the standard probe; a responder echoing these
    fields back unchanged exposes itself as a reflector, and one returning
    the same constant as before exposes a stuck clock.
    """
    orig = ms_since_utc_midnight(now)
    ident, seq = hash_id_seq(dest, orig)
    msg = wire.fill_checksum(
        TimestampMessage(
            TIMESTAMP_REQUEST,
            ident=ident,
            seq=seq,
            orig_ts=orig,
            recv_ts=orig,
            xmit_ts=orig,
        )
    )
    return ProbeRecord(ProbeKind.DUPLICATE, dest, now, msg, round_no=round_no)


def verify_reply(
    probe: ProbeRecord, reply: TimestampMessage, reply_src: str
) -> TamperVerdict:
    """Check a reply against its probe's verification material.

    The verdict names the first violated field group, checked in order:
    source address, originate timestamp, then id/sequence.
    """
    if reply.icmp_type != TIMESTAMP_REPLY:
        raise ValueError(f"not a timestamp reply: type {reply.icmp_type}")
    if IPv4Address(reply_src) != IPv4Address(probe.dest):
        return TamperVerdict.UNMATCHED
    if reply.orig_ts != probe.message.orig_ts:
        return TamperVerdict.ORIGINATE_MODIFIED
    if probe.kind is ProbeKind.BAD_CLOCK:
        intact = reply.orig_ts == hash_orig(probe.dest, reply.ident, reply.seq)
    else:
        intact = (reply.ident, reply.seq) == hash_id_seq(probe.dest, reply.orig_ts)
    if not intact:
        return TamperVerdict.ID_SEQ_MODIFIED
    return TamperVerdict.CLEAN
