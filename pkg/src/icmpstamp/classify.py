"""Map collected probe/reply observations to behavior fingerprints.

Three independent verdicts are produced for a host:

* implementation classes: how the responder fills the reply fields
  (normal, lazy, stuck, reflection, byte-order bugs, ...);
* timekeeping: what unit and reference the clock counts in
  (milliseconds or seconds since UTC midnight, or Unix epoch seconds);
* correctness: whether the receive timestamp lands within the error
  margin of our originate timestamp, possibly after byte-swapping or
  clearing the most significant bit.

Classes are not mutually exclusive; a set is returned.  Only pairs whose
tamper verdict is clean participate; tampered pairs stay on the
observation but never influence the fingerprint.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

from icmpstamp.clock import (
    DAY_MS,
    OffsetTable,
    circular_diff,
    ms_since_utc_midnight,
    offset_millis,
)
from icmpstamp.probes import ProbeKind, ProbeRecord, TamperVerdict
from icmpstamp.wire import TIMESTAMP_REQUEST, TimestampMessage, byte_swap_32

MSB = 1 << 31
SECONDS_PER_DAY = 86_400
CONSTANT_LE_ONE = byte_swap_32(1)  # 0x01000000


class ImplClass(Enum):
    NORMAL = "normal"
    LAZY = "lazy"
    CHECKSUM_LAZY = "checksum_lazy"
    STUCK = "stuck"
    CONSTANT_0 = "constant_0"
    CONSTANT_1 = "constant_1"
    CONSTANT_LE_1 = "constant_le_1"
    REFLECTION = "reflection"
    NON_UTC = "non_utc"
    TIMEZONE = "timezone"
    LITTLE_ENDIAN = "little_endian"
    HTONS_BUG = "htons_bug"
    UNKNOWN = "unknown"


class Timekeeping(Enum):
    MILLISECOND = "millisecond"
    SECOND = "second"
    EPOCH = "epoch"
    UNKNOWN = "unknown"


class Correctness(Enum):
    CORRECT = "correct"
    CORRECT_LE = "correct_le"
    CORRECT_MSB = "correct_msb"
    INCORRECT = "incorrect"


class ScannerKind(Enum):
    NMAP_LIKE = "nmap_like"
    OTHER_SCANNER = "other_scanner"


class NoCleanReplies(ValueError):
    """Observation holds no clean probe/reply pair to classify."""


class AmbiguousTimezone(RuntimeError):
    """Multiple candidate offsets matched; margin too wide for the table."""


@dataclass(frozen=True)
class CorrectnessPolicy:
    """Error margin for calling a timestamp correct (strict less-than)."""

    margin_ms: int = 200

    def __post_init__(self):
        if not 0 < self.margin_ms < 43_200_000:
            raise ValueError(f"margin_ms out of range: {self.margin_ms}")


@dataclass(frozen=True)
class ObservedPair:
    """A probe, the reply bound to it, and when the reply arrived."""

    probe: ProbeRecord
    reply: TimestampMessage
    recv_instant: datetime
    tamper: TamperVerdict


@dataclass
class HostObservation:
    """Everything collected for one target address during a scan."""

    target: str
    pairs: list[ObservedPair]
    vantage: str = ""
    duplicate_replies: int = 0

    def clean_pairs(self) -> list[ObservedPair]:
        return [p for p in self.pairs if p.tamper is TamperVerdict.CLEAN]

    def first_clean(self, kind: ProbeKind) -> ObservedPair | None:
        candidates = [p for p in self.clean_pairs() if p.probe.kind is kind]
        if not candidates:
            return None
        return min(candidates, key=lambda p: p.probe.send_time)


@dataclass(frozen=True)
class Fingerprint:
    """Behavior summary for one host."""

    target: str
    classes: frozenset[ImplClass]
    timekeeping: Timekeeping
    correctness: Correctness
    tz_offset: float | None = None
    flags: frozenset[str] = frozenset()


def classify_correctness(
    reply: TimestampMessage, probe_orig: int, policy: CorrectnessPolicy
) -> Correctness:
    """Correctness of the receive timestamp against our originate timestamp.

    Tried in order: as-is, byte-swapped, with the most significant bit
    cleared.  All comparisons are strict and on the day circle.
    """
    m = policy.margin_ms
    recv = reply.recv_ts
    if abs(circular_diff(recv % DAY_MS, probe_orig)) < m:
        return Correctness.CORRECT
    if abs(circular_diff(byte_swap_32(recv) % DAY_MS, probe_orig)) < m:
        return Correctness.CORRECT_LE
    if recv & MSB and abs(circular_diff((recv - MSB) % DAY_MS, probe_orig)) < m:
        return Correctness.CORRECT_MSB
    return Correctness.INCORRECT


def infer_timezone(
    reply: TimestampMessage,
    probe_orig: int,
    table: OffsetTable,
    policy: CorrectnessPolicy,
) -> float | None:
    """The unique candidate offset explaining the receive timestamp, if any.

    The receive value must be interpretable as day milliseconds (most
    significant bit clear, below one day).  Candidate expectations are
    computed modulo one day, so a host nine hours ahead that appears
    fifteen hours behind still matches +9.
    """
    recv = reply.recv_ts
    if recv & MSB or recv >= DAY_MS:
        return None
    matches = [
        o
        for o in table.offsets
        if abs(circular_diff(recv, (probe_orig + offset_millis(o)) % DAY_MS))
        < policy.margin_ms
    ]
    if not matches:
        return None
    if len(matches) > 1:
        raise AmbiguousTimezone(
            f"margin {policy.margin_ms} ms matches offsets {matches}; "
            "narrow the margin or thin the table"
        )
    return matches[0]


def detect_htons_bug(obs: HostObservation) -> bool:
    """Reply timestamps truncated to zeroed low 16 bits, on both request types.

    Requires the standard and bad-clock replies to agree so that a correct
    clock caught at a 65,536 ms boundary does not false-positive.  All-zero
    values are a stuck-at-zero clock, not the truncation bug.  Missing
    either reply is indeterminate and reported as False.
    """
    std = obs.first_clean(ProbeKind.STANDARD)
    bad_clock = obs.first_clean(ProbeKind.BAD_CLOCK)
    if std is None or bad_clock is None:
        return False
    values = (
        std.reply.recv_ts,
        std.reply.xmit_ts,
        bad_clock.reply.recv_ts,
        bad_clock.reply.xmit_ts,
    )
    if all(v == 0 for v in values):
        return False
    return all(v % 65536 == 0 for v in values)


def classify_implementation(
    obs: HostObservation,
    policy: CorrectnessPolicy,
    table: OffsetTable | None = None,
) -> set[ImplClass]:
    """Apply every implementation fingerprint rule; return all that fire.

    An observation with no clean replies cannot be classified and raises
    NoCleanReplies.  If nothing fires the result is {UNKNOWN}.
    """
    if table is None:
        table = OffsetTable()
    if not obs.clean_pairs():
        raise NoCleanReplies(f"no clean replies for {obs.target}")

    classes: set[ImplClass] = set()
    std = obs.first_clean(ProbeKind.STANDARD)
    dup = obs.first_clean(ProbeKind.DUPLICATE)

    if obs.first_clean(ProbeKind.BAD_CHECKSUM) is not None:
        classes.add(ImplClass.CHECKSUM_LAZY)

    if std is not None:
        recv, xmit = std.reply.recv_ts, std.reply.xmit_ts
        orig = std.probe.message.orig_ts
        if recv != xmit and recv != 0 and xmit != 0:
            classes.add(ImplClass.NORMAL)
        if recv == xmit != 0:
            classes.add(ImplClass.LAZY)
        if recv > MSB - 1 and xmit > MSB - 1:
            classes.add(ImplClass.NON_UTC)
        if infer_timezone(std.reply, orig, table, policy) is not None:
            classes.add(ImplClass.TIMEZONE)
        if abs(circular_diff(byte_swap_32(recv) % DAY_MS, orig)) < policy.margin_ms:
            classes.add(ImplClass.LITTLE_ENDIAN)

    if std is not None and dup is not None:
        s_recv, s_xmit = std.reply.recv_ts, std.reply.xmit_ts
        d_recv, d_xmit = dup.reply.recv_ts, dup.reply.xmit_ts
        dup_req_value = dup.probe.message.recv_ts
        all_zero = s_recv == s_xmit == d_recv == d_xmit == 0
        if all_zero:
            # An all-zero observation could also be a reflector echoing the
            # zeroed standard request, but zeros carry no positive evidence
            # of copying; the constant interpretation wins (flagged by
            # fingerprint_observation when truly ambiguous).
            classes.add(ImplClass.STUCK)
            classes.add(ImplClass.CONSTANT_0)
        else:
            if s_recv == s_xmit == d_recv == d_xmit and s_recv != dup_req_value:
                classes.add(ImplClass.STUCK)
                if s_recv == 1:
                    classes.add(ImplClass.CONSTANT_1)
                elif s_recv == CONSTANT_LE_ONE:
                    classes.add(ImplClass.CONSTANT_LE_1)
            if (s_recv, s_xmit) == (
                std.probe.message.recv_ts,
                std.probe.message.xmit_ts,
            ) and (d_recv, d_xmit) == (
                dup.probe.message.recv_ts,
                dup.probe.message.xmit_ts,
            ):
                classes.add(ImplClass.REFLECTION)

    if detect_htons_bug(obs):
        classes.add(ImplClass.HTONS_BUG)

    if not classes:
        classes.add(ImplClass.UNKNOWN)
    return classes


def _circular_diff_seconds(a: int, b: int) -> int:
    d = (a - b) % SECONDS_PER_DAY
    return d if d <= SECONDS_PER_DAY // 2 else d - SECONDS_PER_DAY


def classify_timekeeping(
    obs: HostObservation, policy: CorrectnessPolicy
) -> Timekeeping:
    """What unit and reference the responder's clock counts in.

    Compares the elapsed time reported by the standard and duplicate
    replies against the actual gap between the two sends.  A reply-field
    difference within 400 ms of the gap means milliseconds; within 2 s
    (for values that parse as seconds of day) means seconds.  Epoch
    keepers are recognized in two steps: the receive value read as Unix
    epoch seconds must fall on the send date, and its seconds-since-UTC-
    midnight must be within 2 s of the true value.
    """
    std = obs.first_clean(ProbeKind.STANDARD)
    dup = obs.first_clean(ProbeKind.DUPLICATE)
    if std is None or dup is None:
        return Timekeeping.UNKNOWN

    gap_ms = round((dup.probe.send_time - std.probe.send_time).total_seconds() * 1000)
    s_recv, d_recv = std.reply.recv_ts, dup.reply.recv_ts

    reported_ms = circular_diff(d_recv % DAY_MS, s_recv % DAY_MS)
    if abs(reported_ms - gap_ms) < 400:
        return Timekeeping.MILLISECOND

    if s_recv < SECONDS_PER_DAY and d_recv < SECONDS_PER_DAY:
        reported_s = _circular_diff_seconds(d_recv, s_recv)
        if abs(reported_s * 1000 - gap_ms) < 2000:
            return Timekeeping.SECOND

    try:
        as_epoch = datetime.fromtimestamp(s_recv, tz=timezone.utc)
    except (OverflowError, OSError, ValueError):
        as_epoch = None
    if as_epoch is not None:
        send_utc = std.probe.send_time.astimezone(timezone.utc)
        if as_epoch.date() == send_utc.date():
            true_seconds = ms_since_utc_midnight(send_utc) // 1000
            if abs(s_recv % SECONDS_PER_DAY - true_seconds) <= 2:
                return Timekeeping.EPOCH

    return Timekeeping.UNKNOWN


def classify_scanner_request(req: TimestampMessage) -> ScannerKind:
    """Zero-valued originate timestamps are the mark of nmap host discovery."""
    if req.icmp_type != TIMESTAMP_REQUEST:
        raise ValueError(f"not a timestamp request: type {req.icmp_type}")
    if req.orig_ts == 0:
        return ScannerKind.NMAP_LIKE
    return ScannerKind.OTHER_SCANNER


def fingerprint_observation(
    obs: HostObservation,
    policy: CorrectnessPolicy | None = None,
    table: OffsetTable | None = None,
) -> Fingerprint:
    """Full fingerprint for one observation: classes + timekeeping + correctness.

    Flags record soft conditions: missing prerequisite replies, the
    all-zero reflection ambiguity, tampered or duplicate replies.
    """
    if policy is None:
        policy = CorrectnessPolicy()
    if table is None:
        table = OffsetTable()

    classes = classify_implementation(obs, policy, table)
    flags: set[str] = set()

    std = obs.first_clean(ProbeKind.STANDARD)
    dup = obs.first_clean(ProbeKind.DUPLICATE)
    bad_clock = obs.first_clean(ProbeKind.BAD_CLOCK)

    tz_offset: float | None = None
    if std is not None:
        correctness = classify_correctness(std.reply, std.probe.message.orig_ts, policy)
        tz_offset = infer_timezone(std.reply, std.probe.message.orig_ts, table, policy)
    else:
        correctness = Correctness.INCORRECT
        flags.add("no_standard_reply")

    timekeeping = classify_timekeeping(obs, policy)
    if std is None or dup is None:
        flags.add("timekeeping_indeterminate")
    if std is None or bad_clock is None:
        flags.add("htons_indeterminate")

    if std is not None and dup is not None:
        values = (
            std.reply.recv_ts,
            std.reply.xmit_ts,
            dup.reply.recv_ts,
            dup.reply.xmit_ts,
        )
        if all(v == 0 for v in values) and dup.probe.message.recv_ts == 0:
            flags.add("reflection_ambiguous")

    if obs.duplicate_replies:
        flags.add("duplicate_replies")
    if any(p.tamper is not TamperVerdict.CLEAN for p in obs.pairs):
        flags.add("tampered_replies")

    return Fingerprint(
        target=obs.target,
        classes=frozenset(classes),
        timekeeping=timekeeping,
        correctness=correctness,
        tz_offset=tz_offset,
        flags=frozenset(flags),
    )


def merge_fingerprints(a: Fingerprint, b: Fingerprint) -> Fingerprint:
    """Consensus of two vantage points' fingerprints for the same target.

    Classes intersect (a host must exhibit a behavior from both vantages
    to keep it); disagreeing correctness, timekeeping, or timezone
    verdicts are downgraded.  Idempotent and commutative.
    """
    if a.target != b.target:
        raise ValueError(f"fingerprints for different targets: {a.target} vs {b.target}")
    classes = a.classes & b.classes
    if not classes:
        classes = frozenset({ImplClass.UNKNOWN})
    return Fingerprint(
        target=a.target,
        classes=classes,
        timekeeping=a.timekeeping if a.timekeeping == b.timekeeping else Timekeeping.UNKNOWN,
        correctness=a.correctness if a.correctness == b.correctness else Correctness.INCORRECT,
        tz_offset=a.tz_offset if a.tz_offset == b.tz_offset else None,
        flags=a.flags | b.flags,
    )
