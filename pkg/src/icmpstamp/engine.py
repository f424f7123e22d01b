"""Scan orchestration: target ingestion, pacing, reply matching, emission.

The engine sends two rounds per target: the standard, bad-clock, and
bad-checksum requests first, then (after a configurable gap so elapsed
time is measurable) the duplicate-timestamp request.  The global send
order inside each round is a seeded pseudo-random permutation so probes
spread across networks in time.

One logical sender and one logical receiver interleave on the transport:
between rate-limited sends the engine drains arriving replies, matching
each to the earliest unanswered probe with the same (source, id, seq).
Replies that match no outstanding probe are logged, never bound.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass
from datetime import datetime, timedelta
from ipaddress import IPv4Address

from icmpstamp import wire
from icmpstamp.classify import (
    Correctness,
    CorrectnessPolicy,
    Fingerprint,
    HostObservation,
    ImplClass,
    NoCleanReplies,
    ObservedPair,
    Timekeeping,
    fingerprint_observation,
)
from icmpstamp.clock import OffsetTable
from icmpstamp.probes import (
    ProbeKind,
    ProbeRecord,
    make_bad_checksum,
    make_bad_clock,
    make_duplicate,
    make_standard,
    verify_reply,
)
from icmpstamp.responder import SimNetwork
from icmpstamp.results import ProbeOutcome, ResultRecord
from icmpstamp.transport import RawTransport, TransportError

log = logging.getLogger(__name__)

ALL_PROBE_KINDS = (
    ProbeKind.STANDARD,
    ProbeKind.BAD_CLOCK,
    ProbeKind.BAD_CHECKSUM,
    ProbeKind.DUPLICATE,
)

_ROUND_ONE_ORDER = (ProbeKind.STANDARD, ProbeKind.BAD_CLOCK, ProbeKind.BAD_CHECKSUM)


@dataclass(frozen=True)
class ScanConfig:
    """Everything a scan run needs; the transport is supplied separately."""

    targets_path: str
    output_path: str | None = None
    probe_kinds: tuple[ProbeKind, ...] = ALL_PROBE_KINDS
    inter_round_gap_ms: int = 3000
    rate_pps: int = 100
    timeout_ms: int = 5000
    seed: int = 0
    vantage: str = ""

    def __post_init__(self):
        if self.rate_pps < 1:
            raise ValueError(f"rate_pps must be >= 1: {self.rate_pps}")
        if self.inter_round_gap_ms < 1000:
            raise ValueError(
                f"inter_round_gap_ms must be >= 1000 so elapsed time is "
                f"measurable: {self.inter_round_gap_ms}"
            )
        if self.timeout_ms <= 0:
            raise ValueError(f"timeout_ms must be positive: {self.timeout_ms}")
        if not self.probe_kinds:
            raise ValueError("probe_kinds must not be empty")
        for kind in self.probe_kinds:
            if kind not in ALL_PROBE_KINDS:
                raise ValueError(f"unknown probe kind: {kind}")


def load_targets(path) -> list[str]:
    """One IPv4 address per non-empty, non-comment line; duplicates dropped."""
    targets: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                addr = str(IPv4Address(text))
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: not an IPv4 address: {text!r}"
                ) from None
            if addr not in seen:
                seen.add(addr)
                targets.append(addr)
    return targets


class RateLimiter:
    """Spaces sends so no 1-second window ever holds more than rate_pps."""

    def __init__(self, rate_pps: int, start: datetime):
        self._interval_us = math.ceil(1_000_000 / rate_pps)
        self._next_at = start

    def next_slot(self) -> datetime:
        return self._next_at

    def mark_sent(self, sent_at: datetime) -> None:
        base = max(self._next_at, sent_at)
        self._next_at = base + timedelta(microseconds=self._interval_us)


class _TargetState:
    __slots__ = ("outcomes", "round_one_anchor", "last_send", "duplicate_replies")

    def __init__(self):
        self.outcomes: list[_PendingProbe] = []
        self.round_one_anchor: datetime | None = None
        self.last_send: datetime | None = None
        self.duplicate_replies = 0


class _PendingProbe:
    __slots__ = ("probe", "reply", "arrival", "tamper")

    def __init__(self, probe: ProbeRecord):
        self.probe = probe
        self.reply = None
        self.arrival = None
        self.tamper = None

    @property
    def answered(self) -> bool:
        return self.reply is not None


def make_transport(spec: str):
    """Build a transport from its CLI spelling: ``raw`` or ``sim:<fixture>``."""
    if spec == "raw":
        return RawTransport()
    if spec.startswith("sim:"):
        return SimNetwork.from_file(spec[4:])
    raise ValueError(f"unknown transport {spec!r}; use 'raw' or 'sim:<fixture path>'")


def run_scan(
    cfg: ScanConfig,
    transport,
    policy: CorrectnessPolicy | None = None,
    table: OffsetTable | None = None,
):
    """Execute a scan; yields one ResultRecord per responsive target.

    On transport failure the records gathered so far are still yielded, a
    resume marker listing never-probed targets is written next to the
    output path, and TransportError is raised after the final record.
    """
    targets = load_targets(cfg.targets_path)
    rng = random.Random(cfg.seed)

    round_one_kinds = [k for k in _ROUND_ONE_ORDER if k in cfg.probe_kinds]
    round_one = [(t, k) for t in targets for k in round_one_kinds]
    rng.shuffle(round_one)

    send_duplicates = ProbeKind.DUPLICATE in cfg.probe_kinds
    if send_duplicates:
        if round_one:
            round_two = list(dict.fromkeys(t for t, _ in round_one))
        else:
            round_two = list(targets)
            rng.shuffle(round_two)
    else:
        round_two = []

    state: dict[str, _TargetState] = {t: _TargetState() for t in targets}
    outstanding: dict[tuple[str, int, int], list[_PendingProbe]] = {}
    unmatched = 0
    sent_count = 0

    def register(pending: _PendingProbe) -> None:
        msg = pending.probe.message
        key = (pending.probe.dest, msg.ident, msg.seq)
        outstanding.setdefault(key, []).append(pending)

    def bind(pending: _PendingProbe, reply, arrival, src) -> None:
        pending.reply = reply
        pending.arrival = arrival
        pending.tamper = verify_reply(pending.probe, reply, src)

    def handle(src: str, data: bytes, arrival: datetime) -> None:
        nonlocal unmatched
        try:
            msg = wire.decode(data)
        except wire.WireError:
            unmatched += 1
            log.info("undecodable packet from %s", src)
            return
        if msg.icmp_type != wire.TIMESTAMP_REPLY:
            return
        if not wire.verify_checksum(data):
            unmatched += 1
            log.info("reply with bad checksum from %s", src)
            return
        queue = outstanding.get((src, msg.ident, msg.seq))
        if queue is not None:
            pending = next((p for p in queue if not p.answered), None)
            if pending is None:
                # Every probe with this key already holds a reply.
                if src in state:
                    state[src].duplicate_replies += 1
                else:
                    unmatched += 1
                return
            bind(pending, msg, arrival, src)
            return
        # No (source, id, seq) match: fall back to the originate timestamp
        # so replies whose id/seq were rewritten in flight are still
        # observed (they classify as tampered, never as clean).
        fallback = [
            p
            for plist in outstanding.values()
            for p in plist
            if not p.answered
            and p.probe.dest == src
            and p.probe.message.orig_ts == msg.orig_ts
        ]
        pending = min(fallback, key=lambda p: p.probe.send_time, default=None)
        if pending is None:
            unmatched += 1
            log.info("unmatched reply from %s (id=%d seq=%d)", src, msg.ident, msg.seq)
            return
        bind(pending, msg, arrival, src)

    def pump_until(deadline: datetime) -> None:
        while transport.now() < deadline:
            remaining = deadline - transport.now()
            wait_ms = max(1, math.ceil(remaining.total_seconds() * 1000))
            item = transport.receive(wait_ms)
            if item is not None:
                handle(*item)

    def build_probe(kind: ProbeKind, dest: str, now: datetime) -> ProbeRecord:
        if kind is ProbeKind.STANDARD:
            return make_standard(dest, now)
        if kind is ProbeKind.BAD_CLOCK:
            return make_bad_clock(dest, rng.getrandbits(16), rng.getrandbits(16), now)
        if kind is ProbeKind.BAD_CHECKSUM:
            return make_bad_checksum(dest, now, rng)
        return make_duplicate(dest, now)

    limiter = RateLimiter(cfg.rate_pps, transport.now())
    last_send: datetime | None = None
    aborted: TransportError | None = None
    probed: set[str] = set()

    def dispatch(dest: str, kind: ProbeKind) -> None:
        nonlocal last_send, sent_count
        now = transport.now()
        probe = build_probe(kind, dest, now)
        pending = _PendingProbe(probe)
        transport.send(dest, wire.encode(probe.message))
        sent_count += 1
        register(pending)
        st = state[dest]
        st.outcomes.append(pending)
        st.last_send = now
        # The duplicate round is anchored on the standard probe when one was
        # sent, else on the target's first round-one probe.
        if kind is ProbeKind.STANDARD or (
            kind in _ROUND_ONE_ORDER and st.round_one_anchor is None
        ):
            st.round_one_anchor = now
        last_send = now
        probed.add(dest)
        limiter.mark_sent(now)

    try:
        for dest, kind in round_one:
            slot = limiter.next_slot()
            pump_until(slot)
            transport.sleep_until(slot)
            dispatch(dest, kind)

        gap = timedelta(milliseconds=cfg.inter_round_gap_ms)
        for dest in round_two:
            slot = limiter.next_slot()
            anchor = state[dest].round_one_anchor
            if anchor is not None and anchor + gap > slot:
                slot = anchor + gap
            pump_until(slot)
            transport.sleep_until(slot)
            dispatch(dest, ProbeKind.DUPLICATE)

        if last_send is not None:
            pump_until(last_send + timedelta(milliseconds=cfg.timeout_ms))
    except (TransportError, OSError) as exc:
        aborted = exc if isinstance(exc, TransportError) else TransportError(str(exc))
        _write_resume_marker(cfg, [t for t in targets if t not in probed])
        log.error("scan aborted: %s", exc)

    log.info("sent %d probes; discarded %d unmatched or malformed replies",
             sent_count, unmatched)

    for target in targets:
        st = state[target]
        if not any(p.answered for p in st.outcomes):
            continue
        pairs = [
            ObservedPair(p.probe, p.reply, p.arrival, p.tamper)
            for p in st.outcomes
            if p.answered
        ]
        obs = HostObservation(
            target=target,
            pairs=pairs,
            vantage=cfg.vantage,
            duplicate_replies=st.duplicate_replies,
        )
        try:
            fp = fingerprint_observation(obs, policy, table)
        except NoCleanReplies:
            fp = Fingerprint(
                target=target,
                classes=frozenset({ImplClass.UNKNOWN}),
                timekeeping=Timekeeping.UNKNOWN,
                correctness=Correctness.INCORRECT,
                tz_offset=None,
                flags=frozenset({"all_replies_tampered"}),
            )
        yield ResultRecord(
            target=target,
            vantage=cfg.vantage,
            outcomes=tuple(
                ProbeOutcome(p.probe, p.reply, p.arrival, p.tamper)
                for p in st.outcomes
            ),
            fingerprint=fp,
            duplicate_replies=st.duplicate_replies,
        )

    if aborted is not None:
        raise aborted


def _write_resume_marker(cfg: ScanConfig, remaining: list[str]) -> None:
    if cfg.output_path is None:
        return
    marker = str(cfg.output_path) + ".resume"
    with open(marker, "w", encoding="utf-8") as fh:
        fh.write("# targets never probed before the transport failure;\n")
        fh.write("# feed this file back via --targets to resume.\n")
        for target in remaining:
            fh.write(target + "\n")
    log.info("wrote resume marker %s (%d targets)", marker, len(remaining))
