"""Aggregation over stored scan results.

Covers the report surfaces: the receive-minus-originate error PMF (whose
hourly peaks expose timezone-relative responders), the timezone-inference
accuracy summary against a ground-truth offset database, inbound-request
scanner analysis, and the two-vantage consensus merge.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from ipaddress import IPv4Address, IPv4Network

from icmpstamp import wire
from icmpstamp.classify import (
    CorrectnessPolicy,
    ScannerKind,
    classify_scanner_request,
    merge_fingerprints,
)
from icmpstamp.clock import DAY_MS, circular_diff, offsets_equal
from icmpstamp.probes import ProbeKind, TamperVerdict
from icmpstamp.results import ResultRecord
from icmpstamp.wire import TimestampMessage


def error_histogram(
    records: list[ResultRecord],
    bin_ms: int,
    exclude_correct: bool = False,
    policy: CorrectnessPolicy | None = None,
) -> list[tuple[int, float]]:
    """PMF of circular(recv - orig) over clean standard-probe replies.

    Returns (bin_start_ms, probability) rows sorted by bin start.  With
    ``exclude_correct`` the replies inside the correctness margin are
    dropped first, which is the convention that makes the hourly
    timezone peaks stand out.
    """
    if bin_ms < 1:
        raise ValueError(f"bin_ms must be positive: {bin_ms}")
    if policy is None:
        policy = CorrectnessPolicy()
    diffs = []
    for rec in records:
        for outcome in rec.outcomes:
            if outcome.probe.kind is not ProbeKind.STANDARD:
                continue
            if outcome.reply is None or outcome.tamper is not TamperVerdict.CLEAN:
                continue
            diff = circular_diff(
                outcome.reply.recv_ts % DAY_MS, outcome.probe.message.orig_ts
            )
            if exclude_correct and abs(diff) < policy.margin_ms:
                continue
            diffs.append(diff)
    if not diffs:
        raise ValueError("no standard-probe replies to bin")
    counts = Counter((d // bin_ms) * bin_ms for d in diffs)
    total = len(diffs)
    return [(start, counts[start] / total) for start in sorted(counts)]


@dataclass(frozen=True)
class TzEntry:
    network: IPv4Network
    std_offset: float
    dst_offset: float | None = None


def load_tz_db(path) -> list[TzEntry]:
    """Ground-truth offsets: ``<cidr> <std_offset> [dst_offset]`` per line."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            try:
                network = IPv4Network(parts[0])
                std = float(parts[1])
                dst = float(parts[2]) if len(parts) > 2 else None
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: bad tz entry: {exc}") from None
            entries.append(TzEntry(network, std, dst))
    return entries


def _lookup_tz(entries: list[TzEntry], addr: str) -> TzEntry | None:
    ip = IPv4Address(addr)
    best = None
    for entry in entries:
        if ip in entry.network:
            if best is None or entry.network.prefixlen > best.network.prefixlen:
                best = entry
    return best


@dataclass
class GeoSummary:
    """Counts of the five inference-vs-database outcomes."""

    match_std_no_dst: int = 0
    match_dst: int = 0
    match_std_with_dst: int = 0
    mismatch: int = 0
    unresolved: int = 0

    @property
    def total(self) -> int:
        return (
            self.match_std_no_dst
            + self.match_dst
            + self.match_std_with_dst
            + self.mismatch
            + self.unresolved
        )

    @property
    def matched(self) -> int:
        return self.match_std_no_dst + self.match_dst + self.match_std_with_dst

    @property
    def accuracy(self) -> float:
        return self.matched / self.total if self.total else 0.0


def geolocate_report(records: list[ResultRecord], tz_db: list[TzEntry]) -> GeoSummary:
    """Compare inferred offsets against the database, host by host.

    A host counts as matched when its inferred offset equals the standard
    offset or, where the zone observes daylight saving, the DST offset.
    """
    summary = GeoSummary()
    for rec in records:
        inferred = rec.fingerprint.tz_offset
        if inferred is None:
            continue
        entry = _lookup_tz(tz_db, rec.target)
        if entry is None:
            summary.unresolved += 1
        elif entry.dst_offset is None:
            if offsets_equal(inferred, entry.std_offset):
                summary.match_std_no_dst += 1
            else:
                summary.mismatch += 1
        elif offsets_equal(inferred, entry.dst_offset):
            summary.match_dst += 1
        elif offsets_equal(inferred, entry.std_offset):
            summary.match_std_with_dst += 1
        else:
            summary.mismatch += 1
    return summary


@dataclass(frozen=True)
class CaptureEntry:
    """One inbound timestamp request seen at a capture point."""

    src: str
    instant: datetime | None
    message: TimestampMessage


def load_capture(path) -> list[CaptureEntry]:
    """Parse a capture file: ``<src_ip> <iso_instant|-> <hex_payload>``."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            try:
                src = str(IPv4Address(parts[0]))
                instant = (
                    None
                    if parts[1] == "-"
                    else datetime.fromisoformat(parts[1].replace("Z", "+00:00"))
                )
                message = wire.decode(bytes.fromhex(parts[2]))
            except (ValueError, IndexError, wire.WireError) as exc:
                raise ValueError(f"{path}:{lineno}: bad capture line: {exc}") from None
            entries.append(CaptureEntry(src, instant, message))
    return entries


@dataclass
class RequestSummary:
    """Scanner portrait of an inbound request capture."""

    total_requests: int = 0
    nmap_like: int = 0
    per_source: Counter = field(default_factory=Counter)
    top_sources: list[tuple[str, int]] = field(default_factory=list)

    @property
    def nmap_fraction(self) -> float:
        return self.nmap_like / self.total_requests if self.total_requests else 0.0


def analyze_requests(entries: list[CaptureEntry], top_n: int = 10) -> RequestSummary:
    """Count requesters and how many bear the zero-originate scanner mark."""
    summary = RequestSummary()
    for entry in entries:
        if entry.message.icmp_type != wire.TIMESTAMP_REQUEST:
            continue
        summary.total_requests += 1
        summary.per_source[entry.src] += 1
        if classify_scanner_request(entry.message) is ScannerKind.NMAP_LIKE:
            summary.nmap_like += 1
    summary.top_sources = summary.per_source.most_common(top_n)
    return summary


def merge_records(
    records_a: list[ResultRecord], records_b: list[ResultRecord]
) -> list[ResultRecord]:
    """Two-vantage consensus: targets seen by both, fingerprints intersected.

    Output order follows the first file.  Merged records carry the joined
    vantage label and no probe detail of their own (the inputs keep it).
    """
    by_target_b = {rec.target: rec for rec in records_b}
    merged = []
    for rec_a in records_a:
        rec_b = by_target_b.get(rec_a.target)
        if rec_b is None:
            continue
        fp = merge_fingerprints(rec_a.fingerprint, rec_b.fingerprint)
        vantage = f"{rec_a.vantage}+{rec_b.vantage}"
        merged.append(
            ResultRecord(
                target=rec_a.target,
                vantage=vantage,
                outcomes=(),
                fingerprint=fp,
                duplicate_replies=rec_a.duplicate_replies + rec_b.duplicate_replies,
            )
        )
    return merged
