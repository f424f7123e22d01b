"""Simulated timestamp responders and an in-memory network.

Each fake host is described by a BehaviorConfig naming one implementation
class plus clock options (offset from true time, units, byte order, MSB
flag, truncation bug) and delivery options (latency, jitter, loss).  The
simulator operates on encoded bytes, not decoded structures, so checksum
handling is exercised the same way a real responder would.

SimNetwork glues configured hosts to a virtual clock and satisfies the
scan engine's transport contract: ``send`` enqueues, ``receive`` yields
``(src, bytes, arrival)`` after modeled latency, and everything is
deterministic under a fixed seed.
"""

from __future__ import annotations

import heapq
import itertools
import random
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from ipaddress import IPv4Address

from icmpstamp import wire
from icmpstamp.classify import CONSTANT_LE_ONE, MSB, ImplClass
from icmpstamp.clock import ms_since_utc_midnight, offset_millis
from icmpstamp.wire import TIMESTAMP_REPLY, TIMESTAMP_REQUEST, TimestampMessage

DEFAULT_START = datetime(2018, 10, 6, 12, 0, 0, tzinfo=timezone.utc)
DEFAULT_STUCK_VALUE = 123_456

_TAMPER_MODES = (None, "orig_ts", "id_seq", "source")

# Classes that answer with a single clock lookup copied into both fields.
_SINGLE_LOOKUP = {
    ImplClass.LAZY,
    ImplClass.CHECKSUM_LAZY,
    ImplClass.NON_UTC,
    ImplClass.TIMEZONE,
    ImplClass.LITTLE_ENDIAN,
    ImplClass.HTONS_BUG,
}

_STUCK_FAMILY = {
    ImplClass.STUCK,
    ImplClass.CONSTANT_0,
    ImplClass.CONSTANT_1,
    ImplClass.CONSTANT_LE_1,
}


@dataclass(frozen=True)
class BehaviorConfig:
    """Recipe for how one simulated host answers timestamp requests."""

    impl_class: ImplClass = ImplClass.LAZY
    tz_offset_hours: float | None = None
    units: str = "ms"  # ms | s | epoch
    clock_error_ms: int = 0
    latency_ms: int = 0
    jitter_ms: int = 0
    loss_rate: float = 0.0
    respond_to_bad_checksum: bool = False
    byte_order: str = "big"  # big | little
    msb_set: bool = False
    stuck_value: int | None = None
    truncate_htons: bool = False
    tamper: str | None = None

    def __post_init__(self):
        if self.units not in ("ms", "s", "epoch"):
            raise ValueError(f"units must be ms, s, or epoch: {self.units}")
        if self.byte_order not in ("big", "little"):
            raise ValueError(f"byte_order must be big or little: {self.byte_order}")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ValueError(f"loss_rate outside [0, 1]: {self.loss_rate}")
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")
        if self.tamper not in _TAMPER_MODES:
            raise ValueError(f"tamper must be one of {_TAMPER_MODES}: {self.tamper}")
        if self.tz_offset_hours is not None:
            offset_millis(self.tz_offset_hours)  # validates the half-hour grid

        cls = self.impl_class
        if cls is ImplClass.TIMEZONE and self.tz_offset_hours is None:
            raise ValueError("timezone behavior needs tz_offset_hours")
        forced_constant = {
            ImplClass.CONSTANT_0: 0,
            ImplClass.CONSTANT_1: 1,
            ImplClass.CONSTANT_LE_1: CONSTANT_LE_ONE,
        }.get(cls)
        if forced_constant is not None:
            if self.stuck_value not in (None, forced_constant):
                raise ValueError(
                    f"{cls.value} forces stuck_value={forced_constant}, got {self.stuck_value}"
                )
            object.__setattr__(self, "stuck_value", forced_constant)
        elif cls is ImplClass.STUCK and self.stuck_value is None:
            object.__setattr__(self, "stuck_value", DEFAULT_STUCK_VALUE)
        if cls is ImplClass.CHECKSUM_LAZY:
            object.__setattr__(self, "respond_to_bad_checksum", True)
        if cls is ImplClass.NON_UTC:
            object.__setattr__(self, "msb_set", True)
        if cls is ImplClass.LITTLE_ENDIAN:
            object.__setattr__(self, "byte_order", "little")
        if cls is ImplClass.HTONS_BUG:
            object.__setattr__(self, "truncate_htons", True)


def _clock_value(cfg: BehaviorConfig, instant: datetime) -> int:
    """The host clock reading in the configured units, offsets applied."""
    local = instant + timedelta(milliseconds=cfg.clock_error_ms)
    if cfg.tz_offset_hours is not None:
        local += timedelta(milliseconds=offset_millis(cfg.tz_offset_hours))
    if cfg.units == "ms":
        return ms_since_utc_midnight(local)
    if cfg.units == "s":
        return ms_since_utc_midnight(local) // 1000
    return int(local.timestamp())  # epoch seconds


def _htons_truncate(value: int) -> int:
    # The buggy path squeezes the timestamp through a 16-bit byte swap and
    # stores the result in the high half of the field: the low two bytes of
    # the wire value are always zero.
    return ((value & 0xFF) << 24) | (((value >> 8) & 0xFF) << 16)


def _shape(cfg: BehaviorConfig, value: int) -> int:
    """Apply truncation, MSB flag, and byte order to a clock reading."""
    if cfg.truncate_htons:
        value = _htons_truncate(value)
    if cfg.msb_set:
        value |= MSB
    if cfg.byte_order == "little":
        value = wire.byte_swap_32(value)
    return value & 0xFFFFFFFF


def _unresolvable_value(clock_value: int) -> int:
    # Deterministic junk for the "unknown" class: spread by a Knuth
    # multiplicative hash, MSB kept clear, low 16 bits kept nonzero so no
    # other fingerprint rule can fire.
    v = (clock_value * 2654435761) & 0x7FFFFFFF
    if v & 0xFFFF == 0:
        v |= 1
    return v


def respond(
    cfg: BehaviorConfig,
    request_bytes,
    now: datetime,
    rng: random.Random,
) -> bytes | None:
    """Answer one encoded timestamp request, or stay silent.

    Returns None on modeled loss, on malformed input, and on checksum
    failure unless the host is checksum-lazy.  Otherwise builds the
    type-14 reply: originate/id/seq copied from the request, receive and
    transmit filled per the configured class, checksum recomputed.
    """
    if cfg.loss_rate and rng.random() < cfg.loss_rate:
        return None
    try:
        req = wire.decode(request_bytes)
    except wire.WireError:
        return None
    if req.icmp_type != TIMESTAMP_REQUEST:
        return None
    if not wire.verify_checksum(request_bytes) and not cfg.respond_to_bad_checksum:
        return None

    cls = cfg.impl_class
    if cls is ImplClass.REFLECTION:
        recv, xmit = req.recv_ts, req.xmit_ts
    elif cls in _STUCK_FAMILY:
        recv = xmit = cfg.stuck_value
    elif cls is ImplClass.NORMAL:
        # Two lookups separated by 1-5 ms of processing time.
        recv = _shape(cfg, _clock_value(cfg, now))
        processing = rng.randint(1, 5)
        xmit = _shape(cfg, _clock_value(cfg, now + timedelta(milliseconds=processing)))
    elif cls is ImplClass.UNKNOWN:
        recv = 0
        xmit = _unresolvable_value(_clock_value(cfg, now))
    elif cls in _SINGLE_LOOKUP:
        recv = xmit = _shape(cfg, _clock_value(cfg, now))
    else:
        raise AssertionError(f"unhandled behavior class: {cls}")

    ident, seq, orig = req.ident, req.seq, req.orig_ts
    if cfg.tamper == "orig_ts":
        orig = (orig + 1) & 0xFFFFFFFF
    elif cfg.tamper == "id_seq":
        ident ^= 0x0001

    reply = TimestampMessage(
        TIMESTAMP_REPLY,
        ident=ident,
        seq=seq,
        orig_ts=orig,
        recv_ts=recv,
        xmit_ts=xmit,
    )
    return wire.encode(wire.fill_checksum(reply))


def _tampered_source(dest: str) -> str:
    return str(IPv4Address(int(IPv4Address(dest)) ^ 1))


class SimNetwork:
    """In-memory network of configured hosts with a virtual clock.

    Satisfies the engine's transport contract.  ``send`` runs the
    destination's responder immediately (evaluating its clock at the
    request's arrival instant) and schedules the reply; ``receive``
    advances the virtual clock as needed.  Unknown destinations drop
    silently, like unresponsive hosts.
    """

    def __init__(
        self,
        hosts: dict[str, BehaviorConfig],
        *,
        latency_ms: int = 0,
        jitter_ms: int = 0,
        loss_rate: float = 0.0,
        seed: int = 0,
        start: datetime | None = None,
    ):
        self._hosts = dict(hosts)
        self._latency_ms = latency_ms
        self._jitter_ms = jitter_ms
        self._loss_rate = loss_rate
        self._rng = random.Random(seed)
        self._now = start if start is not None else DEFAULT_START
        self._queue: list[tuple[datetime, int, str, bytes]] = []
        self._counter = itertools.count()
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path, **overrides) -> "SimNetwork":
        hosts, params = load_behavior_file(path)
        params.update(overrides)
        return cls(hosts, **params)

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def sleep_until(self, instant: datetime) -> None:
        with self._lock:
            if instant > self._now:
                self._now = instant

    def send(self, dest: str, data: bytes) -> None:
        with self._lock:
            cfg = self._hosts.get(dest)
            if cfg is None:
                return
            if self._loss_rate and self._rng.random() < self._loss_rate:
                return
            total_fixed = self._latency_ms + cfg.latency_ms
            total_jitter = self._jitter_ms + cfg.jitter_ms
            rtt_ms = total_fixed + (self._rng.randint(0, total_jitter) if total_jitter else 0)
            host_time = self._now + timedelta(milliseconds=rtt_ms // 2)
            reply = respond(cfg, data, host_time, self._rng)
            if reply is None:
                return
            src = _tampered_source(dest) if cfg.tamper == "source" else dest
            arrival = self._now + timedelta(milliseconds=rtt_ms)
            heapq.heappush(self._queue, (arrival, next(self._counter), src, reply))

    def receive(self, max_wait_ms: int) -> tuple[str, bytes, datetime] | None:
        """Next queued reply within ``max_wait_ms``, advancing the clock.

        Returns (source, bytes, arrival instant) or None if nothing arrives
        in the window; in that case the clock still advances by the full
        window, mirroring a blocking socket timeout.
        """
        with self._lock:
            deadline = self._now + timedelta(milliseconds=max_wait_ms)
            if self._queue and self._queue[0][0] <= deadline:
                arrival, _, src, data = heapq.heappop(self._queue)
                if arrival > self._now:
                    self._now = arrival
                return src, data, arrival
            self._now = deadline
            return None

    def close(self) -> None:
        pass


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


_HOST_KEYS = {
    "tz": ("tz_offset_hours", float),
    "units": ("units", str),
    "clock_error": ("clock_error_ms", int),
    "latency": ("latency_ms", int),
    "jitter": ("jitter_ms", int),
    "loss": ("loss_rate", float),
    "value": ("stuck_value", lambda s: int(s, 0)),
    "bad_checksum": ("respond_to_bad_checksum", _parse_bool),
    "byte_order": ("byte_order", str),
    "msb": ("msb_set", _parse_bool),
    "truncate": ("truncate_htons", _parse_bool),
    "tamper": ("tamper", str),
}

_NETWORK_KEYS = {
    "latency": ("latency_ms", int),
    "jitter": ("jitter_ms", int),
    "loss": ("loss_rate", float),
    "seed": ("seed", int),
    "start": ("start", lambda s: datetime.fromisoformat(s.replace("Z", "+00:00"))),
}


def load_behavior_file(path) -> tuple[dict[str, BehaviorConfig], dict]:
    """Parse a declarative host-behavior fixture.

    One host per line: ``<ipv4> <class> [key=value ...]``.  A line starting
    with ``@network`` sets global delivery parameters (latency, jitter,
    loss, seed, start).  ``#`` begins a comment.
    """
    hosts: dict[str, BehaviorConfig] = {}
    params: dict = {}
    class_by_name = {c.value: c for c in ImplClass}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            tokens = text.split()
            try:
                if tokens[0] == "@network":
                    for token in tokens[1:]:
                        key, _, value = token.partition("=")
                        dest_name, conv = _NETWORK_KEYS[key]
                        params[dest_name] = conv(value)
                    continue
                addr = str(IPv4Address(tokens[0]))
                impl = class_by_name[tokens[1]]
                kwargs: dict = {"impl_class": impl}
                for token in tokens[2:]:
                    key, _, value = token.partition("=")
                    field_name, conv = _HOST_KEYS[key]
                    kwargs[field_name] = conv(value)
                if addr in hosts:
                    raise ValueError(f"duplicate host {addr}")
                hosts[addr] = BehaviorConfig(**kwargs)
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: unknown key {exc}") from None
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return hosts, params
