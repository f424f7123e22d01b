"""Raw-socket transport for live scans.

Transport contract (shared with responder.SimNetwork):

* ``now()`` -> aware datetime
* ``send(dest, payload)`` -> None, payload is the bare ICMP message
* ``receive(max_wait_ms)`` -> (src, icmp_bytes, arrival) or None
* ``sleep_until(instant)`` -> None
* ``close()``

The raw transport needs CAP_NET_RAW (or root); constructing one without
privilege raises PrivilegeError so callers can map it to a distinct exit
code.  The kernel prepends the IP header on receive, so inbound packets
are stripped before they reach the wire codec.
"""

from __future__ import annotations

import socket
import time
from datetime import datetime, timezone


class TransportError(RuntimeError):
    """Transport failed to send or receive."""


class PrivilegeError(TransportError):
    """Raw sockets need elevated privilege."""


def strip_ip_header(packet: bytes) -> bytes:
    """Return the payload of a raw IPv4 datagram (the ICMP message)."""
    if len(packet) < 20:
        raise ValueError(f"short IP packet: {len(packet)} bytes")
    version = packet[0] >> 4
    header_len = (packet[0] & 0x0F) * 4
    if version != 4 or header_len < 20 or len(packet) < header_len:
        raise ValueError("not a well-formed IPv4 packet")
    return packet[header_len:]


class RawTransport:
    """Sends ICMP payloads over a raw socket; receives and strips IP headers."""

    def __init__(self):
        try:
            self._sock = socket.socket(
                socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_ICMP
            )
        except PermissionError as exc:
            raise PrivilegeError(
                "raw ICMP sockets require root or CAP_NET_RAW"
            ) from exc
        except OSError as exc:
            raise TransportError(f"cannot open raw socket: {exc}") from exc

    def now(self) -> datetime:
        return datetime.now(timezone.utc)

    def sleep_until(self, instant: datetime) -> None:
        delay = (instant - self.now()).total_seconds()
        if delay > 0:
            time.sleep(delay)

    def send(self, dest: str, payload: bytes) -> None:
        try:
            self._sock.sendto(payload, (dest, 0))
        except OSError as exc:
            raise TransportError(f"send to {dest} failed: {exc}") from exc

    def receive(self, max_wait_ms: int) -> tuple[str, bytes, datetime] | None:
        self._sock.settimeout(max(max_wait_ms, 1) / 1000.0)
        try:
            packet, addr = self._sock.recvfrom(65535)
        except (TimeoutError, BlockingIOError):
            return None
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        arrival = self.now()
        try:
            payload = strip_ip_header(packet)
        except ValueError:
            return None
        return addr[0], payload, arrival

    def close(self) -> None:
        self._sock.close()
