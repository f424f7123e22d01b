"""Simulated responder behavior and the in-memory network."""

import random
from datetime import timedelta

import pytest

from builders import at_ms
from icmpstamp import wire
from icmpstamp.classify import ImplClass
from icmpstamp.probes import make_standard
from icmpstamp.responder import (
    DEFAULT_STUCK_VALUE,
    BehaviorConfig,
    SimNetwork,
    load_behavior_file,
    respond,
)
from icmpstamp.wire import TimestampMessage, byte_swap_32

NOON_ISH = at_ms(45_296_789)  # 12:34:56.789Z
DEST = "203.0.113.5"


def request_bytes(dest=DEST, now=NOON_ISH):
    return wire.encode(make_standard(dest, now).message)


def answer(cfg, req=None, now=NOON_ISH, seed=9):
    raw = respond(cfg, req or request_bytes(), now, random.Random(seed))
    assert raw is not None
    return wire.decode(raw)


class TestBehaviorConfig:
    def test_constant_zero_forces_stuck_value(self):
        assert BehaviorConfig(ImplClass.CONSTANT_0).stuck_value == 0

    def test_constant_zero_conflicting_value_rejected(self):
        with pytest.raises(ValueError):
            BehaviorConfig(ImplClass.CONSTANT_0, stuck_value=5)

    def test_constant_le_one_value(self):
        assert BehaviorConfig(ImplClass.CONSTANT_LE_1).stuck_value == byte_swap_32(1)

    def test_stuck_gets_default_constant(self):
        assert BehaviorConfig(ImplClass.STUCK).stuck_value == DEFAULT_STUCK_VALUE

    def test_checksum_lazy_forced_to_answer_bad_checksums(self):
        assert BehaviorConfig(ImplClass.CHECKSUM_LAZY).respond_to_bad_checksum

    def test_timezone_requires_offset(self):
        with pytest.raises(ValueError):
            BehaviorConfig(ImplClass.TIMEZONE)

    def test_quarter_hour_offset_rejected(self):
        with pytest.raises(ValueError):
            BehaviorConfig(ImplClass.TIMEZONE, tz_offset_hours=5.75)

    def test_non_utc_forces_msb(self):
        assert BehaviorConfig(ImplClass.NON_UTC).msb_set

    def test_little_endian_forces_byte_order(self):
        assert BehaviorConfig(ImplClass.LITTLE_ENDIAN).byte_order == "little"

    def test_htons_forces_truncation(self):
        assert BehaviorConfig(ImplClass.HTONS_BUG).truncate_htons

    def test_bad_units_rejected(self):
        with pytest.raises(ValueError):
            BehaviorConfig(units="minutes")

    def test_bad_loss_rejected(self):
        with pytest.raises(ValueError):
            BehaviorConfig(loss_rate=1.5)

    def test_bad_tamper_rejected(self):
        with pytest.raises(ValueError):
            BehaviorConfig(tamper="payload")


class TestRespond:
    def test_lazy_single_lookup(self):
        reply = answer(BehaviorConfig(ImplClass.LAZY))
        assert reply.recv_ts == reply.xmit_ts == 45_296_789

    def test_reply_copies_orig_id_seq(self):
        req = make_standard(DEST, NOON_ISH).message
        reply = answer(BehaviorConfig(ImplClass.LAZY))
        assert reply.icmp_type == 14
        assert (reply.ident, reply.seq, reply.orig_ts) == (req.ident, req.seq, req.orig_ts)

    def test_reply_checksum_valid(self):
        raw = respond(BehaviorConfig(ImplClass.LAZY), request_bytes(), NOON_ISH, random.Random(1))
        assert wire.verify_checksum(raw)

    def test_reflection(self):
        req = wire.fill_checksum(
            TimestampMessage(13, ident=1, seq=2, orig_ts=3, recv_ts=7, xmit_ts=9)
        )
        reply = answer(BehaviorConfig(ImplClass.REFLECTION), wire.encode(req))
        assert (reply.recv_ts, reply.xmit_ts) == (7, 9)

    def test_lazy_timezone_plus_nine(self):
        reply = answer(BehaviorConfig(ImplClass.TIMEZONE, tz_offset_hours=9))
        assert reply.recv_ts == reply.xmit_ts == 77_696_789

    def test_clock_error_applied(self):
        reply = answer(BehaviorConfig(ImplClass.LAZY, clock_error_ms=-250))
        assert reply.recv_ts == 45_296_789 - 250

    def test_normal_two_lookups(self):
        reply = answer(BehaviorConfig(ImplClass.NORMAL))
        assert reply.recv_ts == 45_296_789
        assert 1 <= reply.xmit_ts - reply.recv_ts <= 5

    def test_stuck_constant(self):
        reply = answer(BehaviorConfig(ImplClass.STUCK, stuck_value=99))
        assert reply.recv_ts == reply.xmit_ts == 99

    def test_msb_set(self):
        reply = answer(BehaviorConfig(ImplClass.NON_UTC))
        assert reply.recv_ts == (45_296_789 | 2**31)

    def test_little_endian_byte_order(self):
        reply = answer(BehaviorConfig(ImplClass.LITTLE_ENDIAN))
        assert reply.recv_ts == byte_swap_32(45_296_789)

    def test_htons_truncation_zeroes_low_bytes(self):
        reply = answer(BehaviorConfig(ImplClass.HTONS_BUG))
        assert reply.recv_ts % 65536 == 0
        assert reply.recv_ts != 0
        later = answer(BehaviorConfig(ImplClass.HTONS_BUG), now=NOON_ISH + timedelta(seconds=3))
        assert later.recv_ts != reply.recv_ts  # varies with the clock

    def test_seconds_units(self):
        reply = answer(BehaviorConfig(ImplClass.LAZY, units="s"))
        assert reply.recv_ts == 45_296_789 // 1000

    def test_epoch_units(self):
        reply = answer(BehaviorConfig(ImplClass.LAZY, units="epoch"))
        assert reply.recv_ts == int(NOON_ISH.timestamp())

    def test_unknown_fields_resolve_to_nothing(self):
        reply = answer(BehaviorConfig(ImplClass.UNKNOWN))
        assert reply.recv_ts == 0
        assert reply.xmit_ts != 0
        assert reply.xmit_ts % 65536 != 0
        assert reply.xmit_ts < 2**31

    def test_bad_checksum_dropped_by_default(self):
        req = bytearray(request_bytes())
        req[2] ^= 0xFF  # corrupt the checksum
        assert respond(BehaviorConfig(ImplClass.LAZY), bytes(req), NOON_ISH, random.Random(1)) is None

    def test_checksum_lazy_answers_bad_checksum(self):
        req = bytearray(request_bytes())
        req[2] ^= 0xFF
        raw = respond(BehaviorConfig(ImplClass.CHECKSUM_LAZY), bytes(req), NOON_ISH, random.Random(1))
        assert raw is not None

    def test_total_loss(self):
        assert respond(BehaviorConfig(loss_rate=1.0), request_bytes(), NOON_ISH, random.Random(1)) is None

    def test_malformed_request_ignored(self):
        assert respond(BehaviorConfig(), b"\x0d\x00\x00", NOON_ISH, random.Random(1)) is None

    def test_reply_input_ignored(self):
        reply_in = wire.encode(wire.fill_checksum(TimestampMessage(14)))
        assert respond(BehaviorConfig(), reply_in, NOON_ISH, random.Random(1)) is None

    def test_orig_tamper(self):
        req = make_standard(DEST, NOON_ISH).message
        reply = answer(BehaviorConfig(ImplClass.LAZY, tamper="orig_ts"))
        assert reply.orig_ts == req.orig_ts + 1

    def test_id_tamper(self):
        req = make_standard(DEST, NOON_ISH).message
        reply = answer(BehaviorConfig(ImplClass.LAZY, tamper="id_seq"))
        assert reply.ident == req.ident ^ 1


class TestSimNetwork:
    def host(self, **kw):
        return {DEST: BehaviorConfig(**kw)}

    def test_unknown_destination_drops(self):
        net = SimNetwork(self.host(), start=NOON_ISH)
        net.send("198.51.100.99", request_bytes("198.51.100.99"))
        assert net.receive(1000) is None

    def test_round_trip(self):
        net = SimNetwork(self.host(), latency_ms=10, start=NOON_ISH)
        net.send(DEST, request_bytes())
        src, data, arrival = net.receive(1000)
        assert src == DEST
        assert wire.decode(data).icmp_type == 14
        assert arrival == NOON_ISH + timedelta(milliseconds=10)

    def test_latency_bounds(self):
        net = SimNetwork(self.host(latency_ms=5, jitter_ms=7), latency_ms=10, jitter_ms=3, seed=2,
                         start=NOON_ISH)
        for _ in range(50):
            sent_at = net.now()
            net.send(DEST, request_bytes(now=sent_at))
            _, _, arrival = net.receive(10_000)
            delta = (arrival - sent_at).total_seconds() * 1000
            assert 15 <= delta <= 25

    def test_total_loss_yields_nothing(self):
        net = SimNetwork(self.host(), loss_rate=1.0, start=NOON_ISH)
        for _ in range(20):
            net.send(DEST, request_bytes())
        assert net.receive(1000) is None

    def test_deterministic_under_seed(self):
        def run():
            net = SimNetwork(self.host(jitter_ms=9), seed=42, start=NOON_ISH)
            out = []
            for _ in range(10):
                net.send(DEST, request_bytes(now=net.now()))
                out.append(net.receive(5000))
            return out

        assert run() == run()

    def test_clock_advances_on_empty_receive(self):
        net = SimNetwork(self.host(), start=NOON_ISH)
        assert net.receive(250) is None
        assert net.now() == NOON_ISH + timedelta(milliseconds=250)

    def test_sleep_until_never_goes_backward(self):
        net = SimNetwork(self.host(), start=NOON_ISH)
        net.sleep_until(NOON_ISH - timedelta(seconds=5))
        assert net.now() == NOON_ISH

    def test_tampered_source(self):
        net = SimNetwork(self.host(tamper="source"), start=NOON_ISH)
        net.send(DEST, request_bytes())
        src, _, _ = net.receive(1000)
        assert src != DEST


class TestBehaviorFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "hosts.txt"
        path.write_text(
            "# demo fixture\n"
            "@network latency=10 jitter=5 seed=7 start=2018-10-06T12:00:00Z\n"
            "192.0.2.1 lazy\n"
            "192.0.2.2 timezone tz=+9\n"
            "192.0.2.3 stuck value=0xbeef latency=20\n"
            "192.0.2.4 lazy units=s loss=0.25 tamper=orig_ts\n"
        )
        hosts, params = load_behavior_file(path)
        assert params["latency_ms"] == 10 and params["seed"] == 7
        assert params["start"].hour == 12
        assert hosts["192.0.2.2"].tz_offset_hours == 9.0
        assert hosts["192.0.2.3"].stuck_value == 0xBEEF
        assert hosts["192.0.2.4"].units == "s"
        assert hosts["192.0.2.4"].tamper == "orig_ts"

    def test_bad_address_names_line(self, tmp_path):
        path = tmp_path / "hosts.txt"
        path.write_text("192.0.2.1 lazy\nnot-an-ip lazy\n")
        with pytest.raises(ValueError, match="hosts.txt:2"):
            load_behavior_file(path)

    def test_bad_class_names_line(self, tmp_path):
        path = tmp_path / "hosts.txt"
        path.write_text("192.0.2.1 sleepy\n")
        with pytest.raises(ValueError, match="hosts.txt:1"):
            load_behavior_file(path)

    def test_duplicate_host_rejected(self, tmp_path):
        path = tmp_path / "hosts.txt"
        path.write_text("192.0.2.1 lazy\n192.0.2.1 normal\n")
        with pytest.raises(ValueError, match="hosts.txt:2"):
            load_behavior_file(path)

    def test_from_file_network(self, tmp_path):
        path = tmp_path / "hosts.txt"
        path.write_text("@network start=2018-10-06T01:02:03Z\n192.0.2.1 lazy\n")
        net = SimNetwork.from_file(path)
        assert net.now().hour == 1
