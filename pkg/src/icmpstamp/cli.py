"""Command-line interface.

Exit codes: 0 success, 2 configuration error (bad flags or input files),
3 transport failure mid-scan, 4 missing privilege for raw sockets.
"""

from __future__ import annotations

import argparse
import logging
import sys

from icmpstamp import reports, results
from icmpstamp.classify import (
    AmbiguousTimezone,
    CorrectnessPolicy,
    Fingerprint,
    NoCleanReplies,
    fingerprint_observation,
)
from icmpstamp.clock import OffsetTable
from icmpstamp.engine import ALL_PROBE_KINDS, ScanConfig, make_transport, run_scan
from icmpstamp.probes import ProbeKind
from icmpstamp.transport import PrivilegeError, TransportError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_PRIVILEGE = 4


def _parse_probe_kinds(text: str) -> tuple[ProbeKind, ...]:
    kinds = []
    for name in text.split(","):
        name = name.strip()
        if not name:
            continue
        try:
            kinds.append(ProbeKind(name))
        except ValueError:
            valid = ", ".join(k.value for k in ALL_PROBE_KINDS)
            raise ValueError(f"unknown probe kind {name!r} (valid: {valid})") from None
    return tuple(kinds)


def _cmd_scan(args) -> int:
    cfg = ScanConfig(
        targets_path=args.targets,
        output_path=args.out,
        probe_kinds=_parse_probe_kinds(args.probes),
        inter_round_gap_ms=args.gap_ms,
        rate_pps=args.rate,
        timeout_ms=args.timeout_ms,
        seed=args.seed,
        vantage=args.vantage,
    )
    transport = make_transport(args.transport)
    written = 0
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            try:
                for record in run_scan(cfg, transport):
                    fh.write(results.record_to_line(record) + "\n")
                    fh.flush()
                    written += 1
            except TransportError as exc:
                print(f"transport failure: {exc} ({written} records flushed)",
                      file=sys.stderr)
                return EXIT_TRANSPORT
    finally:
        transport.close()
    print(f"wrote {written} records to {args.out}")
    return EXIT_OK


def _policy_and_table(args) -> tuple[CorrectnessPolicy, OffsetTable]:
    policy = CorrectnessPolicy(margin_ms=args.margin_ms)
    table = OffsetTable.from_file(args.offsets) if args.offsets else OffsetTable()
    return policy, table


def _cmd_classify(args) -> int:
    policy, table = _policy_and_table(args)
    records = results.read_records(args.input)
    reclassified = []
    for rec in records:
        obs = results.observation_from_record(rec)
        try:
            fp = fingerprint_observation(obs, policy, table)
        except NoCleanReplies:
            fp = Fingerprint(
                target=rec.target,
                classes=rec.fingerprint.classes,
                timekeeping=rec.fingerprint.timekeeping,
                correctness=rec.fingerprint.correctness,
                tz_offset=rec.fingerprint.tz_offset,
                flags=rec.fingerprint.flags | {"all_replies_tampered"},
            )
        reclassified.append(
            results.ResultRecord(
                target=rec.target,
                vantage=rec.vantage,
                outcomes=rec.outcomes,
                fingerprint=fp,
                duplicate_replies=rec.duplicate_replies,
            )
        )
    count = results.write_records(args.out, reclassified)
    print(f"reclassified {count} records into {args.out}")
    return EXIT_OK


def _cmd_report_pmf(args) -> int:
    records = results.read_records(args.input)
    rows = reports.error_histogram(
        records,
        bin_ms=args.bin_ms,
        exclude_correct=args.exclude_correct,
    )
    print("bin_start_ms\tprobability")
    for start, probability in rows:
        print(f"{start}\t{probability:.6f}")
    return EXIT_OK


def _cmd_report_geo(args) -> int:
    records = results.read_records(args.input)
    tz_db = reports.load_tz_db(args.tzdb)
    summary = reports.geolocate_report(records, tz_db)
    print(f"timezone-classified hosts: {summary.total}")
    print(f"  matched std offset (zone without DST): {summary.match_std_no_dst}")
    print(f"  matched DST offset:                    {summary.match_dst}")
    print(f"  matched std offset (zone with DST):    {summary.match_std_with_dst}")
    print(f"  mismatched:                            {summary.mismatch}")
    print(f"  unresolved in database:                {summary.unresolved}")
    print(f"accuracy: {summary.accuracy:.1%}")
    return EXIT_OK


def _cmd_analyze_requests(args) -> int:
    entries = reports.load_capture(args.capture)
    summary = reports.analyze_requests(entries, top_n=args.top)
    print(f"timestamp requests: {summary.total_requests}")
    print(f"zero-originate (nmap-like): {summary.nmap_like} "
          f"({summary.nmap_fraction:.2%})")
    print("top sources:")
    for src, count in summary.top_sources:
        print(f"  {src}\t{count}")
    return EXIT_OK


def _cmd_merge(args) -> int:
    records_a = results.read_records(args.file_a)
    records_b = results.read_records(args.file_b)
    merged = reports.merge_records(records_a, records_b)
    count = results.write_records(args.out, merged)
    print(f"merged {count} consensus records into {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icmpstamp",
        description="ICMP timestamp prober, classifier, and report generator",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log unmatched replies and scan progress")
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="probe targets and record fingerprints")
    scan.add_argument("--targets", required=True, help="file of IPv4 targets")
    scan.add_argument("--out", required=True, help="result file (JSON lines)")
    scan.add_argument("--rate", type=int, default=100, help="probes per second")
    scan.add_argument("--gap-ms", type=int, default=3000,
                      help="gap before the duplicate-timestamp round")
    scan.add_argument("--timeout-ms", type=int, default=5000,
                      help="wait after the last probe")
    scan.add_argument("--seed", type=int, default=0,
                      help="seed for probe order and random fields")
    scan.add_argument("--probes", default="standard,bad_clock,bad_checksum,duplicate",
                      help="comma-separated probe kinds to send")
    scan.add_argument("--transport", default="raw",
                      help="'raw' or 'sim:<behavior fixture path>'")
    scan.add_argument("--vantage", default="", help="label stored in records")
    scan.set_defaults(func=_cmd_scan)

    classify = sub.add_parser("classify", help="re-run classification on results")
    classify.add_argument("--in", dest="input", required=True)
    classify.add_argument("--out", required=True)
    classify.add_argument("--margin-ms", type=int, default=200)
    classify.add_argument("--offsets", help="custom candidate-offset table file")
    classify.set_defaults(func=_cmd_classify)

    report = sub.add_parser("report", help="aggregate stored results")
    report_sub = report.add_subparsers(dest="report_kind", required=True)

    pmf = report_sub.add_parser("pmf", help="receive-minus-originate error PMF")
    pmf.add_argument("--in", dest="input", required=True)
    pmf.add_argument("--bin-ms", type=int, default=60_000)
    pmf.add_argument("--exclude-correct", action="store_true")
    pmf.set_defaults(func=_cmd_report_pmf)

    geo = report_sub.add_parser("geo", help="timezone inference accuracy")
    geo.add_argument("--in", dest="input", required=True)
    geo.add_argument("--tzdb", required=True,
                     help="file of '<cidr> <std_offset> [dst_offset]' rows")
    geo.set_defaults(func=_cmd_report_geo)

    analyze = sub.add_parser("analyze-requests",
                             help="scanner signatures in an inbound capture")
    analyze.add_argument("--capture", required=True)
    analyze.add_argument("--top", type=int, default=10)
    analyze.set_defaults(func=_cmd_analyze_requests)

    merge = sub.add_parser("merge", help="two result files -> consensus records")
    merge.add_argument("file_a")
    merge.add_argument("file_b")
    merge.add_argument("--out", required=True)
    merge.set_defaults(func=_cmd_merge)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PrivilegeError as exc:
        print(f"privilege error: {exc}", file=sys.stderr)
        return EXIT_PRIVILEGE
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ValueError, OSError, AmbiguousTimezone) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
