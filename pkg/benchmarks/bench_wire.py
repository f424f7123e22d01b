#!/usr/bin/env python3
"""Benchmark the wire kernels: compiled extension vs pure Python.

The checksum sits on the per-packet hot path (twice per probe crafted,
once per reply parsed), so this is the loop that bounds raw send rate.
Run after building the extension in place:

    python setup.py build_ext --inplace
    python benchmarks/bench_wire.py

Pass --pure to force the composite pipeline benchmark onto the fallback
kernels even when the extension is available.
"""

import argparse
import os
import random
import sys
import time
from pathlib import Path


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pure", action="store_true",
                        help="force the pure-Python kernels for the pipeline run")
    parser.add_argument("--repeat", type=int, default=200_000,
                        help="iterations per kernel microbenchmark")
    return parser.parse_args()


ARGS = parse_args()
if ARGS.pure:
    os.environ["ICMPSTAMP_PURE"] = "1"

try:
    import icmpstamp  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from icmpstamp import _kernels_py, wire  # noqa: E402
from icmpstamp.probes import make_bad_checksum, make_standard, verify_reply  # noqa: E402
from icmpstamp.responder import BehaviorConfig, respond  # noqa: E402

try:
    from icmpstamp import _speedups
except ImportError:
    _speedups = None


def rate(fn, payloads, repeat):
    n = len(payloads)
    start = time.perf_counter()
    for i in range(repeat):
        fn(payloads[i % n])
    elapsed = time.perf_counter() - start
    return repeat / elapsed


def bench_kernels(repeat):
    rng = random.Random(1)
    small = [rng.randbytes(20) for _ in range(256)]
    big = [rng.randbytes(1500) for _ in range(64)]
    ints = [rng.getrandbits(32) for _ in range(256)]
    rows = [
        ("internet_checksum 20B", small, "internet_checksum"),
        ("internet_checksum 1500B", big, "internet_checksum"),
        ("checksum_valid 20B", small, "checksum_valid"),
        ("byte_swap_32", ints, "byte_swap_32"),
    ]
    print(f"{'kernel':<26}{'pure ops/s':>14}{'compiled ops/s':>16}{'speedup':>9}")
    for label, payloads, name in rows:
        reps = repeat if payloads is not big else repeat // 10
        pure = rate(getattr(_kernels_py, name), payloads, reps)
        if _speedups is None:
            print(f"{label:<26}{pure:>14,.0f}{'n/a':>16}{'':>9}")
            continue
        fast = rate(getattr(_speedups, name), payloads, reps)
        print(f"{label:<26}{pure:>14,.0f}{fast:>16,.0f}{fast / pure:>8.1f}x")


def bench_pipeline(repeat):
    """Craft a probe, answer it, verify the reply: the full wire cycle."""
    from datetime import datetime, timedelta, timezone

    rng = random.Random(2)
    cfg = BehaviorConfig()
    base = datetime(2018, 10, 6, 9, 30, tzinfo=timezone.utc)
    reps = min(repeat // 4, 50_000)
    start = time.perf_counter()
    for i in range(reps):
        now = base + timedelta(milliseconds=i)
        probe = make_standard("198.51.100.7", now)
        raw = respond(cfg, wire.encode(probe.message), now, rng)
        reply = wire.decode(raw)
        verify_reply(probe, reply, "198.51.100.7")
    elapsed = time.perf_counter() - start
    print(
        f"\nprobe->reply->verify cycle [{wire.kernel_backend()} backend]: "
        f"{reps / elapsed:,.0f} cycles/s"
    )
    # A bad-checksum probe redraws until the checksum fails verification.
    start = time.perf_counter()
    for i in range(reps // 5):
        make_bad_checksum("198.51.100.7", base + timedelta(milliseconds=i), rng)
    elapsed = time.perf_counter() - start
    print(f"bad-checksum probe craft   [{wire.kernel_backend()} backend]: "
          f"{(reps // 5) / elapsed:,.0f} probes/s")


def main():
    if _speedups is None:
        print("compiled extension not built; showing pure-Python rates only\n")
    bench_kernels(ARGS.repeat)
    bench_pipeline(ARGS.repeat)


if __name__ == "__main__":
    main()
