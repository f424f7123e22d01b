"""Day-circle time arithmetic and the candidate UTC-offset table.

Timestamps count milliseconds since the most recent UTC midnight, so all
comparisons live on a circle of 86,400,000 ms.  Leap seconds are not
represented: the day is always exactly 86,400,000 ms long, which is far
below the 200 ms correctness margin used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

DAY_MS = 86_400_000
HALF_DAY_MS = DAY_MS // 2
MS_PER_HOUR = 3_600_000

# The 29 candidate UTC offsets observed in timezone-relative replies.
# Zero is deliberately absent: a zero-offset reply is simply correct.
DEFAULT_OFFSET_HOURS = (
    -12.0, -11.0, -10.0, -9.0, -8.0, -7.0, -6.0, -5.0, -4.0, -3.5,
    -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 3.5, 4.0, 4.5, 5.0,
    5.5, 6.0, 6.5, 7.0, 8.0, 9.0, 9.5, 10.0, 11.0,
)


def ms_since_utc_midnight(instant: datetime) -> int:
    """Milliseconds elapsed since the most recent UTC midnight.

    ``instant`` must be timezone-aware; sub-millisecond precision is
    floored away.
    """
    if instant.tzinfo is None:
        raise ValueError("instant must be timezone-aware")
    utc = instant.astimezone(timezone.utc)
    return ((utc.hour * 60 + utc.minute) * 60 + utc.second) * 1000 + utc.microsecond // 1000


def circular_diff(a: int, b: int) -> int:
    """Signed ``a - b`` on the day circle, in (-43,200,000, +43,200,000].

    Makes receive-vs-originate comparisons behave across the UTC-midnight
    wrap; ``abs(circular_diff(a, b))`` is a metric on the circle.
    """
    if not 0 <= a < DAY_MS:
        raise ValueError(f"not a day-milliseconds value: {a}")
    if not 0 <= b < DAY_MS:
        raise ValueError(f"not a day-milliseconds value: {b}")
    d = (a - b) % DAY_MS
    return d if d <= HALF_DAY_MS else d - DAY_MS


def offset_millis(offset_hours: float) -> int:
    """Convert a UTC offset in hours (multiple of 0.5) to milliseconds."""
    doubled = offset_hours * 2
    if doubled != int(doubled):
        raise ValueError(f"offset must be a multiple of 0.5 hours: {offset_hours}")
    return int(doubled) * (MS_PER_HOUR // 2)


def normalize_offset(raw_hours: float) -> float:
    """Reduce a raw hour offset modulo 24 into (-12, +12].

    A responder nine hours ahead can look fifteen hours behind depending
    on where the originate timestamp fell in the day; both describe the
    same clock, so -15 normalizes to +9.
    """
    r = raw_hours % 24.0
    return r - 24.0 if r > 12.0 else r


def offsets_equal(a: float, b: float) -> bool:
    """Offset equality on the day circle (+12 and -12 are the same point)."""
    return normalize_offset(a) % 24.0 == normalize_offset(b) % 24.0


@dataclass(frozen=True)
class OffsetTable:
    """Ordered candidate UTC offsets for timezone inference.

    The default holds the 29 offsets seen in the wild; pass your own tuple
    (or load one from a file) to widen or narrow the search.
    """

    offsets: tuple[float, ...] = DEFAULT_OFFSET_HOURS

    def __post_init__(self):
        for o in self.offsets:
            if (o * 2) != int(o * 2):
                raise ValueError(f"offset must be a multiple of 0.5 hours: {o}")

    @classmethod
    def from_file(cls, path) -> "OffsetTable":
        """Load a table from a text file of one decimal hour offset per line."""
        offsets = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                try:
                    offsets.append(float(text))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: not an hour offset: {text!r}") from None
        return cls(tuple(offsets))

    def match(self, hours: float) -> float | None:
        """The table entry equal to ``hours`` on the day circle, if any."""
        for o in self.offsets:
            if offsets_equal(o, hours):
                return o
        return None
