"""Turn timestamped event records or pre-binned counts into hourly rate series."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HOUR = 3600


class IngestError(ValueError):
    """Raised for malformed input files or invalid event data."""


@dataclass(frozen=True)
class FlowPolicy:
    """Flow assembly rules: max flow span and idle timeout, in seconds."""

    lifetime_s: float = 300.0
    timeout_s: float = 60.0

    def __post_init__(self):
        if not self.lifetime_s > 0:
            raise ValueError("lifetime_s must be positive")
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")
        if self.timeout_s > self.lifetime_s:
            raise ValueError("timeout_s must not exceed lifetime_s")


@dataclass(frozen=True)
class EventRecord:
    """One flow/attack: a time span attributed to a source."""

    start_time: float
    end_time: float | None = None
    source_id: str = ""
    port: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.start_time):
            raise ValueError("start_time must be finite")
        if self.end_time is None:
            object.__setattr__(self, "end_time", self.start_time)
        if self.end_time < self.start_time:
            raise ValueError("end_time must be >= start_time")


@dataclass
class RateSeries:
    """Contiguous hourly counts anchored at an hour-aligned epoch origin."""

    origin: float
    counts: np.ndarray
    label: str = ""
    gap_hours: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.size == 0:
            raise ValueError("counts must be non-empty")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")
        if self.origin % HOUR != 0:
            raise ValueError("origin must be hour-aligned")

    def __len__(self) -> int:
        return int(self.counts.size)

    @property
    def values(self) -> np.ndarray:
        return self.counts.astype(np.float64)

    def to_counts_csv(self) -> str:
        lines = [f"{i},{int(c)}" for i, c in enumerate(self.counts)]
        return "\n".join(lines) + "\n"


def assemble_events(raw, policy: FlowPolicy = FlowPolicy()):
    """Split per-source activity markers into flows.

    A flow ends when the next marker is more than ``timeout_s`` after the
    previous one, or when including it would stretch the flow span beyond
    ``lifetime_s``. Non-finite timestamps are dropped and reported in the
    returned diagnostics.

    Returns (events, rejected) where rejected is a list of (source_id,
    timestamp, reason) tuples.
    """
    by_source: dict[str, list[float]] = {}
    rejected = []
    for source_id, ts in raw:
        try:
            ts = float(ts)
        except (TypeError, ValueError):
            rejected.append((source_id, ts, "unparseable timestamp"))
            continue
        if not math.isfinite(ts):
            rejected.append((source_id, ts, "non-finite timestamp"))
            continue
        by_source.setdefault(str(source_id), []).append(ts)

    events = []
    for source_id in sorted(by_source):
        times = sorted(by_source[source_id])
        start = prev = times[0]
        for t in times[1:]:
            if t - prev > policy.timeout_s or t - start > policy.lifetime_s:
                events.append(EventRecord(start, prev, source_id))
                start = t
            prev = t
        events.append(EventRecord(start, prev, source_id))
    events.sort(key=lambda e: (e.start_time, e.source_id))
    return events, rejected


def bin_hourly(events, origin: float) -> RateSeries:
    """Count events per hour by start_time; missing hours are zero-filled
    and flagged in ``gap_hours``."""
    if not events:
        raise IngestError("empty series: no events to bin")
    origin = float(origin) - float(origin) % HOUR
    starts = np.array([e.start_time for e in events])
    if starts.min() < origin:
        raise IngestError("origin must not be later than the earliest event")
    idx = ((starts - origin) // HOUR).astype(np.int64)
    n = int(idx.max()) + 1
    counts = np.bincount(idx, minlength=n)
    gaps = [int(i) for i in np.flatnonzero(counts == 0)]
    return RateSeries(origin=origin, counts=counts, gap_hours=gaps)


def _parse_counts_csv(lines) -> RateSeries:
    rows = []
    last_idx = -1
    for lineno, line in lines:
        parts = line.split(",")
        if len(parts) != 2:
            raise IngestError(f"line {lineno}: expected 'hour_index,count'")
        try:
            hour = int(parts[0])
            count = int(parts[1])
        except ValueError:
            raise IngestError(f"line {lineno}: malformed row {line!r}") from None
        if count < 0:
            raise IngestError(f"line {lineno}: negative count {count}")
        if hour <= last_idx:
            raise IngestError(f"line {lineno}: non-monotone hour_index {hour}")
        rows.append((hour, count))
        last_idx = hour
    if not rows:
        raise IngestError("empty series: no data rows")
    n = rows[-1][0] + 1
    counts = np.zeros(n, dtype=np.int64)
    for hour, count in rows:
        counts[hour] = count
    present = {hour for hour, _ in rows}
    gaps = [i for i in range(n) if i not in present]
    return RateSeries(origin=0.0, counts=counts, gap_hours=gaps)


def _parse_events_csv(lines):
    events = []
    for lineno, line in lines:
        parts = line.split(",")
        if len(parts) not in (2, 3):
            raise IngestError(
                f"line {lineno}: expected 'source_id,start_epoch_s[,end_epoch_s]'"
            )
        try:
            start = float(parts[1])
            end = float(parts[2]) if len(parts) == 3 else None
        except ValueError:
            raise IngestError(f"line {lineno}: malformed row {line!r}") from None
        try:
            events.append(EventRecord(start, end, parts[0]))
        except ValueError as exc:
            raise IngestError(f"line {lineno}: {exc}") from None
    if not events:
        raise IngestError("empty series: no data rows")
    return events


def load_series(path, fmt: str = "counts-csv") -> RateSeries:
    """Load a RateSeries from a counts-csv or events-csv file."""
    with open(path, encoding="utf-8") as fh:
        lines = [
            (lineno, line.strip())
            for lineno, line in enumerate(fh, start=1)
            if line.strip() and not line.lstrip().startswith("#")
        ]
    if fmt == "counts-csv":
        return _parse_counts_csv(lines)
    if fmt == "events-csv":
        events = _parse_events_csv(lines)
        origin = min(e.start_time for e in events)
        return bin_hourly(events, origin)
    raise IngestError(f"unknown format {fmt!r}")
