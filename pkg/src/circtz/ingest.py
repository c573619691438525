"""Input parsing: event streams, pre-binned counts, ground-truth labels.

Formats (gzip transparent via the ``.gz`` suffix):

* events: newline-delimited JSON ``{"community": str, "created_utc": int}``
  or CSV ``community,created_utc`` (header required);
* pre-binned: CSV ``community,epoch_hour,count`` (header required);
* ground truth: CSV ``community_id,offset_minutes[,zone_name]`` (header
  required), offsets in minutes on the 15-minute grid.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .preprocess import ActivitySeries
from .util import DataError, open_maybe_gzip

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Event:
    """One activity event (comment, post, ...) in one community."""

    community_id: str
    timestamp_utc: int

    def __post_init__(self) -> None:
        if not self.community_id:
            raise ValueError("community_id must be non-empty")
        if self.timestamp_utc < 0:
            raise ValueError("timestamp_utc must be >= 0")

    @property
    def epoch_hour(self) -> int:
        return self.timestamp_utc // 3600


@dataclass(frozen=True)
class GroundTruthLabel:
    """Known UTC offset of a community, in minutes."""

    community_id: str
    offset_minutes: int
    zone_name: str | None = None

    def __post_init__(self) -> None:
        if not self.community_id:
            raise ValueError("community_id must be non-empty")
        if not -720 <= self.offset_minutes <= 840:
            raise ValueError(f"offset {self.offset_minutes} outside [-720, 840]")
        if self.offset_minutes % 15 != 0:
            raise ValueError(f"offset {self.offset_minutes} not a multiple of 15 min")


@dataclass(frozen=True)
class LabeledCorpus:
    """Ground-truth labels plus the raw series they describe."""

    labels: dict[str, GroundTruthLabel]
    series: dict[str, ActivitySeries]

    def __post_init__(self) -> None:
        missing = sorted(set(self.labels) - set(self.series))
        if missing:
            raise DataError(f"labels without series: {', '.join(missing[:5])}")
        counts: dict[int, int] = {}
        for label in self.labels.values():
            counts[label.offset_minutes] = counts.get(label.offset_minutes, 0) + 1
        thin = sorted(o for o, n in counts.items() if n < 2)
        if thin:
            raise DataError(
                f"offset classes with fewer than 2 members: {thin}"
            )

    def class_sizes(self) -> dict[int, int]:
        sizes: dict[int, int] = {}
        for label in self.labels.values():
            sizes[label.offset_minutes] = sizes.get(label.offset_minutes, 0) + 1
        return sizes


def bin_events(events: Iterable[Event]) -> dict[str, ActivitySeries]:
    """Bin events into per-community hourly series.

    Each series spans its community's first through last active hour; hours
    without events hold count 0 (a genuine absence of activity). The result
    is independent of event order.
    """
    per_community: dict[str, dict[int, int]] = {}
    for ev in events:
        bucket = per_community.setdefault(ev.community_id, {})
        hour = ev.epoch_hour
        bucket[hour] = bucket.get(hour, 0) + 1
    out: dict[str, ActivitySeries] = {}
    for cid in sorted(per_community):
        bucket = per_community[cid]
        first = min(bucket)
        last = max(bucket)
        counts = np.zeros(last - first + 1, dtype=np.float64)
        for hour, n in bucket.items():
            counts[hour - first] = n
        out[cid] = ActivitySeries(start_hour=first, counts=counts)
    return out


def _sniff_ndjson(path: str) -> bool:
    with open_maybe_gzip(path) as fh:
        for line in fh:
            stripped = line.strip()
            if stripped:
                return stripped.startswith("{")
    return False


def read_events(path: str) -> Iterator[Event]:
    """Yield events from an NDJSON or CSV file.

    Malformed records are logged with their line number and skipped;
    processing continues.
    """
    if _sniff_ndjson(path):
        yield from _read_events_ndjson(path)
    else:
        yield from _read_events_csv(path)


def _read_events_ndjson(path: str) -> Iterator[Event]:
    with open_maybe_gzip(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                yield Event(
                    community_id=str(record["community"]),
                    timestamp_utc=int(record["created_utc"]),
                )
            except (ValueError, KeyError, TypeError) as exc:
                logger.warning("%s:%d: skipping malformed record (%s)", path, lineno, exc)


def _read_events_csv(path: str) -> Iterator[Event]:
    with open_maybe_gzip(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["community", "created_utc"]:
            raise DataError(f"{path}: expected header 'community,created_utc'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                yield Event(community_id=row[0], timestamp_utc=int(row[1]))
            except (ValueError, IndexError) as exc:
                logger.warning("%s:%d: skipping malformed record (%s)", path, lineno, exc)


def load_ground_truth(path: str, min_class_size: int = 2) -> list[GroundTruthLabel]:
    """Load labels, dropping offset classes with too few members.

    Duplicate community ids and off-grid offsets are hard errors. Dropped
    classes are logged with their sizes. The class filter is idempotent.
    """
    labels: dict[str, GroundTruthLabel] = {}
    with open_maybe_gzip(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            logger.warning("%s: empty ground-truth file", path)
            return []
        if [c.strip() for c in header[:2]] != ["community_id", "offset_minutes"]:
            raise DataError(
                f"{path}: expected header 'community_id,offset_minutes[,zone_name]'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected at least 2 columns")
            cid = row[0]
            if cid in labels:
                raise DataError(f"{path}:{lineno}: duplicate community_id {cid!r}")
            try:
                offset = int(row[1])
                zone = row[2] if len(row) > 2 and row[2] else None
                labels[cid] = GroundTruthLabel(
                    community_id=cid, offset_minutes=offset, zone_name=zone
                )
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not labels:
        logger.warning("%s: no labels found", path)
        return []

    sizes: dict[int, int] = {}
    for label in labels.values():
        sizes[label.offset_minutes] = sizes.get(label.offset_minutes, 0) + 1
    dropped = {o: n for o, n in sizes.items() if n < min_class_size}
    if dropped:
        logger.info(
            "dropping %d under-represented offset classes: %s",
            len(dropped),
            ", ".join(f"{o} min (n={n})" for o, n in sorted(dropped.items())),
        )
    return sorted(
        (l for l in labels.values() if sizes[l.offset_minutes] >= min_class_size),
        key=lambda l: l.community_id,
    )


def load_prebinned(path: str) -> dict[str, ActivitySeries]:
    """Load pre-binned hourly counts; same output contract as bin_events.

    Negative counts are hard errors. Out-of-order hours are reordered with a
    log line; duplicate (community, hour) rows are summed, which makes
    concatenated shards behave additively.
    """
    per_community: dict[str, dict[int, float]] = {}
    order_violations: set[str] = set()
    last_hour: dict[str, int] = {}
    with open_maybe_gzip(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:3]] != [
            "community",
            "epoch_hour",
            "count",
        ]:
            raise DataError(f"{path}: expected header 'community,epoch_hour,count'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                cid, hour, count = row[0], int(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if count < 0:
                raise DataError(f"{path}:{lineno}: negative count {count}")
            if cid in last_hour and hour < last_hour[cid]:
                order_violations.add(cid)
            last_hour[cid] = hour
            bucket = per_community.setdefault(cid, {})
            bucket[hour] = bucket.get(hour, 0.0) + count
    if order_violations:
        logger.info(
            "reordered non-monotone hours for %d communities", len(order_violations)
        )
    out: dict[str, ActivitySeries] = {}
    for cid in sorted(per_community):
        bucket = per_community[cid]
        first, last = min(bucket), max(bucket)
        counts = np.zeros(last - first + 1, dtype=np.float64)
        for hour, n in bucket.items():
            counts[hour - first] = n
        out[cid] = ActivitySeries(start_hour=first, counts=counts)
    return out


# ---------------------------------------------------------------------------
# writers (the exact formats the readers accept)

def write_events_ndjson(path: str, series_map: dict[str, ActivitySeries]) -> None:
    """Expand hourly counts into an NDJSON event stream (deterministic)."""
    with open_maybe_gzip(path, "wt") as fh:
        for cid in sorted(series_map):
            series = series_map[cid]
            for i, c in enumerate(series.counts):
                n = int(round(float(c)))
                base = (series.start_hour + i) * 3600
                for j in range(n):
                    ts = base + (j * 3600) // n
                    fh.write(
                        json.dumps({"community": cid, "created_utc": ts}) + "\n"
                    )


def write_prebinned_csv(path: str, series_map: dict[str, ActivitySeries]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["community", "epoch_hour", "count"])
        for cid in sorted(series_map):
            series = series_map[cid]
            for i, c in enumerate(series.counts):
                writer.writerow([cid, series.start_hour + i, int(round(float(c)))])


def write_labels_csv(path: str, labels: Iterable[GroundTruthLabel]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["community_id", "offset_minutes", "zone_name"])
        for label in sorted(labels, key=lambda l: l.community_id):
            writer.writerow(
                [label.community_id, label.offset_minutes, label.zone_name or ""]
            )
