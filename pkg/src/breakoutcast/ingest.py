"""Raw mention records: parsing, weekly aggregation, outlier filtering.

Input is a stream of per-day mention counts for (entity, channel) pairs.
Aggregation bins days into 7-day blocks counted from a configured origin
date (not ISO calendar weeks) and zero-fills days and channels with no
observations.
"""

import csv
import datetime
import io
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from breakoutcast.errors import ParseError, ValidationError

CSV_HEADER = ["entity_id", "date", "channel", "count"]


class Channel(Enum):
    SOCIAL = "social"
    BROADCAST = "broadcast"


@dataclass(frozen=True)
class MentionRecord:
    entity_id: str
    date: datetime.date
    channel: Channel
    count: int


@dataclass
class WeeklyPanel:
    """Per-entity weekly counts for both channels.

    Week w (0-based) covers days [start_date + 7w, start_date + 7w + 6].
    Both arrays always have the same length.
    """

    entity_id: str
    start_date: datetime.date
    social: np.ndarray
    broadcast: np.ndarray

    def __post_init__(self):
        self.social = np.asarray(self.social, dtype=np.float64)
        self.broadcast = np.asarray(self.broadcast, dtype=np.float64)
        if self.social.shape != self.broadcast.shape or self.social.ndim != 1:
            raise ValidationError(
                f"panel {self.entity_id}: channel series must share one length"
            )
        if np.any(self.social < 0) or np.any(self.broadcast < 0):
            raise ValidationError(f"panel {self.entity_id}: negative weekly value")

    @property
    def n_weeks(self):
        return self.social.shape[0]

    def channel(self, channel: Channel):
        return self.social if channel is Channel.SOCIAL else self.broadcast


def _parse_count(raw, line_no):
    text = str(raw).strip()
    try:
        count = int(text, 10)
    except (TypeError, ValueError):
        raise ParseError(line_no, f"count {raw!r} is not a base-10 integer")
    if count < 0:
        raise ValidationError(f"negative count {count}", line_no)
    return count


def _parse_channel(raw, line_no):
    text = str(raw).strip().lower()
    try:
        return Channel(text)
    except ValueError:
        raise ValidationError(f"unknown channel tag {raw!r}", line_no)


def _parse_date(raw, line_no):
    try:
        return datetime.date.fromisoformat(str(raw).strip())
    except (TypeError, ValueError):
        raise ParseError(line_no, f"date {raw!r} is not YYYY-MM-DD")


def _record_from_fields(entity_id, date_raw, channel_raw, count_raw, line_no):
    entity_id = str(entity_id).strip()
    if not entity_id:
        raise ValidationError("empty entity_id", line_no)
    return MentionRecord(
        entity_id=entity_id,
        date=_parse_date(date_raw, line_no),
        channel=_parse_channel(channel_raw, line_no),
        count=_parse_count(count_raw, line_no),
    )


def parse_records(stream, format="csv"):
    """Parse a CSV (header required) or JSONL stream into MentionRecords.

    Row order is preserved.  Malformed rows raise ParseError with the
    1-based line number; semantically invalid rows raise ValidationError.
    """
    if isinstance(stream, (str, bytes)):
        if isinstance(stream, bytes):
            stream = stream.decode("utf-8")
        stream = io.StringIO(stream)
    fmt = str(format).lower()
    if fmt == "csv":
        return _parse_csv(stream)
    if fmt == "jsonl":
        return _parse_jsonl(stream)
    raise ValueError(f"unknown record format {format!r}")


def _parse_csv(stream):
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "missing header")
    if [h.strip().lower() for h in header] != CSV_HEADER:
        raise ParseError(1, f"header must be {','.join(CSV_HEADER)}")
    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(line_no, f"expected 4 fields, got {len(row)}")
        records.append(_record_from_fields(*row, line_no=line_no))
    return records


def _parse_jsonl(stream):
    records = []
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}")
        if not isinstance(obj, dict):
            raise ParseError(line_no, "expected one object per line")
        missing = [k for k in CSV_HEADER if k not in obj]
        if missing:
            raise ParseError(line_no, f"missing keys: {', '.join(missing)}")
        records.append(
            _record_from_fields(
                obj["entity_id"], obj["date"], obj["channel"], obj["count"],
                line_no=line_no,
            )
        )
    return records


def aggregate_weekly(records, origin, span_weeks):
    """Sum daily records into per-entity weekly panels.

    Every record date must fall in [origin, origin + 7*span_weeks).
    Entities missing a channel entirely get an all-zero series for it.
    Output is keyed and ordered by entity_id, independent of record order.
    """
    if span_weeks <= 0:
        raise ValueError("span_weeks must be positive")
    span_days = 7 * span_weeks
    sums = {}
    for rec in records:
        offset = (rec.date - origin).days
        if offset < 0 or offset >= span_days:
            raise ValidationError(
                f"record for {rec.entity_id} on {rec.date} outside "
                f"[{origin}, {origin + datetime.timedelta(days=span_days)})"
            )
        arrays = sums.get(rec.entity_id)
        if arrays is None:
            arrays = sums[rec.entity_id] = {
                Channel.SOCIAL: np.zeros(span_weeks),
                Channel.BROADCAST: np.zeros(span_weeks),
            }
        arrays[rec.channel][offset // 7] += rec.count
    return {
        eid: WeeklyPanel(eid, origin, arrays[Channel.SOCIAL], arrays[Channel.BROADCAST])
        for eid, arrays in sorted(sums.items())
    }


def filter_outliers(panels, low=10, high=5000):
    """Drop entities whose total social mentions are <= low or >= high.

    Totals use the social channel only.  Returns (kept, dropped) where
    dropped is sorted by entity_id.
    """
    if not low < high:
        raise ValueError("require low < high")
    kept = {}
    dropped = []
    for eid, panel in panels.items():
        total = float(panel.social.sum())
        if low < total < high:
            kept[eid] = panel
        else:
            dropped.append(eid)
    return kept, sorted(dropped)


def filter_require_broadcast(panels):
    """Keep only entities with at least one nonzero broadcast week."""
    kept = {}
    dropped = []
    for eid, panel in panels.items():
        if np.any(panel.broadcast > 0):
            kept[eid] = panel
        else:
            dropped.append(eid)
    return kept, sorted(dropped)


def _format_value(v):
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


def write_panels(path, panels):
    """Write panels as CSV rows `entity_id,start_date,channel,w1..wW` (two rows per entity)."""
    panels = dict(sorted(panels.items()))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n_weeks = next(iter(panels.values())).n_weeks if panels else 0
        writer.writerow(
            ["entity_id", "start_date", "channel"]
            + [f"w{i}" for i in range(1, n_weeks + 1)]
        )
        for eid, panel in panels.items():
            for channel in (Channel.SOCIAL, Channel.BROADCAST):
                writer.writerow(
                    [eid, panel.start_date.isoformat(), channel.value]
                    + [_format_value(v) for v in panel.channel(channel)]
                )


def read_panels(path):
    """Read a panel file written by write_panels."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "missing header")
        if header[:3] != ["entity_id", "start_date", "channel"]:
            raise ParseError(1, "not a panel file")
        n_weeks = len(header) - 3
        rows = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + n_weeks:
                raise ParseError(line_no, f"expected {3 + n_weeks} fields")
            eid, start_raw, channel_raw = row[0], row[1], row[2]
            channel = _parse_channel(channel_raw, line_no)
            values = np.array([float(v) for v in row[3:]])
            key = (eid, _parse_date(start_raw, line_no))
            rows.setdefault(key, {})[channel] = values
    panels = {}
    for (eid, start), by_channel in sorted(rows.items()):
        social = by_channel.get(Channel.SOCIAL, np.zeros(n_weeks))
        broadcast = by_channel.get(Channel.BROADCAST, np.zeros(n_weeks))
        panels[eid] = WeeklyPanel(eid, start, social, broadcast)
    return panels
