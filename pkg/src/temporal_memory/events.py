"""Normalize raw JSONL/CSV log records into a canonical, deterministically ordered event store.

Records are coerced to UTC, given stable ids, rendered into a compact text
representation for embedding, and bucketed by ISO week.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

# Canonical field order for events.jsonl lines.
EVENT_FIELDS = (
    "event_id",
    "ts",
    "product",
    "event_type",
    "asset_id",
    "msg",
    "context",
    "tech",
    "attack",
    "risk_tag",
    "text_repr",
)

_LIST_FIELDS = ("tech", "attack", "risk_tag")

# Epoch values at or above this magnitude are taken as milliseconds
# (1e11 s is year 5138; 1e11 ms is 1973, so the ranges do not overlap).
_EPOCH_MS_THRESHOLD = 1e11


class RecordParseError(ValueError):
    """A single raw record could not be normalized (record is skipped)."""


class IngestError(RuntimeError):
    """Ingestion produced zero usable events."""


@dataclass(frozen=True, order=True)
class WeekKey:
    """ISO-8601 week bucket; orders consistently with calendar order."""

    iso_year: int
    iso_week: int

    def __post_init__(self) -> None:
        if not 1 <= self.iso_week <= 53:
            raise ValueError(f"iso_week out of range: {self.iso_week}")

    def __str__(self) -> str:
        return f"{self.iso_year}-W{self.iso_week:02d}"

    def monday(self) -> datetime:
        d = datetime.fromisocalendar(self.iso_year, self.iso_week, 1)
        return d.replace(tzinfo=timezone.utc)

    def next(self) -> "WeekKey":
        nxt = self.monday() + timedelta(days=7)
        y, w, _ = nxt.isocalendar()
        return WeekKey(y, w)

    @classmethod
    def parse(cls, text: str) -> "WeekKey":
        year, _, week = text.partition("-W")
        return cls(int(year), int(week))


@dataclass(frozen=True)
class Event:
    """One normalized log record."""

    event_id: str
    ts: datetime
    product: str = ""
    event_type: str = ""
    asset_id: str = ""
    msg: str = ""
    context: Mapping[str, str] = field(default_factory=dict)
    tech: tuple[str, ...] = ()
    attack: tuple[str, ...] = ()
    risk_tag: tuple[str, ...] = ()
    text_repr: str = ""

    def sort_key(self) -> tuple[datetime, str]:
        return (self.ts, self.event_id)

    def to_json(self) -> str:
        obj = {
            "event_id": self.event_id,
            "ts": self.ts.isoformat(),
            "product": self.product,
            "event_type": self.event_type,
            "asset_id": self.asset_id,
            "msg": self.msg,
            "context": dict(self.context),
            "tech": list(self.tech),
            "attack": list(self.attack),
            "risk_tag": list(self.risk_tag),
            "text_repr": self.text_repr,
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _parse_timestamp(raw) -> tuple[datetime, bool]:
    """Parse a raw timestamp; returns (UTC instant, was_naive)."""
    if isinstance(raw, bool):
        raise RecordParseError(f"not a timestamp: {raw!r}")
    if isinstance(raw, (int, float)):
        return _from_epoch(float(raw)), False
    if isinstance(raw, str):
        text = raw.strip()
        if not text:
            raise RecordParseError("empty timestamp")
        try:
            return _from_epoch(float(text)), False
        except ValueError:
            pass
        iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
        try:
            dt = datetime.fromisoformat(iso)
        except ValueError as exc:
            raise RecordParseError(f"unparseable timestamp: {raw!r}") from exc
        if dt.tzinfo is None:
            # Naive timestamps are taken to already be UTC.
            return dt.replace(tzinfo=timezone.utc), True
        return dt.astimezone(timezone.utc), False
    raise RecordParseError(f"not a timestamp: {raw!r}")


def _from_epoch(value: float) -> datetime:
    if abs(value) >= _EPOCH_MS_THRESHOLD:
        value /= 1000.0
    return datetime.fromtimestamp(value, tz=timezone.utc)


def coerce_timestamp(raw) -> datetime:
    """Coerce an ISO-8601 string or epoch seconds/milliseconds to a UTC instant.

    Naive ISO strings are interpreted as already-UTC; epoch unit is
    auto-detected by magnitude.
    """
    dt, _ = _parse_timestamp(raw)
    return dt


def derive_event_id(
    ts: datetime,
    product: str = "",
    event_type: str = "",
    asset_id: str = "",
    msg: str = "",
    explicit_id: str = "",
) -> str:
    """Return the record's explicit id, or a stable content digest.

    The digest covers the UTC ISO timestamp plus the identity/text fields,
    joined with an unprintable separator so field boundaries cannot collide.
    """
    if explicit_id:
        return explicit_id
    payload = "\x1f".join((ts.isoformat(), product, event_type, asset_id, msg))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_text_repr(
    product: str = "",
    event_type: str = "",
    asset_id: str = "",
    msg: str = "",
    tech: Iterable[str] = (),
    attack: Iterable[str] = (),
    risk_tag: Iterable[str] = (),
) -> str:
    """Join the salient fields, in fixed order, with " | "; empty fields are omitted."""
    parts = [product, event_type, asset_id, msg]
    parts.extend(tech)
    parts.extend(attack)
    parts.extend(risk_tag)
    joined = " | ".join(p for p in parts if p)
    if not joined:
        raise RecordParseError("all text fields empty; event is unembeddable")
    return joined


def iso_week_of(ts: datetime) -> WeekKey:
    """ISO week-date bucket (weeks start Monday; week 1 holds the first Thursday)."""
    year, week, _ = ts.isocalendar()
    return WeekKey(year, week)


@dataclass(frozen=True)
class EventStore:
    """Immutable, deterministically ordered collection of events.

    Events are sorted by (ts, event_id) and deduplicated by event_id with
    the first occurrence under that ordering winning, so the store is
    invariant under input-line shuffling.
    """

    events: tuple[Event, ...]
    source_manifest: tuple[dict, ...] = ()
    duplicates_dropped: int = 0

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def ids(self) -> list[str]:
        return [e.event_id for e in self.events]

    def by_id(self, event_id: str) -> Event:
        for e in self.events:
            if e.event_id == event_id:
                return e
        raise KeyError(event_id)

    def week_range(self) -> tuple[WeekKey, WeekKey] | None:
        if not self.events:
            return None
        return iso_week_of(self.events[0].ts), iso_week_of(self.events[-1].ts)

    def manifest(self) -> dict:
        total_records = sum(f["records"] for f in self.source_manifest)
        total_skipped = sum(f["skipped"] for f in self.source_manifest)
        naive = sum(f["naive_timestamps"] for f in self.source_manifest)
        rng = self.week_range()
        return {
            "files": list(self.source_manifest),
            "records": total_records,
            "events": len(self.events),
            "skipped": total_skipped,
            "duplicates_dropped": self.duplicates_dropped,
            "naive_timestamps": naive,
            "week_range": [str(rng[0]), str(rng[1])] if rng else None,
        }


def _coerce_scalar(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return json.dumps(value)
    return json.dumps(value, sort_keys=True, ensure_ascii=False)


def _coerce_list(value) -> tuple[str, ...]:
    if value is None or value == "":
        return ()
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(";") if part.strip())
    if isinstance(value, (list, tuple)):
        return tuple(_coerce_scalar(v) for v in value)
    raise RecordParseError(f"expected list or ';'-joined string, got {value!r}")


def _build_event(fields: dict) -> tuple[Event, bool]:
    """Build one Event from a mapping of canonical field names to raw values."""
    if "ts" not in fields or fields["ts"] in (None, ""):
        raise RecordParseError("missing ts")
    ts, was_naive = _parse_timestamp(fields["ts"])

    product = str(fields.get("product") or "")
    event_type = str(fields.get("event_type") or "")
    asset_id = str(fields.get("asset_id") or "")
    msg = str(fields.get("msg") or "")
    tech = _coerce_list(fields.get("tech"))
    attack = _coerce_list(fields.get("attack"))
    risk_tag = _coerce_list(fields.get("risk_tag"))

    context: dict[str, str] = {}
    raw_context = fields.get("context") or {}
    if isinstance(raw_context, str):
        try:
            raw_context = json.loads(raw_context) if raw_context else {}
        except json.JSONDecodeError as exc:
            raise RecordParseError(f"bad context JSON: {raw_context!r}") from exc
    if not isinstance(raw_context, dict):
        raise RecordParseError(f"context must be an object, got {raw_context!r}")
    for key, value in raw_context.items():
        context[str(key)] = _coerce_scalar(value)
    # Unknown top-level keys are preserved rather than dropped.
    for key, value in fields.items():
        if key not in EVENT_FIELDS:
            context[str(key)] = _coerce_scalar(value)

    text_repr = str(fields.get("text_repr") or "")
    if not text_repr:
        text_repr = build_text_repr(product, event_type, asset_id, msg, tech, attack, risk_tag)

    event_id = derive_event_id(
        ts, product, event_type, asset_id, msg, explicit_id=str(fields.get("event_id") or "")
    )
    event = Event(
        event_id=event_id,
        ts=ts,
        product=product,
        event_type=event_type,
        asset_id=asset_id,
        msg=msg,
        context=context,
        tech=tech,
        attack=attack,
        risk_tag=risk_tag,
        text_repr=text_repr,
    )
    return event, was_naive


def read_mapping(path: Path | str) -> dict[str, str]:
    """Read a CSV column mapping file of `field=column` lines."""
    mapping: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, column = line.partition("=")
        if not sep:
            raise IngestError(f"bad mapping line (expected field=column): {line!r}")
        mapping[key.strip()] = column.strip()
    return mapping


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict | RecordParseError]]:
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield line_no, RecordParseError(f"bad JSON: {exc}")
                continue
            if not isinstance(obj, dict):
                yield line_no, RecordParseError(f"expected object, got {type(obj).__name__}")
                continue
            yield line_no, obj


def _iter_csv(path: Path, mapping: dict[str, str]) -> Iterator[tuple[int, dict]]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for line_no, row in enumerate(reader, start=2):  # header is line 1
            fields = {}
            for canonical, column in mapping.items():
                if column in row and row[column] not in (None, ""):
                    fields[canonical] = row[column]
            yield line_no, fields


def ingest(paths: Iterable[Path | str], mapping: dict[str, str] | None = None) -> EventStore:
    """Parse, normalize, order, and deduplicate raw JSONL/CSV files.

    Per-record failures are logged and counted; zero usable events is fatal.
    CSV inputs require a column mapping.
    """
    parsed: list[Event] = []
    manifest: list[dict] = []

    for raw_path in paths:
        path = Path(raw_path)
        records = kept = skipped = naive_count = 0
        if path.suffix.lower() == ".csv":
            if not mapping:
                raise IngestError(f"CSV input {path.name} requires a column mapping")
            record_iter = _iter_csv(path, mapping)
        else:
            record_iter = _iter_jsonl(path)

        for line_no, payload in record_iter:
            records += 1
            if isinstance(payload, RecordParseError):
                skipped += 1
                logger.warning("%s:%d: skipping malformed line: %s", path.name, line_no, payload)
                continue
            try:
                event, was_naive = _build_event(payload)
            except RecordParseError as exc:
                skipped += 1
                logger.warning("%s:%d: skipping record: %s", path.name, line_no, exc)
                continue
            parsed.append(event)
            naive_count += int(was_naive)
            kept += 1

        manifest.append(
            {
                "path": path.name,
                "records": records,
                "kept": kept,
                "skipped": skipped,
                "naive_timestamps": naive_count,
            }
        )

    if not parsed:
        raise IngestError("no parseable records in any input file")

    parsed.sort(key=Event.sort_key)
    deduped: list[Event] = []
    seen: set[str] = set()
    for event in parsed:
        if event.event_id in seen:
            continue
        seen.add(event.event_id)
        deduped.append(event)
    dropped = len(parsed) - len(deduped)
    if dropped:
        logger.info("dropped %d duplicate event ids", dropped)

    return EventStore(
        events=tuple(deduped),
        source_manifest=tuple(manifest),
        duplicates_dropped=dropped,
    )


def write_events_jsonl(store: EventStore, path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for event in store:
            fh.write(event.to_json())
            fh.write("\n")


def write_manifest(store: EventStore, path: Path | str) -> None:
    Path(path).write_text(
        json.dumps(store.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_events_jsonl(path: Path | str) -> EventStore:
    """Load a canonical events.jsonl written by :func:`write_events_jsonl`."""
    return ingest([path])
