"""Append-only store of feedback records and their derived annotations.

This is the structured database the QA agent ultimately operates on: raw
verbatim text comes in through `ingest`, classification and topic runs
attach annotations, and `export` produces the flat table handed to the
execution kernel.

Backed by a single SQLite file (or :memory: for tests). Concurrency model:
any number of readers, one writer at a time; all mutations take the writer
lock and each reader sees a consistent snapshot.
"""

from __future__ import annotations

import csv
import io
import json
import sqlite3
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, BinaryIO, Iterable

from .errors import (
    DuplicateId,
    LabelNotInSet,
    MissingField,
    UndecodableStream,
    UnknownDimension,
    UnknownId,
)

_CORE_FIELDS = ("id", "text", "timestamp", "language", "source")


@dataclass
class AnnotationSet:
    """Labels per dimension plus the topic phrases assigned to a record."""

    labels: dict[str, str] = field(default_factory=dict)
    topics: list[str] = field(default_factory=list)
    topic_round: int | None = None


@dataclass
class FeedbackRecord:
    id: str
    text: str
    timestamp: datetime
    language: str = "und"
    source: str = ""
    meta: dict[str, str] = field(default_factory=dict)
    annotations: AnnotationSet = field(default_factory=AnnotationSet)


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    rejection_reasons: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejection_reasons": [
                {"line": line, "reason": reason}
                for line, reason in self.rejection_reasons
            ],
        }


def parse_timestamp(value: str) -> datetime:
    """Parse an RFC3339-ish timestamp and normalize to UTC.

    Naive timestamps are taken as UTC. Raises ValueError when unparseable.
    """
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S%z").replace(
        "+0000", "+00:00"
    )


class RecordStore:
    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self._write_lock = threading.RLock()
        self._local = threading.local()
        self._memory_conn: sqlite3.Connection | None = None
        if self.path == ":memory:":
            self._memory_conn = self._connect()
        self._init_schema()

    # --- connection plumbing --------------------------------------------------

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.path, check_same_thread=False)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA foreign_keys=ON")
        return conn

    @property
    def _conn(self) -> sqlite3.Connection:
        if self._memory_conn is not None:
            return self._memory_conn
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = self._connect()
            self._local.conn = conn
        return conn

    def _init_schema(self) -> None:
        with self._write_lock:
            self._conn.executescript(
                """
                CREATE TABLE IF NOT EXISTS records (
                    id TEXT PRIMARY KEY,
                    text TEXT NOT NULL,
                    timestamp TEXT NOT NULL,
                    language TEXT NOT NULL DEFAULT 'und',
                    source TEXT NOT NULL DEFAULT '',
                    meta TEXT NOT NULL DEFAULT '{}'
                );
                CREATE TABLE IF NOT EXISTS dimensions (
                    name TEXT PRIMARY KEY,
                    labels TEXT NOT NULL
                );
                CREATE TABLE IF NOT EXISTS labels (
                    record_id TEXT NOT NULL REFERENCES records(id),
                    dimension TEXT NOT NULL,
                    value TEXT NOT NULL,
                    PRIMARY KEY (record_id, dimension)
                );
                CREATE TABLE IF NOT EXISTS label_audit (
                    record_id TEXT NOT NULL,
                    dimension TEXT NOT NULL,
                    old_value TEXT,
                    new_value TEXT NOT NULL,
                    at TEXT NOT NULL
                );
                CREATE TABLE IF NOT EXISTS record_topics (
                    record_id TEXT PRIMARY KEY REFERENCES records(id),
                    topics TEXT NOT NULL,
                    round INTEGER NOT NULL
                );
                CREATE INDEX IF NOT EXISTS idx_records_ts ON records(timestamp, id);
                """
            )
            self._conn.commit()

    def close(self) -> None:
        if self._memory_conn is not None:
            self._memory_conn.close()

    # --- dimensions -------------------------------------------------------------

    def declare_dimension(self, name: str, labels: Iterable[str]) -> None:
        labels = sorted({l.strip().lower() for l in labels if l.strip()})
        if not labels:
            raise ValueError("a dimension needs at least one label")
        with self._write_lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO dimensions(name, labels) VALUES (?, ?)",
                (name, json.dumps(labels)),
            )
            self._conn.commit()

    def dimensions(self) -> dict[str, list[str]]:
        rows = self._conn.execute("SELECT name, labels FROM dimensions").fetchall()
        return {row["name"]: json.loads(row["labels"]) for row in rows}

    # --- ingest -------------------------------------------------------------------

    def ingest(self, stream: BinaryIO | bytes, format: str) -> IngestReport:
        """Load a JSONL or CSV stream; malformed rows are counted, never dropped
        silently. The whole ingest fails only when the stream is not UTF-8."""
        if isinstance(stream, bytes):
            raw = stream
        else:
            raw = stream.read()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise UndecodableStream(f"stream is not valid UTF-8: {exc}") from exc
        if format == "jsonl":
            rows = self._iter_jsonl(text)
        elif format == "csv":
            rows = self._iter_csv(text)
        else:
            raise ValueError(f"unknown ingest format {format!r}")

        report = IngestReport()
        now = datetime.now(timezone.utc)
        with self._write_lock:
            seen: set[str] = set()
            for line_no, row, parse_error in rows:
                if parse_error is not None:
                    report.rejected += 1
                    report.rejection_reasons.append((line_no, parse_error))
                    continue
                try:
                    record = self._row_to_record(row, now)
                except MissingField as exc:
                    report.rejected += 1
                    report.rejection_reasons.append((line_no, str(exc)))
                    continue
                except ValueError as exc:
                    report.rejected += 1
                    report.rejection_reasons.append((line_no, f"bad value: {exc}"))
                    continue
                if record.id in seen or self._exists(record.id):
                    report.rejected += 1
                    report.rejection_reasons.append(
                        (line_no, f"duplicate id: {record.id}")
                    )
                    continue
                seen.add(record.id)
                self._insert(record)
                report.accepted += 1
            self._conn.commit()
        return report

    @staticmethod
    def _iter_jsonl(text: str):
        # Split on real newlines only; JSON strings may embed \x85 etc.,
        # which str.splitlines() would wrongly treat as line boundaries.
        for line_no, line in enumerate(text.replace("\r\n", "\n").split("\n"), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if not isinstance(row, dict):
                    yield line_no, None, "row is not a JSON object"
                    continue
            except json.JSONDecodeError as exc:
                yield line_no, None, f"invalid JSON: {exc.msg}"
                continue
            yield line_no, row, None

    @staticmethod
    def _iter_csv(text: str):
        reader = csv.DictReader(io.StringIO(text))
        for line_no, raw in enumerate(reader, start=2):  # header is line 1
            row: dict[str, Any] = {}
            meta: dict[str, str] = {}
            for key, value in raw.items():
                if key is None or value is None:
                    continue
                if key.startswith("meta."):
                    if value != "":
                        meta[key[5:]] = value
                elif key in _CORE_FIELDS and value != "":
                    row[key] = value
            if meta:
                row["meta"] = meta
            yield line_no, row, None

    def _row_to_record(self, row: dict, ingest_time: datetime) -> FeedbackRecord:
        # NUL bytes break CSV round-trips and most downstream tools
        rid = str(row.get("id", "") or "").replace("\x00", "").strip()
        if not rid:
            raise MissingField("id")
        text = str(row.get("text", "") or "").replace("\x00", "")
        if not text.strip():
            raise MissingField("text")
        meta = {
            str(k).replace("\x00", ""): str(v).replace("\x00", "")
            for k, v in (row.get("meta") or {}).items()
        }
        ts_raw = row.get("timestamp")
        if ts_raw is None or str(ts_raw).strip() == "":
            # Round-1 topic modeling needs a total time order, so a record
            # without a timestamp gets the ingest time, flagged in meta.
            ts = ingest_time
            meta["timestamp_assigned"] = "ingest"
        else:
            ts = parse_timestamp(str(ts_raw))
        return FeedbackRecord(
            id=rid,
            text=text,
            timestamp=ts,
            language=str(row.get("language") or "und"),
            source=str(row.get("source") or ""),
            meta=meta,
        )

    def _exists(self, record_id: str) -> bool:
        row = self._conn.execute(
            "SELECT 1 FROM records WHERE id = ?", (record_id,)
        ).fetchone()
        return row is not None

    def _insert(self, record: FeedbackRecord) -> None:
        self._conn.execute(
            "INSERT INTO records(id, text, timestamp, language, source, meta)"
            " VALUES (?, ?, ?, ?, ?, ?)",
            (
                record.id,
                record.text,
                _format_timestamp(record.timestamp),
                record.language,
                record.source,
                json.dumps(record.meta, ensure_ascii=False, sort_keys=True),
            ),
        )

    # --- query ----------------------------------------------------------------

    def count(self) -> int:
        return self._conn.execute("SELECT COUNT(*) FROM records").fetchone()[0]

    def get(self, record_id: str) -> FeedbackRecord:
        row = self._conn.execute(
            "SELECT * FROM records WHERE id = ?", (record_id,)
        ).fetchone()
        if row is None:
            raise UnknownId(f"no record with id {record_id!r}")
        return self._hydrate(row)

    def query(
        self,
        filter: dict[str, str] | None = None,
        order: str = "timestamp",
        limit: int | None = None,
    ) -> list[FeedbackRecord]:
        """Filter, order, slice. Filter keys: core fields (id, language,
        source), "topic" (membership in the assigned topic list), a meta key
        as "meta.<key>", or any declared dimension name (label equality).
        Ordering is stable: the order field, then id."""
        filter = filter or {}
        declared = self.dimensions()
        where = []
        params: list[str] = []
        topic_filter = None
        label_filters = []
        for key, value in filter.items():
            if key in ("id", "language", "source"):
                where.append(f"r.{key} = ?")
                params.append(value)
            elif key == "text":
                where.append("r.text LIKE ?")
                params.append(f"%{value}%")
            elif key == "topic":
                topic_filter = value
            elif key.startswith("meta."):
                where.append("json_extract(r.meta, ?) = ?")
                params.extend([f"$.{key[5:]}", value])
            elif key in declared:
                label_filters.append((key, value))
            else:
                raise UnknownDimension(f"unknown field or dimension {key!r}")

        sql = "SELECT r.* FROM records r"
        for i, (dim, value) in enumerate(label_filters):
            sql += (
                f" JOIN labels l{i} ON l{i}.record_id = r.id"
                f" AND l{i}.dimension = ? AND l{i}.value = ?"
            )
        label_params = [p for dim, value in label_filters for p in (dim, value)]
        if where:
            sql += " WHERE " + " AND ".join(where)

        desc = order.startswith("-")
        order_field = order.lstrip("-")
        if order_field not in ("timestamp", "id", "source", "language"):
            raise ValueError(f"cannot order by {order_field!r}")
        direction = "DESC" if desc else "ASC"
        sql += f" ORDER BY r.{order_field} {direction}, r.id {direction}"

        rows = self._conn.execute(sql, label_params + params).fetchall()
        records = [self._hydrate(row) for row in rows]
        if topic_filter is not None:
            needle = topic_filter.strip().lower()
            records = [
                r for r in records
                if needle in [t.lower() for t in r.annotations.topics]
            ]
        if limit is not None:
            records = records[:limit]
        return records

    def _hydrate(self, row: sqlite3.Row) -> FeedbackRecord:
        labels = {
            r["dimension"]: r["value"]
            for r in self._conn.execute(
                "SELECT dimension, value FROM labels WHERE record_id = ?",
                (row["id"],),
            )
        }
        topic_row = self._conn.execute(
            "SELECT topics, round FROM record_topics WHERE record_id = ?",
            (row["id"],),
        ).fetchone()
        topics = json.loads(topic_row["topics"]) if topic_row else []
        return FeedbackRecord(
            id=row["id"],
            text=row["text"],
            timestamp=parse_timestamp(row["timestamp"]),
            language=row["language"],
            source=row["source"],
            meta=json.loads(row["meta"]),
            annotations=AnnotationSet(
                labels=labels,
                topics=topics,
                topic_round=topic_row["round"] if topic_row else None,
            ),
        )

    # --- annotation -----------------------------------------------------------

    def annotate(self, record_id: str, dimension: str, value: str) -> FeedbackRecord:
        declared = self.dimensions()
        if dimension not in declared:
            raise UnknownDimension(f"dimension {dimension!r} not declared")
        value_norm = value.strip().lower()
        if value_norm not in declared[dimension]:
            raise LabelNotInSet(
                f"{value!r} not in label set of {dimension!r}: {declared[dimension]}"
            )
        with self._write_lock:
            if not self._exists(record_id):
                raise UnknownId(f"no record with id {record_id!r}")
            old = self._conn.execute(
                "SELECT value FROM labels WHERE record_id = ? AND dimension = ?",
                (record_id, dimension),
            ).fetchone()
            self._conn.execute(
                "INSERT OR REPLACE INTO labels(record_id, dimension, value)"
                " VALUES (?, ?, ?)",
                (record_id, dimension, value_norm),
            )
            self._conn.execute(
                "INSERT INTO label_audit(record_id, dimension, old_value, new_value, at)"
                " VALUES (?, ?, ?, ?, ?)",
                (
                    record_id,
                    dimension,
                    old["value"] if old else None,
                    value_norm,
                    _format_timestamp(datetime.now(timezone.utc)),
                ),
            )
            self._conn.commit()
        return self.get(record_id)

    def set_topics(
        self, record_id: str, topics: Iterable[str], round: int
    ) -> FeedbackRecord:
        cleaned: list[str] = []
        for topic in topics:
            norm = " ".join(str(topic).split()).strip()
            if norm and norm.lower() not in [c.lower() for c in cleaned]:
                cleaned.append(norm)
        with self._write_lock:
            if not self._exists(record_id):
                raise UnknownId(f"no record with id {record_id!r}")
            self._conn.execute(
                "INSERT OR REPLACE INTO record_topics(record_id, topics, round)"
                " VALUES (?, ?, ?)",
                (record_id, json.dumps(cleaned, ensure_ascii=False), round),
            )
            self._conn.commit()
        return self.get(record_id)

    def rename_topic(self, old: str, new: str) -> int:
        """Replace a topic phrase on every record carrying it; returns the
        number of records touched."""
        touched = 0
        with self._write_lock:
            rows = self._conn.execute(
                "SELECT record_id, topics, round FROM record_topics"
            ).fetchall()
            old_l = old.strip().lower()
            for row in rows:
                topics = json.loads(row["topics"])
                if old_l not in [t.lower() for t in topics]:
                    continue
                replaced = []
                for t in topics:
                    t2 = new if t.lower() == old_l else t
                    if t2.lower() not in [x.lower() for x in replaced]:
                        replaced.append(t2)
                self._conn.execute(
                    "UPDATE record_topics SET topics = ? WHERE record_id = ?",
                    (json.dumps(replaced, ensure_ascii=False), row["record_id"]),
                )
                touched += 1
            self._conn.commit()
        return touched

    # --- export ---------------------------------------------------------------

    def export_bytes(
        self,
        filter: dict[str, str] | None = None,
        format: str = "csv",
        include_annotations: bool = True,
        sentiment_dimension: str = "sentiment",
    ) -> bytes:
        """Render matching records as CSV or JSONL.

        Scalar fields round-trip through `ingest` losslessly. Annotation
        columns (label.<dimension>, topics, sentiment_score) are included
        for downstream analysis and ignored on re-ingest.
        """
        records = self.query(filter=filter, order="timestamp")
        if format == "jsonl":
            lines = []
            for r in records:
                row: dict[str, Any] = {
                    "id": r.id,
                    "text": r.text,
                    "timestamp": _format_timestamp(r.timestamp),
                    "language": r.language,
                    "source": r.source,
                    "meta": r.meta,
                }
                if include_annotations:
                    row["labels"] = r.annotations.labels
                    row["topics"] = r.annotations.topics
                    score = _sentiment_score(r.annotations.labels.get(sentiment_dimension))
                    if score is not None:
                        row["sentiment_score"] = score
                lines.append(json.dumps(row, ensure_ascii=False, sort_keys=True))
            return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
        if format != "csv":
            raise ValueError(f"unknown export format {format!r}")

        meta_keys = sorted({k for r in records for k in r.meta})
        dim_names = sorted({d for r in records for d in r.annotations.labels})
        cols = list(_CORE_FIELDS) + [f"meta.{k}" for k in meta_keys]
        if include_annotations:
            cols += [f"label.{d}" for d in dim_names] + ["topics", "topic_round"]
            if sentiment_dimension in dim_names:
                cols.append("sentiment_score")
        buf = io.StringIO()
        # default \r\n terminator so minimal quoting protects embedded \r
        writer = csv.DictWriter(buf, fieldnames=cols)
        writer.writeheader()
        for r in records:
            row = {
                "id": r.id,
                "text": r.text,
                "timestamp": _format_timestamp(r.timestamp),
                "language": r.language,
                "source": r.source,
            }
            for k in meta_keys:
                row[f"meta.{k}"] = r.meta.get(k, "")
            if include_annotations:
                for d in dim_names:
                    row[f"label.{d}"] = r.annotations.labels.get(d, "")
                row["topics"] = "; ".join(r.annotations.topics)
                row["topic_round"] = (
                    r.annotations.topic_round
                    if r.annotations.topic_round is not None
                    else ""
                )
                if sentiment_dimension in dim_names:
                    score = _sentiment_score(
                        r.annotations.labels.get(sentiment_dimension)
                    )
                    row["sentiment_score"] = "" if score is None else score
            writer.writerow(row)
        return buf.getvalue().encode("utf-8")

    def export(
        self,
        dest: str | Path,
        filter: dict[str, str] | None = None,
        format: str = "csv",
        include_annotations: bool = True,
    ) -> Path:
        """Write an export file and return its path."""
        data = self.export_bytes(
            filter=filter, format=format, include_annotations=include_annotations
        )
        dest = Path(dest)
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(data)
        return dest


_SENTIMENT_SCORES = {"negative": -1, "neutral": 0, "positive": 1}


def _sentiment_score(label: str | None) -> int | None:
    if label is None:
        return None
    return _SENTIMENT_SCORES.get(label.strip().lower())
