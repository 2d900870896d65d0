"""Append-only, offset-addressable event log with pluggable storage.

The log is the single source both aggregation pipelines read. Offsets are
dense record indices starting at 0; appends only ever extend the head and
a record at a given offset never changes. Delivery is at-least-once by
design: retrying producers may append the same event_id twice and
consumers deduplicate.

Two backends share the contract. ``FileEventLog`` stores newline-delimited
JSON records in numbered segment files under ``segments/`` with a
``manifest.json`` beside them, flushing on every append batch so a process
restart replays everything that was acknowledged. ``MemoryEventLog`` keeps
records in memory for high-volume simulation runs; consumers receive the
same record dicts either way and must treat them as read-only.

A log may be constructed with a metric gate (any container supporting
``in``); goal events naming unregistered metrics are then rejected at
append time.
"""

from __future__ import annotations

import json
import os
from bisect import bisect_right
from pathlib import Path
from typing import Container, Iterable

from .errors import OffsetRangeError, SegmentReadError, ValidationFailure
from .events import (
    KIND_GOAL,
    GoalEvent,
    TrackEvent,
    encode_record,
    validate_record,
)

_MANIFEST = "manifest.json"
_SEGMENT_DIR = "segments"


class BaseEventLog:
    """Shared validation and convenience layer over a storage backend."""

    def __init__(self, metric_gate: Container[str] | None = None):
        self._metric_gate = metric_gate

    @property
    def head(self) -> int:
        """Offset one past the last stored record."""
        raise NotImplementedError

    def _store(self, record: dict) -> int:
        raise NotImplementedError

    def _store_many(self, records: list[dict]) -> int:
        raise NotImplementedError

    def read(self, from_offset: int, max_records: int) -> tuple[list[dict], int]:
        raise NotImplementedError

    def _check(self, record: dict) -> None:
        validate_record(record)
        gate = self._metric_gate
        if gate is not None and record.get("kind") == KIND_GOAL:
            name = record["metric_name"]
            if name not in gate:
                raise ValidationFailure(f"metric {name!r} is not registered")

    def append(self, event: TrackEvent | GoalEvent) -> int:
        """Append one typed event; returns its offset."""
        return self.append_record(event.to_record())

    def append_record(self, record: dict) -> int:
        """Append one record dict (the producer wire format)."""
        self._check(record)
        return self._store(record)

    def append_records(self, records: list[dict]) -> int:
        """Append a batch; returns the offset of the first record."""
        for record in records:
            self._check(record)
        return self._store_many(records)

    def _check_range(self, from_offset: int, max_records: int) -> None:
        if from_offset < 0:
            raise OffsetRangeError(f"offset must be non-negative, got {from_offset}")
        if from_offset > self.head:
            raise OffsetRangeError(
                f"offset {from_offset} is past the head {self.head}")
        if max_records < 0:
            raise OffsetRangeError(f"max_records must be non-negative, got {max_records}")

    def iter_all(self, batch: int = 50000) -> Iterable[dict]:
        """Replay every record from offset 0 to the current head."""
        offset = 0
        head = self.head
        while offset < head:
            records, offset = self.read(offset, min(batch, head - offset))
            yield from records


class MemoryEventLog(BaseEventLog):
    """In-process backend for simulation runs and tests."""

    def __init__(self, metric_gate: Container[str] | None = None):
        super().__init__(metric_gate)
        self._records: list[dict] = []

    @property
    def head(self) -> int:
        return len(self._records)

    def _store(self, record: dict) -> int:
        self._records.append(record)
        return len(self._records) - 1

    def _store_many(self, records: list[dict]) -> int:
        first = len(self._records)
        self._records.extend(records)
        return first

    def read(self, from_offset: int, max_records: int) -> tuple[list[dict], int]:
        self._check_range(from_offset, max_records)
        end = min(from_offset + max_records, len(self._records))
        return self._records[from_offset:end], end

    def read_lines(self, from_offset: int, max_records: int) -> tuple[list[str], int]:
        records, end = self.read(from_offset, max_records)
        return [encode_record(r) for r in records], end


class FileEventLog(BaseEventLog):
    """Durable backend: JSON-lines segment files plus a manifest.

    Layout under ``root``::

        manifest.json               {"segment_records": N, "segments": [...]}
        segments/000000.log         one JSON document per line
        segments/000001.log

    The manifest lists each segment's first offset; the head is recovered
    on open by counting the last segment's lines, so a crash between the
    last manifest write and the last append loses nothing.
    """

    def __init__(self, root: str | Path,
                 metric_gate: Container[str] | None = None,
                 segment_records: int = 100_000):
        super().__init__(metric_gate)
        if segment_records < 1:
            raise ValidationFailure("segment_records must be positive")
        self._root = Path(root)
        self._segment_dir = self._root / _SEGMENT_DIR
        self._segment_dir.mkdir(parents=True, exist_ok=True)
        self._segment_records = segment_records
        self._segment_firsts: list[int] = []
        self._head = 0
        self._active = None
        self._load()

    def _segment_path(self, index: int) -> Path:
        return self._segment_dir / f"{index:06d}.log"

    def _load(self) -> None:
        manifest_path = self._root / _MANIFEST
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
            self._segment_records = manifest["segment_records"]
            self._segment_firsts = [s["first_offset"] for s in manifest["segments"]]
        else:
            names = sorted(p.name for p in self._segment_dir.glob("*.log"))
            self._segment_firsts = [i * self._segment_records for i in range(len(names))]
        if not self._segment_firsts:
            self._segment_firsts = [0]
            self._segment_path(0).touch()
            self._write_manifest()
        last = len(self._segment_firsts) - 1
        with open(self._segment_path(last), "rb") as fh:
            count = sum(1 for _ in fh)
        self._head = self._segment_firsts[last] + count
        self._active = open(self._segment_path(last), "a", encoding="utf-8")

    def _write_manifest(self) -> None:
        manifest = {
            "segment_records": self._segment_records,
            "segments": [
                {"name": f"{i:06d}.log", "first_offset": first}
                for i, first in enumerate(self._segment_firsts)
            ],
        }
        tmp = self._root / (_MANIFEST + ".tmp")
        tmp.write_text(json.dumps(manifest, indent=2))
        os.replace(tmp, self._root / _MANIFEST)

    @property
    def head(self) -> int:
        return self._head

    def _roll_if_needed(self) -> None:
        last_first = self._segment_firsts[-1]
        if self._head - last_first >= self._segment_records:
            self._active.close()
            self._segment_firsts.append(self._head)
            self._active = open(
                self._segment_path(len(self._segment_firsts) - 1), "a", encoding="utf-8")
            self._write_manifest()

    def _store(self, record: dict) -> int:
        self._roll_if_needed()
        offset = self._head
        self._active.write(encode_record(record) + "\n")
        self._active.flush()
        self._head += 1
        return offset

    def _store_many(self, records: list[dict]) -> int:
        first = self._head
        for record in records:
            self._roll_if_needed()
            self._active.write(encode_record(record) + "\n")
            self._head += 1
        self._active.flush()
        return first

    def read(self, from_offset: int, max_records: int) -> tuple[list[dict], int]:
        records = []
        for line in self.read_lines(from_offset, max_records)[0]:
            records.append(json.loads(line))
        return records, from_offset + len(records)

    def read_lines(self, from_offset: int, max_records: int) -> tuple[list[str], int]:
        """Raw stored lines, for byte-level replay comparison."""
        self._check_range(from_offset, max_records)
        self._active.flush()
        end = min(from_offset + max_records, self._head)
        lines: list[str] = []
        offset = from_offset
        while offset < end:
            seg = bisect_right(self._segment_firsts, offset) - 1
            seg_first = self._segment_firsts[seg]
            path = self._segment_path(seg)
            try:
                with open(path, encoding="utf-8") as fh:
                    for i, line in enumerate(fh):
                        pos = seg_first + i
                        if pos < offset:
                            continue
                        if pos >= end:
                            break
                        lines.append(line.rstrip("\n"))
            except OSError as exc:
                raise SegmentReadError(path.name, exc) from exc
            offset = min(end, seg_first + self._segment_records)
        return lines, from_offset + len(lines)

    def close(self) -> None:
        if self._active is not None:
            self._active.close()
            self._active = None
        self._write_manifest()

    def __enter__(self) -> "FileEventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class FilteredReader:
    """Read-side view of a log that hides simulator-marked records.

    Models per-pipeline data sources: a record marked ``drop_for == tag``
    never reached this pipeline's source, so the reader skips it while
    preserving offsets (the returned next-offset accounts for skipped
    records, keeping watermarks comparable across pipelines).
    """

    def __init__(self, log: BaseEventLog, tag: str):
        self._log = log
        self._tag = tag

    @property
    def head(self) -> int:
        return self._log.head

    def read(self, from_offset: int, max_records: int) -> tuple[list[dict], int]:
        records, next_offset = self._log.read(from_offset, max_records)
        tag = self._tag
        kept = [r for r in records if r.get("drop_for", "") != tag]
        return kept, next_offset
