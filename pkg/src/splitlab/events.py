"""Wire-level event types shared by producers, the log, and both pipelines.

Two event families exist. Track events are emitted by the assignment path:
an ``exposure`` records a recruited visitor's variant, an
``unknown_identifier`` records a visitor who could not be identified and
was therefore shown control. Goal events record visitor behaviour
(conversions, commission values) and deliberately carry no experiment key:
attribution to experiments happens downstream, which is what keeps
business instrumentation decoupled from the experiment platform.

The canonical record form is a flat dict with the field names below; the
log stores records, and both pipelines consume records. The dataclasses
are the typed construction API.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ValidationFailure

KIND_EXPOSURE = "exposure"
KIND_UNKNOWN = "unknown_identifier"
KIND_GOAL = "goal"

CHANNEL_RELIABLE = "reliable"
CHANNEL_LOSSY = "lossy"

_CHANNELS = (CHANNEL_RELIABLE, CHANNEL_LOSSY)


@dataclass(slots=True)
class TrackEvent:
    """Assignment-path event: one exposure or unknown-identifier record.

    ``method``/``raw_id`` are the visitor identity; both are empty strings
    exactly when the identity is unknown.
    """

    event_id: str
    timestamp_ms: int
    experiment_key: str
    variant_index: int
    method: str
    raw_id: str
    kind: str
    producer_seq: int

    def to_record(self) -> dict:
        return {
            "event_id": self.event_id,
            "timestamp_ms": self.timestamp_ms,
            "kind": self.kind,
            "experiment_key": self.experiment_key,
            "variant_index": self.variant_index,
            "method": self.method,
            "raw_id": self.raw_id,
            "producer_seq": self.producer_seq,
        }


@dataclass(slots=True)
class GoalEvent:
    """Behaviour event: a metric observation for one visitor.

    ``drop_for`` is empty in production; the traffic simulator sets it to
    a pipeline name ("rt" or "batch") to model source divergence, and the
    per-pipeline log readers filter those records out.
    """

    event_id: str
    timestamp_ms: int
    method: str
    raw_id: str
    metric_name: str
    value: float
    channel: str = CHANNEL_RELIABLE
    drop_for: str = ""

    def to_record(self) -> dict:
        record = {
            "event_id": self.event_id,
            "timestamp_ms": self.timestamp_ms,
            "kind": KIND_GOAL,
            "method": self.method,
            "raw_id": self.raw_id,
            "metric_name": self.metric_name,
            "value": self.value,
            "channel": self.channel,
        }
        if self.drop_for:
            record["drop_for"] = self.drop_for
        return record


def validate_record(record: dict) -> None:
    """Reject records that violate the event invariants.

    Raises:
        ValidationFailure: with a message naming the offending field.
    """
    event_id = record.get("event_id")
    if not isinstance(event_id, str) or not event_id:
        raise ValidationFailure("event_id must be a non-empty string")
    kind = record.get("kind")
    if kind == KIND_GOAL:
        value = record.get("value")
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValidationFailure(f"goal value must be finite, got {value!r}")
        if not record.get("metric_name"):
            raise ValidationFailure("goal event is missing metric_name")
        if record.get("channel") not in _CHANNELS:
            raise ValidationFailure(f"unknown channel {record.get('channel')!r}")
    elif kind == KIND_EXPOSURE:
        if not record.get("experiment_key"):
            raise ValidationFailure("exposure event is missing experiment_key")
        if not record.get("raw_id"):
            raise ValidationFailure("exposure event needs a visitor identity")
    elif kind == KIND_UNKNOWN:
        if not record.get("experiment_key"):
            raise ValidationFailure("unknown-identifier event is missing experiment_key")
        if record.get("raw_id") or record.get("method"):
            raise ValidationFailure("unknown-identifier event must carry an empty identity")
    else:
        raise ValidationFailure(f"unknown event kind {kind!r}")


def encode_record(record: dict) -> str:
    """Canonical single-line encoding, stable for byte-level comparison."""
    return json.dumps(record, separators=(",", ":"))


def decode_record(line: str) -> dict:
    """Inverse of encode_record; raises ValueError on malformed input."""
    record = json.loads(line)
    if not isinstance(record, dict):
        raise ValueError("event record must be a JSON object")
    return record
