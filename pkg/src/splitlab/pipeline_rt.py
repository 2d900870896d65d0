"""Streaming near-real-time aggregation of the event log.

This is the speed half of the dual-pipeline design: incremental O(1)
state per event, snapshots at any moment, freshness within one tick.
By policy it shares no aggregation code with the batch pipeline (only
the snapshot type); the two are meant to disagree loudly when either
has a bug or loses data.

Semantics:

- Events are deduplicated by event_id within a rolling horizon
  (default one million ids); duplicates beyond the horizon surface as
  cross-pipeline divergence instead.
- A visitor's first exposure per experiment fixes their variant; repeat
  exposure events are delivery noise and are ignored.
- Goal events carry no experiment key: they attribute to every
  experiment that has already recruited the visitor. A goal arriving
  before any exposure is buffered within a reordering window (10,000
  events or 60 s of simulated time, whichever first) and attributed when
  exposure arrives; stragglers land in a quarantine counter.
- Records that cannot be interpreted are quarantined, never fatal: the
  stream must keep flowing.
"""

from __future__ import annotations

from collections import deque

from .events import KIND_EXPOSURE, KIND_GOAL, KIND_UNKNOWN
from .metrics import KIND_BINARY, MetricCatalog
from .snapshots import PIPELINE_RT, MetricSnapshot

DEDUP_HORIZON = 1_000_000
REORDER_EVENTS = 10_000
REORDER_MS = 60_000


class _MetricAgg:
    """Per (experiment, metric) accumulator."""

    __slots__ = ("binary", "x", "sums", "sum_sqs", "converted", "totals")

    def __init__(self, binary: bool):
        self.binary = binary
        self.x: dict[int, int] = {}
        if binary:
            self.converted: set[str] = set()
            self.totals = None
            self.sums = None
            self.sum_sqs = None
        else:
            self.converted = None
            self.totals: dict[str, float] = {}
            self.sums: dict[int, float] = {}
            self.sum_sqs: dict[int, float] = {}


class _ExperimentAgg:
    """Per-experiment streaming state."""

    __slots__ = ("assignments", "n", "unknown", "metrics")

    def __init__(self):
        self.assignments: dict[str, int] = {}
        self.n: dict[int, int] = {}
        self.unknown = 0
        self.metrics: dict[str, _MetricAgg] = {}


class _Pending:
    __slots__ = ("record", "arrival", "attributed")

    def __init__(self, record: dict, arrival: int):
        self.record = record
        self.arrival = arrival
        self.attributed = False


class RtPipeline:
    """Single-consumer streaming aggregator over one log reader."""

    def __init__(self, reader, catalog: MetricCatalog,
                 dedup_horizon: int = DEDUP_HORIZON,
                 reorder_events: int = REORDER_EVENTS,
                 reorder_ms: int = REORDER_MS):
        self._reader = reader
        self._catalog = catalog
        self._dedup_horizon = dedup_horizon
        self._reorder_events = reorder_events
        self._reorder_ms = reorder_ms
        self._watermark = 0
        self._last_ts = 0
        self._events_seen = 0
        self._seen: set[str] = set()
        self._seen_order: deque[str] = deque()
        self._experiments: dict[str, _ExperimentAgg] = {}
        self._pending: dict[str, list[_Pending]] = {}
        self._expiry: deque[tuple[int, int, str, _Pending]] = deque()
        self.duplicates = 0
        self.quarantined = 0

    @property
    def watermark(self) -> int:
        return self._watermark

    @property
    def last_timestamp(self) -> int:
        return self._last_ts

    def poll(self, max_records: int = 100_000) -> int:
        """Consume the next batch from the reader; returns records seen."""
        records, next_offset = self._reader.read(self._watermark, max_records)
        self.consume(records, advance_to=next_offset)
        return len(records)

    def caught_up(self) -> bool:
        return self._watermark >= self._reader.head

    def consume(self, records: list[dict], advance_to: int | None = None) -> None:
        """Fold a batch of records, in offset order, into the state."""
        seen = self._seen
        seen_order = self._seen_order
        experiments = self._experiments
        horizon = self._dedup_horizon
        last_ts = self._last_ts
        for record in records:
            self._events_seen += 1
            try:
                event_id = record["event_id"]
                if event_id in seen:
                    self.duplicates += 1
                    continue
                seen.add(event_id)
                seen_order.append(event_id)
                if len(seen_order) > horizon:
                    seen.discard(seen_order.popleft())
                ts = record["timestamp_ms"]
                if ts > last_ts:
                    last_ts = ts
                kind = record["kind"]
                if kind == KIND_EXPOSURE:
                    exp = experiments.get(record["experiment_key"])
                    if exp is None:
                        exp = experiments[record["experiment_key"]] = _ExperimentAgg()
                    vid = record["method"] + ":" + record["raw_id"]
                    if vid in exp.assignments:
                        continue
                    variant = record["variant_index"]
                    exp.assignments[vid] = variant
                    exp.n[variant] = exp.n.get(variant, 0) + 1
                    held = self._pending.get(vid)
                    if held:
                        for item in held:
                            if (self._events_seen - item.arrival
                                    > self._reorder_events):
                                continue
                            if (last_ts - item.record["timestamp_ms"]
                                    > self._reorder_ms):
                                continue
                            self._apply_goal(exp, vid, variant, item.record)
                            item.attributed = True
                elif kind == KIND_GOAL:
                    vid = record["method"] + ":" + record["raw_id"]
                    matched = False
                    for exp in experiments.values():
                        variant = exp.assignments.get(vid)
                        if variant is not None:
                            self._apply_goal(exp, vid, variant, record)
                            matched = True
                    if not matched:
                        item = _Pending(record, self._events_seen)
                        self._pending.setdefault(vid, []).append(item)
                        self._expiry.append((self._events_seen, ts, vid, item))
                elif kind == KIND_UNKNOWN:
                    exp = experiments.get(record["experiment_key"])
                    if exp is None:
                        exp = experiments[record["experiment_key"]] = _ExperimentAgg()
                    exp.unknown += 1
                else:
                    self.quarantined += 1
            except (KeyError, TypeError, AttributeError):
                self.quarantined += 1
        self._last_ts = last_ts
        if advance_to is not None:
            self._watermark = advance_to
        else:
            self._watermark += len(records)
        if self._expiry:
            self._sweep_pending()

    def _apply_goal(self, exp: _ExperimentAgg, vid: str, variant: int,
                    record: dict) -> None:
        name = record["metric_name"]
        agg = exp.metrics.get(name)
        if agg is None:
            if name not in self._catalog:
                self.quarantined += 1
                return
            agg = exp.metrics[name] = _MetricAgg(
                self._catalog.get(name).kind == KIND_BINARY)
        if agg.binary:
            if vid not in agg.converted:
                agg.converted.add(vid)
                agg.x[variant] = agg.x.get(variant, 0) + 1
        else:
            value = record["value"]
            before = agg.totals.get(vid)
            if before is None:
                agg.totals[vid] = value
                agg.x[variant] = agg.x.get(variant, 0) + 1
                agg.sums[variant] = agg.sums.get(variant, 0.0) + value
                agg.sum_sqs[variant] = agg.sum_sqs.get(variant, 0.0) + value * value
            else:
                after = before + value
                agg.totals[vid] = after
                agg.sums[variant] += value
                agg.sum_sqs[variant] += after * after - before * before

    def _sweep_pending(self) -> None:
        """Expire buffered goals that outlived the reordering window.

        Age is measured in records this pipeline has observed (not log
        offsets, which include records its source never delivered) and in
        simulated time; either bound expires the entry.
        """
        expiry = self._expiry
        while expiry:
            arrival, ts, vid, item = expiry[0]
            if (self._events_seen - arrival <= self._reorder_events
                    and self._last_ts - ts <= self._reorder_ms):
                break
            expiry.popleft()
            held = self._pending.get(vid)
            if held is not None:
                try:
                    held.remove(item)
                except ValueError:
                    pass
                if not held:
                    del self._pending[vid]
            if not item.attributed:
                self.quarantined += 1

    def unknown_rate(self, experiment_key: str) -> float:
        """Unknown-identifier assignments over all logged assignments."""
        exp = self._experiments.get(experiment_key)
        if exp is None:
            return 0.0
        recruited = sum(exp.n.values())
        denominator = recruited + exp.unknown
        return exp.unknown / denominator if denominator else 0.0

    def snapshot(self, experiment_key: str, variant_count: int = 0,
                 metric_names: tuple[str, ...] = ()) -> list[MetricSnapshot]:
        """Consistent cut of one experiment's aggregates.

        Variants below ``variant_count`` and every requested metric are
        always present (as zero rows if nothing was seen), so callers can
        rely on a complete grid. Unknown experiments yield rows only when
        a grid is requested.
        """
        exp = self._experiments.get(experiment_key)
        if exp is None and not (variant_count or metric_names):
            return []
        n = exp.n if exp is not None else {}
        metrics = exp.metrics if exp is not None else {}
        variants = sorted(set(n) | set(range(variant_count)))
        names = sorted(set(metrics) | set(metric_names))
        out = []
        for name in names:
            agg = metrics.get(name)
            for variant in variants:
                nv = n.get(variant, 0)
                if agg is None:
                    xv, sv, qv = 0, 0.0, 0.0
                elif agg.binary:
                    xv = agg.x.get(variant, 0)
                    sv = float(xv)
                    qv = float(xv)
                else:
                    xv = agg.x.get(variant, 0)
                    sv = agg.sums.get(variant, 0.0)
                    qv = agg.sum_sqs.get(variant, 0.0)
                out.append(MetricSnapshot(
                    experiment_key=experiment_key,
                    variant_index=variant,
                    metric_name=name,
                    n=nv,
                    x=xv,
                    sum=sv,
                    sum_sq=qv,
                    watermark=self._watermark,
                    snapshot_time=self._last_ts,
                    pipeline=PIPELINE_RT,
                ))
        return out

    def experiment_keys(self) -> list[str]:
        return sorted(self._experiments)
