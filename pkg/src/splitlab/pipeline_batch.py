"""Full-replay batch aggregation over the event log.

The trust half of the dual-pipeline design: a deterministic pure
function of the log contents, allowed unbounded memory, deliberately
organized differently from the streaming pipeline (replay and group by
visitor first, reduce second) so the two implementations share nothing
but the snapshot type. Agreement between the two is evidence the data
can be trusted; disagreement is a measurement, not an error.

Batch never skips data silently: an unreadable segment is a hard
failure, and a record that cannot be interpreted raises with its offset
rather than being dropped.
"""

from __future__ import annotations

from .errors import OffsetRangeError, ValidationFailure
from .events import KIND_EXPOSURE, KIND_GOAL, KIND_UNKNOWN
from .metrics import KIND_BINARY, MetricCatalog
from .snapshots import PIPELINE_BATCH, MetricSnapshot

_READ_BATCH = 50_000


def run(reader, up_to_offset: int, catalog: MetricCatalog,
        grids: dict[str, tuple[int, tuple[str, ...]]] | None = None
        ) -> dict[str, list[MetricSnapshot]]:
    """Replay the log up to an offset and aggregate everything.

    Args:
        reader: Log or filtered view exposing ``read`` and ``head``.
        up_to_offset: Exclusive replay bound; must not exceed the head.
        catalog: Metric catalog used to classify goal values.
        grids: Optional per-experiment (variant_count, metric_names)
            padding so empty cells still produce zero rows, mirroring the
            streaming pipeline's snapshot signature.

    Returns:
        Snapshots per experiment key, each list a complete grid at
        watermark ``up_to_offset``.

    Raises:
        OffsetRangeError: when up_to_offset is past the head.
        ValidationFailure: on a record that cannot be interpreted.
        SegmentReadError: surfaced from storage on unreadable segments.
    """
    if up_to_offset > reader.head:
        raise OffsetRangeError(
            f"cannot replay to {up_to_offset}, head is {reader.head}")

    # Phase 1: replay. Group exposures into per-experiment visitor maps
    # and goal values into per-visitor totals, deduplicating globally.
    seen_ids: set[str] = set()
    variant_of: dict[str, dict[str, int]] = {}
    unknown: dict[str, int] = {}
    goals: dict[str, dict[str, float]] = {}
    goal_counts: dict[str, dict[str, int]] = {}
    max_ts = 0

    offset = 0
    while offset < up_to_offset:
        records, next_offset = reader.read(
            offset, min(_READ_BATCH, up_to_offset - offset))
        for position, record in enumerate(records):
            try:
                event_id = record["event_id"]
                if event_id in seen_ids:
                    continue
                seen_ids.add(event_id)
                ts = record["timestamp_ms"]
                if ts > max_ts:
                    max_ts = ts
                kind = record["kind"]
                if kind == KIND_EXPOSURE:
                    key = record["experiment_key"]
                    visitors = variant_of.setdefault(key, {})
                    vid = record["method"] + ":" + record["raw_id"]
                    if vid not in visitors:
                        visitors[vid] = record["variant_index"]
                    unknown.setdefault(key, 0)
                elif kind == KIND_GOAL:
                    vid = record["method"] + ":" + record["raw_id"]
                    name = record["metric_name"]
                    per_metric = goals.setdefault(vid, {})
                    per_metric[name] = per_metric.get(name, 0.0) + record["value"]
                    counts = goal_counts.setdefault(vid, {})
                    counts[name] = counts.get(name, 0) + 1
                elif kind == KIND_UNKNOWN:
                    key = record["experiment_key"]
                    unknown[key] = unknown.get(key, 0) + 1
                    variant_of.setdefault(key, {})
                else:
                    raise ValidationFailure(f"unknown event kind {kind!r}")
            except (KeyError, TypeError) as exc:
                raise ValidationFailure(
                    f"malformed record at offset {offset + position}: {exc!r}"
                ) from exc
        offset = next_offset

    # Phase 2: reduce per experiment. A visitor's goals attribute to every
    # experiment that recruited them anywhere in the replayed range.
    grids = grids or {}
    result: dict[str, list[MetricSnapshot]] = {}
    for key in sorted(set(variant_of) | set(grids)):
        visitors = variant_of.get(key, {})
        variant_count, wanted = grids.get(key, (0, ()))

        n: dict[int, int] = {}
        for variant in visitors.values():
            n[variant] = n.get(variant, 0) + 1

        metric_names: set[str] = set(wanted)
        x: dict[tuple[str, int], int] = {}
        sums: dict[tuple[str, int], float] = {}
        sum_sqs: dict[tuple[str, int], float] = {}
        for vid, variant in visitors.items():
            per_metric = goals.get(vid)
            if not per_metric:
                continue
            for name, total in per_metric.items():
                if name not in catalog:
                    raise ValidationFailure(
                        f"goal event names unregistered metric {name!r}")
                metric_names.add(name)
                cell = (name, variant)
                x[cell] = x.get(cell, 0) + 1
                if catalog.get(name).kind == KIND_BINARY:
                    continue
                sums[cell] = sums.get(cell, 0.0) + total
                sum_sqs[cell] = sum_sqs.get(cell, 0.0) + total * total

        variants = sorted(set(n) | set(range(variant_count)))
        rows = []
        for name in sorted(metric_names):
            binary = catalog.get(name).kind == KIND_BINARY if name in catalog else True
            for variant in variants:
                cell = (name, variant)
                xv = x.get(cell, 0)
                if binary:
                    sv, qv = float(xv), float(xv)
                else:
                    sv = sums.get(cell, 0.0)
                    qv = sum_sqs.get(cell, 0.0)
                rows.append(MetricSnapshot(
                    experiment_key=key,
                    variant_index=variant,
                    metric_name=name,
                    n=n.get(variant, 0),
                    x=xv,
                    sum=sv,
                    sum_sq=qv,
                    watermark=up_to_offset,
                    snapshot_time=max_ts,
                    pipeline=PIPELINE_BATCH,
                ))
        result[key] = rows
    return result


def unknown_rates(reader, up_to_offset: int) -> dict[str, float]:
    """Unknown-identifier rate per experiment from a fresh replay."""
    seen: set[str] = set()
    recruited: dict[str, set[str]] = {}
    unknown: dict[str, int] = {}
    offset = 0
    while offset < up_to_offset:
        records, offset = reader.read(
            offset, min(_READ_BATCH, up_to_offset - offset))
        for record in records:
            event_id = record.get("event_id")
            if event_id in seen:
                continue
            seen.add(event_id)
            kind = record.get("kind")
            if kind == KIND_EXPOSURE:
                vid = record["method"] + ":" + record["raw_id"]
                recruited.setdefault(record["experiment_key"], set()).add(vid)
            elif kind == KIND_UNKNOWN:
                key = record["experiment_key"]
                unknown[key] = unknown.get(key, 0) + 1
    rates = {}
    for key in set(recruited) | set(unknown):
        u = unknown.get(key, 0)
        total = len(recruited.get(key, ())) + u
        rates[key] = u / total if total else 0.0
    return rates
