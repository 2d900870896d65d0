"""The snapshot type both aggregation pipelines publish.

This module is deliberately the only code shared between the real-time
and batch pipelines: they may agree on what a result looks like, never on
how to compute one.

Field conventions (both pipelines must implement these identically):

- ``n``: recruited visitors in the variant, deduplicated per
  (experiment, identity). Identical across all of an experiment's
  metrics; repeated per row for self-containedness.
- ``x``: distinct visitors with at least one attributed goal event for
  the metric. For binary metrics x is the statistic itself.
- ``sum`` / ``sum_sq``: sum of per-visitor totals and sum of squared
  per-visitor totals. A visitor's total is the sum of their event values
  for the metric. For binary metrics the total is 1.0 once converted,
  so sum == sum_sq == x.
- ``watermark``: the log offset up to which events are incorporated
  (exclusive). Snapshots from one ``snapshot()`` call share a watermark.
- ``snapshot_time``: the largest event timestamp incorporated, in
  simulated milliseconds; 0 before any event.
"""

from __future__ import annotations

from dataclasses import dataclass

PIPELINE_RT = "rt"
PIPELINE_BATCH = "batch"


@dataclass(frozen=True, slots=True)
class MetricSnapshot:
    experiment_key: str
    variant_index: int
    metric_name: str
    n: int
    x: int
    sum: float
    sum_sq: float
    watermark: int
    snapshot_time: int
    pipeline: str

    @property
    def mean(self) -> float:
        """Per-visitor mean of the metric; 0 when the variant is empty."""
        return self.sum / self.n if self.n else 0.0

    @property
    def variance(self) -> float:
        """Unbiased per-visitor sample variance; 0 below two visitors."""
        if self.n < 2:
            return 0.0
        centered = self.sum_sq - self.sum * self.sum / self.n
        return max(centered, 0.0) / (self.n - 1)

    def measurement(self) -> tuple:
        """The comparable content: everything except pipeline provenance."""
        return (self.experiment_key, self.variant_index, self.metric_name,
                self.n, self.x, self.sum, self.sum_sq,
                self.watermark, self.snapshot_time)

    def to_dict(self) -> dict:
        return {
            "experiment_key": self.experiment_key,
            "variant_index": self.variant_index,
            "metric_name": self.metric_name,
            "n": self.n,
            "x": self.x,
            "sum": self.sum,
            "sum_sq": self.sum_sq,
            "watermark": self.watermark,
            "snapshot_time": self.snapshot_time,
            "pipeline": self.pipeline,
        }


def by_variant(snapshots: list[MetricSnapshot],
               metric_name: str) -> dict[int, MetricSnapshot]:
    """Index one metric's snapshots by variant."""
    return {s.variant_index: s for s in snapshots if s.metric_name == metric_name}


def recruited_counts(snapshots: list[MetricSnapshot]) -> dict[int, int]:
    """Per-variant recruited counts from any snapshot set (n is metric-invariant)."""
    counts: dict[int, int] = {}
    for s in snapshots:
        counts[s.variant_index] = s.n
    return counts
