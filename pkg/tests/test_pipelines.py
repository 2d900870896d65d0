"""Tests for both aggregation pipelines and their designed divergences.

The two pipelines must agree exactly on well-ordered, complete logs; on
pathological logs their disagreement is specified behaviour, asserted
here just as strictly.
"""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splitlab import pipeline_batch
from splitlab.assignment import AssignmentSpec, ExperimentState, MethodRegistry
from splitlab.errors import OffsetRangeError, ValidationFailure
from splitlab.eventlog import FilteredReader, MemoryEventLog
from splitlab.metrics import MetricCatalog
from splitlab.pipeline_rt import RtPipeline
from splitlab.simulator import EffectModel, LossModel, TrafficProfile, run_scenario
from splitlab.snapshots import by_variant

CATALOG = MetricCatalog.with_defaults()


def exposure(eid, vid, variant, key="exp-a", ts=1000):
    return {"event_id": eid, "timestamp_ms": ts, "kind": "exposure",
            "experiment_key": key, "variant_index": variant,
            "method": "cookie", "raw_id": vid, "producer_seq": 0}


def goal(eid, vid, metric="conversion", value=1.0, ts=2000):
    return {"event_id": eid, "timestamp_ms": ts, "kind": "goal",
            "method": "cookie", "raw_id": vid, "metric_name": metric,
            "value": value, "channel": "reliable"}


def unknown(eid, key="exp-a", ts=1000):
    return {"event_id": eid, "timestamp_ms": ts, "kind": "unknown_identifier",
            "experiment_key": key, "variant_index": 0, "method": "",
            "raw_id": "", "producer_seq": 0}


HAND_SCRIPT = [
    exposure("e1", "alice", 0, ts=1000),
    exposure("e2", "bob", 1, ts=1001),
    exposure("e3", "carol", 0, ts=1002),
    goal("g1", "alice", "conversion", 1.0, ts=1100),
    goal("g2", "alice", "conversion", 1.0, ts=1200),
    goal("g3", "bob", "revenue", 2.0, ts=1300),
    goal("g4", "bob", "revenue", 3.0, ts=1400),
    goal("g5", "carol", "revenue", 4.0, ts=1500),
    exposure("e4", "alice", 1, ts=1600),
]

# Derived by hand from the script above: alice and carol sit in variant 0
# (the conflicting repeat exposure e4 must not move alice), bob in
# variant 1; alice converts once despite two goal events; bob's revenue
# events total 5 so his squared per-visitor total is 25.
HAND_EXPECTED = {
    ("conversion", 0): dict(n=2, x=1, sum=1.0, sum_sq=1.0),
    ("conversion", 1): dict(n=1, x=0, sum=0.0, sum_sq=0.0),
    ("revenue", 0): dict(n=2, x=1, sum=4.0, sum_sq=16.0),
    ("revenue", 1): dict(n=1, x=1, sum=5.0, sum_sq=25.0),
}


def drive(rt):
    while not rt.caught_up():
        rt.poll()


def rt_over(records, **kwargs):
    log = MemoryEventLog()
    log.append_records([dict(r) for r in records])
    rt = RtPipeline(log, CATALOG, **kwargs)
    drive(rt)
    return rt


def check_grid(snapshots, expected, watermark, snapshot_time):
    cells = {(s.metric_name, s.variant_index): s for s in snapshots}
    assert set(cells) == set(expected)
    for cell, want in expected.items():
        s = cells[cell]
        for field_name, value in want.items():
            assert getattr(s, field_name) == value, (cell, field_name)
        assert s.watermark == watermark
        assert s.snapshot_time == snapshot_time


class TestRtAggregation:
    def test_hand_computed_script(self):
        rt = rt_over(HAND_SCRIPT)
        snaps = rt.snapshot("exp-a", 2, ("conversion", "revenue"))
        check_grid(snaps, HAND_EXPECTED, watermark=9, snapshot_time=1600)
        assert rt.quarantined == 0

    def test_duplicate_event_ids_ignored_within_horizon(self):
        records = HAND_SCRIPT + [goal("g4", "bob", "revenue", 3.0, ts=1400)]
        rt = rt_over(records)
        snaps = rt.snapshot("exp-a", 2, ("conversion", "revenue"))
        check_grid(snaps, HAND_EXPECTED, watermark=10, snapshot_time=1600)
        assert rt.duplicates == 1

    def test_duplicate_beyond_horizon_double_counts_real_sum(self):
        """Dedup state is bounded; an ancient replay inflates real sums."""
        filler = [exposure(f"f{i}", f"filler{i}", 0, key="exp-b", ts=1000 + i)
                  for i in range(6)]
        records = HAND_SCRIPT + filler + [goal("g3", "bob", "revenue", 2.0, ts=9000)]
        rt = rt_over(records, dedup_horizon=5)
        revenue = by_variant(rt.snapshot("exp-a", 2, ("revenue",)), "revenue")
        assert revenue[1].sum == 7.0
        assert revenue[1].x == 1
        assert revenue[1].sum_sq == 49.0
        assert rt.duplicates == 0

    def test_binary_immune_to_beyond_horizon_duplicate(self):
        """Replayed conversions cannot double count: x dedups by visitor."""
        filler = [exposure(f"f{i}", f"filler{i}", 0, key="exp-b", ts=1000 + i)
                  for i in range(6)]
        records = HAND_SCRIPT + filler + [goal("g1", "alice", "conversion", 1.0, ts=9000)]
        rt = rt_over(records, dedup_horizon=5)
        conv = by_variant(rt.snapshot("exp-a", 2, ("conversion",)), "conversion")
        assert conv[0].x == 1

    def test_goal_attributes_to_all_prior_exposures(self):
        records = [
            exposure("e1", "alice", 0, key="exp-a"),
            exposure("e2", "alice", 1, key="exp-b"),
            goal("g1", "alice"),
        ]
        rt = rt_over(records)
        assert by_variant(rt.snapshot("exp-a"), "conversion")[0].x == 1
        assert by_variant(rt.snapshot("exp-b"), "conversion")[1].x == 1

    def test_goal_not_attributed_to_later_exposure(self):
        """Streaming attribution is causal: exposure must precede the goal."""
        records = [
            exposure("e1", "alice", 0, key="exp-a"),
            goal("g1", "alice"),
            exposure("e2", "alice", 1, key="exp-b"),
        ]
        rt = rt_over(records)
        assert by_variant(rt.snapshot("exp-a"), "conversion")[0].x == 1
        snaps_b = rt.snapshot("exp-b", 2, ("conversion",))
        assert by_variant(snaps_b, "conversion")[1].x == 0

    def test_reordered_goal_buffered_until_exposure(self):
        records = [
            goal("g1", "dave", ts=5000),
            exposure("e1", "dave", 0, ts=5001),
        ]
        rt = rt_over(records)
        assert by_variant(rt.snapshot("exp-a"), "conversion")[0].x == 1
        assert rt.quarantined == 0

    def test_reordered_goal_expires_by_event_count(self):
        records = [goal("g1", "dave", ts=5000)]
        records += [exposure(f"e{i}", f"other{i}", 0, ts=5000 + i) for i in range(4)]
        records += [exposure("late", "dave", 0, ts=6000)]
        rt = rt_over(records, reorder_events=3)
        conv = by_variant(rt.snapshot("exp-a", 2, ("conversion",)), "conversion")
        assert conv[0].x == 0
        assert rt.quarantined == 1

    def test_reordered_goal_expires_by_simulated_time(self):
        records = [
            goal("g1", "dave", ts=5000),
            exposure("e1", "other", 0, ts=70_000),
            exposure("late", "dave", 0, ts=70_001),
        ]
        rt = rt_over(records)
        conv = by_variant(rt.snapshot("exp-a", 2, ("conversion",)), "conversion")
        assert conv[0].x == 0
        assert rt.quarantined == 1

    def test_buffered_goal_feeds_every_window_exposure(self):
        """A drained goal stays available for other experiments in window."""
        records = [
            goal("g1", "dave", ts=5000),
            exposure("e1", "dave", 0, key="exp-a", ts=5001),
            exposure("e2", "dave", 1, key="exp-b", ts=5002),
        ]
        rt = rt_over(records)
        assert by_variant(rt.snapshot("exp-a"), "conversion")[0].x == 1
        assert by_variant(rt.snapshot("exp-b"), "conversion")[1].x == 1
        assert rt.quarantined == 0

    def test_unknown_rate(self):
        records = [exposure(f"e{i}", f"v{i}", 0) for i in range(8)]
        records += [unknown(f"u{i}") for i in range(2)]
        rt = rt_over(records)
        assert rt.unknown_rate("exp-a") == pytest.approx(0.2)
        assert rt.unknown_rate("never-seen") == 0.0

    def test_malformed_records_quarantined_not_fatal(self):
        records = [
            exposure("e1", "alice", 0),
            {"event_id": "broken-1", "timestamp_ms": 1500, "kind": "goal"},
            {"event_id": "broken-2"},
            goal("g1", "alice", ts=1600),
        ]
        log = MemoryEventLog()
        log.append_record(records[0])
        # malformed records bypass append validation to model log corruption
        log._records.extend(records[1:3])
        log.append_record(records[3])
        rt = RtPipeline(log, CATALOG)
        drive(rt)
        assert rt.quarantined == 2
        assert by_variant(rt.snapshot("exp-a"), "conversion")[0].x == 1

    def test_unregistered_metric_quarantined(self):
        log = MemoryEventLog()
        log.append_record(exposure("e1", "alice", 0))
        log.append_record(goal("g1", "alice", metric="untracked-metric"))
        rt = RtPipeline(log, CATALOG)
        drive(rt)
        assert rt.quarantined == 1
        conv = by_variant(rt.snapshot("exp-a", 2, ("conversion",)), "conversion")
        assert conv[0].x == 0

    def test_snapshot_grid_zero_padded(self):
        rt = rt_over([exposure("e1", "alice", 0)])
        snaps = rt.snapshot("exp-a", 3, ("conversion", "revenue"))
        assert len(snaps) == 6
        empty = by_variant(snaps, "revenue")[2]
        assert (empty.n, empty.x, empty.sum, empty.sum_sq) == (0, 0, 0.0, 0.0)

    def test_snapshot_of_unknown_experiment(self):
        rt = rt_over([])
        assert rt.snapshot("ghost") == []
        assert len(rt.snapshot("ghost", 2, ("conversion",))) == 2

    def test_incremental_polling_matches_single_pass(self):
        log = MemoryEventLog()
        log.append_records([dict(r) for r in HAND_SCRIPT])
        rt = RtPipeline(log, CATALOG)
        while not rt.caught_up():
            rt.poll(max_records=2)
        snaps = rt.snapshot("exp-a", 2, ("conversion", "revenue"))
        check_grid(snaps, HAND_EXPECTED, watermark=9, snapshot_time=1600)

    def test_watermark_counts_filtered_offsets(self):
        log = MemoryEventLog()
        log.append_record(exposure("e1", "alice", 0))
        log.append_record(goal("g1", "alice", ts=1100))
        record = goal("g2", "alice", "revenue", 5.0, ts=1200)
        record["drop_for"] = "rt"
        log.append_record(record)
        rt = RtPipeline(FilteredReader(log, "rt"), CATALOG)
        drive(rt)
        assert rt.watermark == 3
        assert by_variant(rt.snapshot("exp-a", 2, ("revenue",)), "revenue")[0].sum == 0.0


class TestBatchAggregation:
    def test_hand_computed_script(self):
        log = MemoryEventLog()
        log.append_records([dict(r) for r in HAND_SCRIPT])
        result = pipeline_batch.run(log, log.head, CATALOG)
        check_grid(result["exp-a"], HAND_EXPECTED, watermark=9, snapshot_time=1600)

    def test_deterministic_replay(self):
        log = MemoryEventLog()
        log.append_records([dict(r) for r in HAND_SCRIPT])
        first = pipeline_batch.run(log, log.head, CATALOG)
        second = pipeline_batch.run(log, log.head, CATALOG)
        assert first == second

    def test_global_dedup_no_horizon(self):
        """Batch deduplicates across any distance, unlike the stream."""
        filler = [exposure(f"f{i}", f"filler{i}", 0, key="exp-b", ts=1000 + i)
                  for i in range(6)]
        records = HAND_SCRIPT + filler + [goal("g3", "bob", "revenue", 2.0, ts=9000)]
        log = MemoryEventLog()
        log.append_records([dict(r) for r in records])
        result = pipeline_batch.run(log, log.head, CATALOG)
        revenue = by_variant(result["exp-a"], "revenue")
        assert revenue[1].sum == 5.0

    def test_attribution_is_order_blind(self):
        """Full replay groups by visitor first: log order cannot matter."""
        records = [
            goal("g1", "alice", ts=900),
            exposure("e1", "alice", 0, ts=1000),
        ]
        log = MemoryEventLog()
        log.append_records([dict(r) for r in records])
        result = pipeline_batch.run(log, log.head, CATALOG)
        assert by_variant(result["exp-a"], "conversion")[0].x == 1

    def test_goal_of_unexposed_visitor_ignored(self):
        log = MemoryEventLog()
        log.append_record(exposure("e1", "alice", 0))
        log.append_record(goal("g1", "stranger"))
        result = pipeline_batch.run(log, log.head, CATALOG,
                                    grids={"exp-a": (2, ("conversion",))})
        assert by_variant(result["exp-a"], "conversion")[0].x == 0

    def test_partial_replay_bound(self):
        log = MemoryEventLog()
        log.append_records([dict(r) for r in HAND_SCRIPT])
        result = pipeline_batch.run(log, 3, CATALOG,
                                    grids={"exp-a": (2, ("conversion",))})
        conv = by_variant(result["exp-a"], "conversion")
        assert conv[0].n == 2 and conv[1].n == 1
        assert conv[0].x == 0
        assert conv[0].watermark == 3

    def test_replay_past_head_raises(self):
        log = MemoryEventLog()
        log.append_record(exposure("e1", "alice", 0))
        with pytest.raises(OffsetRangeError):
            pipeline_batch.run(log, 2, CATALOG)

    def test_malformed_record_is_fatal_with_offset(self):
        log = MemoryEventLog()
        log.append_record(exposure("e1", "alice", 0))
        log._records.append({"event_id": "broken", "timestamp_ms": 1})
        with pytest.raises(ValidationFailure, match="offset 1"):
            pipeline_batch.run(log, log.head, CATALOG)

    def test_unregistered_metric_is_fatal(self):
        log = MemoryEventLog()
        log.append_record(exposure("e1", "alice", 0))
        log.append_record(goal("g1", "alice", metric="untracked-metric"))
        with pytest.raises(ValidationFailure, match="untracked-metric"):
            pipeline_batch.run(log, log.head, CATALOG)

    def test_unknown_rates(self):
        log = MemoryEventLog()
        log.append_records([exposure(f"e{i}", f"v{i}", 0) for i in range(8)])
        log.append_records([unknown(f"u{i}") for i in range(2)])
        rates = pipeline_batch.unknown_rates(log, log.head)
        assert rates["exp-a"] == pytest.approx(0.2)

    def test_grid_padding(self):
        log = MemoryEventLog()
        log.append_record(exposure("e1", "alice", 0))
        result = pipeline_batch.run(
            log, log.head, CATALOG, grids={"exp-a": (2, ("conversion", "revenue")),
                                           "unseen": (2, ("conversion",))})
        assert len(result["exp-a"]) == 4
        assert len(result["unseen"]) == 2
        assert all(s.n == 0 for s in result["unseen"])


def measurements(snapshots):
    return sorted(s.measurement() for s in snapshots)


class TestCrossPipelineEquality:
    def run_both(self, log, key, metric_names):
        rt = RtPipeline(FilteredReader(log, "rt"), CATALOG)
        drive(rt)
        rt_snaps = rt.snapshot(key, 2, metric_names)
        grids = {key: (2, metric_names)}
        batch_snaps = pipeline_batch.run(
            FilteredReader(log, "batch"), rt.watermark, CATALOG, grids)[key]
        return rt_snaps, batch_snaps

    def test_simulated_traffic_exact_agreement(self):
        spec = AssignmentSpec(
            experiment_key="parity-check", salt="c" * 32,
            tracking_method="cookie", variant_weights=(1, 1),
            exposure_buckets=800, state=ExperimentState.RUNNING)
        log = MemoryEventLog(metric_gate=CATALOG)
        run_scenario(
            TrafficProfile(n_visitors=5000, unknown_fraction=0.03, seed=42),
            EffectModel(baseline_rate=0.06, lifts=(0.02,),
                        real_metric_name="revenue", real_mu=(2.0, 2.2),
                        real_sigma=0.7),
            LossModel(duplication_rate=0.02),
            spec, log, MethodRegistry())
        rt_snaps, batch_snaps = self.run_both(
            log, "parity-check", ("conversion", "revenue"))
        assert measurements(rt_snaps) == measurements(batch_snaps)

    def test_rt_only_loss_diverges_in_rt_direction(self):
        spec = AssignmentSpec(
            experiment_key="loss-check", salt="d" * 32,
            tracking_method="cookie", variant_weights=(1, 1),
            exposure_buckets=1000, state=ExperimentState.RUNNING)
        log = MemoryEventLog(metric_gate=CATALOG)
        run_scenario(
            TrafficProfile(n_visitors=5000, seed=43),
            EffectModel(baseline_rate=0.2, lifts=(0.0,)),
            LossModel(rt_only_loss=0.05),
            spec, log, MethodRegistry())
        rt_snaps, batch_snaps = self.run_both(log, "loss-check", ("conversion",))
        rt_x = sum(s.x for s in rt_snaps)
        batch_x = sum(s.x for s in batch_snaps)
        assert rt_x < batch_x
        assert sum(s.n for s in rt_snaps) == sum(s.n for s in batch_snaps)

    def test_causal_attribution_is_the_known_divergence(self):
        """Exposure after goal: batch attributes, streaming does not."""
        records = [
            exposure("e1", "alice", 0, key="exp-a"),
            goal("g1", "alice"),
            exposure("e2", "alice", 1, key="exp-b"),
        ]
        log = MemoryEventLog()
        log.append_records([dict(r) for r in records])
        rt = RtPipeline(log, CATALOG)
        drive(rt)
        batch = pipeline_batch.run(log, log.head, CATALOG)
        rt_b = rt.snapshot("exp-b", 2, ("conversion",))
        assert by_variant(rt_b, "conversion")[1].x == 0
        assert by_variant(batch["exp-b"], "conversion")[1].x == 1

    @given(n_visitors=st.integers(min_value=50, max_value=800),
           baseline=st.floats(min_value=0.05, max_value=0.5),
           lift=st.floats(min_value=-0.05, max_value=0.2),
           unknown_fraction=st.floats(min_value=0.0, max_value=0.3),
           duplication=st.floats(min_value=0.0, max_value=0.3),
           exposure_buckets=st.integers(min_value=0, max_value=1000),
           seed=st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=60, deadline=None)
    def test_agreement_property(self, n_visitors, baseline, lift,
                                unknown_fraction, duplication,
                                exposure_buckets, seed):
        """On complete logs the pipelines agree exactly, whatever the mix."""
        spec = AssignmentSpec(
            experiment_key="prop-check", salt="e" * 32,
            tracking_method="cookie", variant_weights=(1, 1),
            exposure_buckets=exposure_buckets, state=ExperimentState.RUNNING)
        log = MemoryEventLog(metric_gate=CATALOG)
        run_scenario(
            TrafficProfile(n_visitors=n_visitors,
                           unknown_fraction=unknown_fraction, seed=seed),
            EffectModel(baseline_rate=baseline, lifts=(lift,),
                        real_metric_name="revenue", real_mu=(1.0, 1.1),
                        real_sigma=0.4),
            LossModel(duplication_rate=duplication),
            spec, log, MethodRegistry())
        rt_snaps, batch_snaps = self.run_both(
            log, "prop-check", ("conversion", "revenue"))
        assert measurements(rt_snaps) == measurements(batch_snaps)
