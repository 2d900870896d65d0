"""Tests for the assembled platform: wiring, ticking, freezing, staleness."""

import json

import pytest

from splitlab.assignment import AssignmentSpec, ExperimentState
from splitlab.config import PlatformConfig
from splitlab.errors import NotFoundError, StateError, ValidationFailure
from splitlab.events import TrackEvent
from splitlab.registry import PreRegistration
from splitlab.runtime import Platform
from splitlab.simulator import EffectModel, LossModel, Scenario, TrafficProfile

SALT = "0123456789abcdef0123456789abcdef"


def prereg():
    return PreRegistration("bigger photos lift conversion", "conversion",
                           "increase", ("revenue",), "all visitors", 10_000)


@pytest.fixture
def platform():
    clock = {"now": 1_000_000}
    p = Platform(PlatformConfig(), clock=lambda: clock["now"])
    p.test_clock = clock
    yield p
    p.close()


def start_experiment(platform, key="exp-a", weights=(1, 1)):
    platform.create_experiment(key, "cookie", weights, 1000,
                               preregistration=prereg(), salt=SALT,
                               actor="ana")
    platform.start_experiment(key, actor="ana")


def scenario(key="sim-a", n=10_000, seed=3, lifts=(0.0,), loss=None,
             salt="ab" * 16):
    spec = AssignmentSpec(key, salt, "cookie", (1, 1), 1000,
                          ExperimentState.RUNNING)
    return Scenario(f"test-{key}", TrafficProfile(n, seed=seed),
                    EffectModel(0.05, lifts), loss or LossModel(), spec)


class TestTracking:
    def test_recruited_appends_exposure(self, platform):
        start_experiment(platform)
        outcome = platform.track("exp-a", "cookie", "visitor-1")
        assert outcome.recruited
        assert platform.log.head == 1
        records, _ = platform.log.read(0, 10)
        assert records[0]["kind"] == "exposure"
        assert records[0]["variant_index"] == outcome.variant_index
        assert records[0]["timestamp_ms"] == 1_000_000

    def test_unknown_identifier_appends_unknown_event(self, platform):
        start_experiment(platform)
        outcome = platform.track("exp-a", "cookie", "")
        assert not outcome.recruited
        assert outcome.reason == "unknown_identifier"
        records, _ = platform.log.read(0, 10)
        assert records[0]["kind"] == "unknown_identifier"
        assert records[0]["raw_id"] == ""

    def test_not_running_leaves_no_trace(self, platform):
        platform.create_experiment("exp-a", "cookie", (1, 1), 1000,
                                   preregistration=prereg(), actor="ana")
        outcome = platform.track("exp-a", "cookie", "visitor-1")
        assert outcome.reason == "not_running"
        assert platform.log.head == 0

    def test_out_of_exposure_leaves_no_trace(self, platform):
        platform.create_experiment("exp-a", "cookie", (1, 1), 0,
                                   preregistration=prereg(), salt=SALT,
                                   actor="ana")
        platform.start_experiment("exp-a", actor="ana")
        outcome = platform.track("exp-a", "cookie", "visitor-1")
        assert outcome.reason == "out_of_exposure"
        assert platform.log.head == 0

    def test_unregistered_experiment_raises(self, platform):
        with pytest.raises(NotFoundError):
            platform.track("ghost", "cookie", "visitor-1")

    def test_goal_for_unregistered_metric_rejected(self, platform):
        start_experiment(platform)
        with pytest.raises(NotFoundError):
            platform.record_goal("made-up", "cookie", "visitor-1")

    def test_goal_batch_fills_defaults_and_appends(self, platform):
        start_experiment(platform)
        first = platform.record_goal_records([
            {"method": "cookie", "raw_id": "v1", "metric_name": "conversion",
             "value": 1.0},
            {"method": "cookie", "raw_id": "v2", "metric_name": "revenue",
             "value": 12.5},
        ])
        assert first == 0
        records, _ = platform.log.read(0, 10)
        assert all(r["event_id"] for r in records)
        assert all(r["kind"] == "goal" for r in records)

    def test_goal_batch_is_all_or_nothing(self, platform):
        start_experiment(platform)
        with pytest.raises(ValidationFailure):
            platform.record_goal_records([
                {"method": "cookie", "raw_id": "v1",
                 "metric_name": "conversion", "value": 1.0},
                {"method": "cookie", "raw_id": "v2",
                 "metric_name": "conversion", "value": float("nan")},
            ])
        assert platform.log.head == 0


class TestTicking:
    def test_tick_drains_to_head(self, platform):
        start_experiment(platform)
        for i in range(20):
            platform.track("exp-a", "cookie", f"visitor-{i:03d}")
        summary = platform.tick()
        assert summary["caught_up"]
        assert summary["watermark"] == platform.log.head
        assert platform.staleness_ticks() == 0

    def test_starved_ticks_accumulate_staleness(self, platform):
        start_experiment(platform)
        for i in range(30):
            platform.track("exp-a", "cookie", f"visitor-{i:03d}")
        for _ in range(7):
            platform.tick(max_records=1)
        assert platform.staleness_ticks() == 7
        assert platform.guardrail_status("exp-a").stale

    def test_full_tick_resets_staleness(self, platform):
        start_experiment(platform)
        for i in range(30):
            platform.track("exp-a", "cookie", f"visitor-{i:03d}")
        for _ in range(7):
            platform.tick(max_records=1)
        platform.tick()
        assert platform.staleness_ticks() == 0
        assert not platform.guardrail_status("exp-a").stale


class TestBatchCadence:
    def test_no_batch_before_first_poll(self, platform):
        start_experiment(platform)
        assert platform.run_batch() is None

    def test_clean_traffic_never_diverges(self, platform):
        platform.simulate(scenario(n=5_000))
        divergence = platform.last_divergence
        assert divergence is not None
        assert not divergence.any_flagged
        assert len(divergence.rows) > 0

    def test_rt_only_loss_flags_divergence(self, platform):
        platform.simulate(scenario(
            n=20_000, loss=LossModel(rt_only_loss=0.05)))
        divergence = platform.last_divergence
        assert divergence.any_flagged
        assert any(row.metric_name == "conversion"
                   for row in divergence.flagged_rows)

    def test_divergence_for_filters_by_experiment(self, platform):
        platform.simulate(scenario(key="sim-a", n=3_000))
        platform.simulate(scenario(key="sim-b", n=3_000, salt="cd" * 16))
        document = platform.divergence_for("sim-a")
        assert document["rows"]
        assert all(r["experiment_key"] == "sim-a" for r in document["rows"])

    def test_report_embeds_latest_divergence(self, platform):
        platform.simulate(scenario(n=3_000))
        report = platform.compose_report("sim-a")
        assert report.divergence is not None
        assert report.divergence["any_flagged"] is False


class TestLifecycleFreezing:
    def test_stop_freezes_measurements_and_report(self, platform):
        truth = platform.simulate(scenario(n=5_000))
        record = platform.stop_experiment("sim-a", actor="bo",
                                          reason="enough data")
        assert record.state is ExperimentState.STOPPED
        frozen_rows = json.loads(record.iterations[0].final_snapshot)["rows"]
        conversion_x = {r["variant_index"]: r["x"] for r in frozen_rows
                        if r["metric_name"] == "conversion"}
        assert conversion_x == {0: truth.converters[0], 1: truth.converters[1]}
        assert len(record.report_snapshots) == 1
        frozen_report = json.loads(record.report_snapshots[0])
        assert frozen_report["experiment_key"] == "sim-a"
        assert frozen_report["status"] == "ok"
        entry = platform.registry.audit_entries()[-1]
        assert entry["actor"] == "bo"
        assert entry["payload"]["reason"] == "enough data"

    def test_track_after_stop_returns_not_running(self, platform):
        platform.simulate(scenario(n=1_000))
        platform.stop_experiment("sim-a", actor="ana")
        outcome = platform.track("sim-a", "cookie", "visitor-1")
        assert not outcome.recruited
        assert outcome.reason == "not_running"

    def test_double_stop_errors(self, platform):
        platform.simulate(scenario(n=1_000))
        platform.stop_experiment("sim-a", actor="ana")
        with pytest.raises(StateError):
            platform.stop_experiment("sim-a", actor="ana")

    def test_decision_freezes_second_report(self, platform):
        platform.simulate(scenario(n=1_000))
        platform.stop_experiment("sim-a", actor="ana")
        record = platform.record_decision("sim-a", "iterate", "underpowered",
                                          actor="ana")
        assert record.state is ExperimentState.CONCLUDED
        assert len(record.report_snapshots) == 2

    def test_frozen_report_bytes_stable_across_reopen(self, tmp_path):
        config = PlatformConfig(log_dir=str(tmp_path / "data"))
        with Platform(config, clock=lambda: 1) as platform:
            platform.simulate(scenario(n=2_000))
            platform.stop_experiment("sim-a", actor="ana")
            frozen = platform.registry.get("sim-a").report_snapshots[0]
        with Platform(config, clock=lambda: 2) as reopened:
            assert reopened.registry.get("sim-a").report_snapshots[0] == frozen


class TestSimulate:
    def test_registers_and_starts_unknown_key(self, platform):
        truth = platform.simulate(scenario(n=2_000))
        record = platform.registry.get("sim-a")
        assert record.state is ExperimentState.RUNNING
        assert record.salt == "ab" * 16
        assert sum(truth.recruited) + truth.unknown_count \
            + truth.out_of_exposure == 2_000

    def test_report_coherent_immediately(self, platform):
        truth = platform.simulate(scenario(n=5_000))
        report = platform.compose_report("sim-a")
        assert report.status == "ok"
        conversion = report.blocks[0]
        assert [c.n for c in conversion.cells] == truth.recruited
        assert [c.x for c in conversion.cells] == truth.converters

    def test_stopped_experiment_rejects_traffic(self, platform):
        platform.simulate(scenario(n=1_000))
        platform.stop_experiment("sim-a", actor="ana")
        with pytest.raises(StateError):
            platform.simulate(scenario(n=1_000))

    def test_ground_truth_written_next_to_file_log(self, tmp_path):
        config = PlatformConfig(log_dir=str(tmp_path / "data"))
        with Platform(config, clock=lambda: 1) as platform:
            truth = platform.simulate(scenario(n=1_500, seed=9))
        path = tmp_path / "data" / "ground-truth-test-sim-a-9.json"
        assert json.loads(path.read_text()) == truth.to_dict()


class TestKillPath:
    def test_conversion_collapse_visible_within_two_ticks(self, platform):
        """A treatment bug zeroing conversions shows a -100% guardrail
        delta within two streaming ticks of the events landing."""
        ticks_before = platform.tick_index
        platform.simulate(scenario(n=8_000, lifts=(-0.05,)))
        status = platform.guardrail_status("sim-a")
        assert platform.tick_index - ticks_before <= 2
        row = status.rows[0]
        assert row.metric_name == "conversion"
        assert row.relative_delta == pytest.approx(-1.0)
        assert not status.stale


class TestPersistence:
    def test_reopen_replays_registry_and_log(self, tmp_path):
        config = PlatformConfig(log_dir=str(tmp_path / "data"))
        with Platform(config, clock=lambda: 1) as platform:
            platform.simulate(scenario(n=3_000))
            original = platform.compose_report("sim-a", generated_at=7)
        with Platform(config, clock=lambda: 2) as reopened:
            assert reopened.registry.get("sim-a").state \
                is ExperimentState.RUNNING
            reopened.tick()
            reopened.run_batch()
            recomputed = reopened.compose_report("sim-a", generated_at=7)
            assert recomputed.to_dict() == original.to_dict()

    def test_health_readout(self, platform):
        start_experiment(platform)
        platform.track("exp-a", "cookie", "visitor-1")
        platform.tick()
        health = platform.health()
        assert health["status"] == "ok"
        assert health["head"] == 1
        assert health["rt_watermark"] == 1
        assert health["caught_up"]
        assert health["experiments"] == 1


class TestQualityEntryPoints:
    def test_quality_check_passes_on_isolated_log(self, platform):
        start_experiment(platform)
        platform.track("exp-a", "cookie", "visitor-1")
        head_before = platform.log.head
        result = platform.quality_check()
        assert result.passed
        assert platform.log.head == head_before

    def test_aa_pool_uses_config_alpha(self, platform):
        result = platform.aa_pool(10, per_experiment_n=1_000, seed=3)
        assert result.fpr.alpha == platform.config.alpha
        again = platform.aa_pool(10, per_experiment_n=1_000, seed=3)
        assert result.to_dict() == again.to_dict()
