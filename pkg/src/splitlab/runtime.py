"""The assembled platform: one log, two pipelines, one registry.

Platform owns the wiring the spec-level modules deliberately avoid:
which log the pipelines read, when the streaming pipeline ticks, when
the batch replay runs and is compared against it, and what gets frozen
into the audit trail at stop and conclude time.

Timing is logical, not threaded. ``tick()`` advances the streaming
pipeline one poll interval and ``run_batch()`` performs one batch
cadence; the HTTP service drives both from timers, tests drive them
directly. Staleness is measured in ticks: a tick is covered once the
streaming watermark has passed the log head observed at that tick's
start, and the guardrail status reports how many ticks back the newest
covered one lies.
"""

from __future__ import annotations

import json
import time
import uuid
from collections import deque
from pathlib import Path

from .assignment import (
    AssignmentOutcome,
    MethodRegistry,
    VisitorIdentity,
    assign,
)
from .config import PlatformConfig
from .errors import NotFoundError, StateError
from .eventlog import FileEventLog, FilteredReader, MemoryEventLog
from .events import CHANNEL_RELIABLE, GoalEvent, TrackEvent
from .guardrails import GuardrailStatus, Report, compose_report, guardrail_status
from .metrics import MetricCatalog
from .pipeline_batch import run as batch_run
from .pipeline_rt import RtPipeline
from .quality import (
    AaPoolResult,
    ControlledCheckResult,
    DiscrepancyReport,
    aa_pool_run,
    compare_pipelines,
    make_controlled_scenario,
    run_controlled_input_check,
)
from .registry import AuditRegistry, ExperimentRecord, PreRegistration
from .simulator import GroundTruth, Scenario, run_scenario


def _wall_clock_ms() -> int:
    return time.time_ns() // 1_000_000


class Platform:
    """Everything behind the API, assembled per one config."""

    def __init__(self, config: PlatformConfig, *,
                 catalog: MetricCatalog | None = None,
                 methods: MethodRegistry | None = None,
                 clock=None):
        config.validate()
        self.config = config
        self.catalog = catalog if catalog is not None else MetricCatalog.with_defaults()
        self.methods = methods if methods is not None else MethodRegistry()
        self.clock = clock if clock is not None else _wall_clock_ms
        gate = set(self.catalog.names())
        if config.log_dir:
            root = Path(config.log_dir)
            root.mkdir(parents=True, exist_ok=True)
            self.log = FileEventLog(root / "events", metric_gate=gate)
            audit_path = root / "audit.jsonl"
        else:
            self.log = MemoryEventLog(metric_gate=gate)
            audit_path = None
        self.registry = AuditRegistry(self.catalog, self.methods, audit_path)
        self.rt = RtPipeline(FilteredReader(self.log, "rt"), self.catalog)
        self._batch_reader = FilteredReader(self.log, "batch")
        self._producer_seq = 0
        self._tick_index = 0
        self._tick_marks: deque[tuple[int, int]] = deque(maxlen=256)
        self._divergence: DiscrepancyReport | None = None
        self._batch_snapshots: dict[str, list] = {}

    # -- time and ticking ---------------------------------------------------

    def now_ms(self) -> int:
        return int(self.clock())

    @property
    def tick_index(self) -> int:
        return self._tick_index

    def tick(self, max_records: int | None = None) -> dict:
        """Advance the streaming pipeline one poll interval.

        With no cap the pipeline drains to the log head, the healthy
        steady state. A cap starves it deliberately, which is how tests
        manufacture staleness.
        """
        head_at_start = self.log.head
        if max_records is None:
            while not self.rt.caught_up():
                self.rt.poll()
        else:
            self.rt.poll(max_records)
        self._tick_index += 1
        self._tick_marks.append((self._tick_index, head_at_start))
        return {
            "tick": self._tick_index,
            "watermark": self.rt.watermark,
            "head": self.log.head,
            "caught_up": self.rt.caught_up(),
        }

    def staleness_ticks(self) -> int:
        """How many ticks back the newest fully-processed tick lies."""
        covered = 0
        for tick, head in self._tick_marks:
            if self.rt.watermark >= head:
                covered = tick
        return self._tick_index - covered

    # -- ingestion ------------------------------------------------------------

    def track(self, experiment_key: str, method: str, raw_id: str,
              at: int | None = None) -> AssignmentOutcome:
        """Assign a visitor and record the exposure.

        Recruited visitors append an exposure event; unknown or invalid
        identifiers append an unknown-identifier event (they are shown
        control behavior and every such case is observable in the data).
        Visitors outside the ramp or hitting a non-running experiment
        leave no trace: nothing was shown, nothing is measured.
        """
        spec = self.registry.assignment_spec(experiment_key)
        outcome = assign(spec, VisitorIdentity(method, raw_id), self.methods)
        ts = self.now_ms() if at is None else at
        if outcome.recruited:
            self._producer_seq += 1
            self.log.append(TrackEvent(
                event_id=uuid.uuid4().hex,
                timestamp_ms=ts,
                experiment_key=experiment_key,
                variant_index=outcome.variant_index,
                method=method,
                raw_id=raw_id,
                kind="exposure",
                producer_seq=self._producer_seq,
            ))
        elif outcome.reason == "unknown_identifier":
            self._producer_seq += 1
            self.log.append(TrackEvent(
                event_id=uuid.uuid4().hex,
                timestamp_ms=ts,
                experiment_key=experiment_key,
                variant_index=0,
                method="",
                raw_id="",
                kind="unknown_identifier",
                producer_seq=self._producer_seq,
            ))
        return outcome

    def record_goal(self, metric_name: str, method: str, raw_id: str,
                    value: float = 1.0, *, at: int | None = None,
                    event_id: str = "",
                    channel: str = CHANNEL_RELIABLE) -> int:
        """Append one goal event; returns its log offset."""
        self.catalog.get(metric_name)
        return self.log.append(GoalEvent(
            event_id=event_id or uuid.uuid4().hex,
            timestamp_ms=self.now_ms() if at is None else at,
            method=method,
            raw_id=raw_id,
            metric_name=metric_name,
            value=value,
            channel=channel,
        ))

    def record_goal_records(self, records: list[dict]) -> int:
        """Append a batch of raw goal records; returns the first offset.

        Records missing an event_id or timestamp get one assigned, so
        producers without their own id scheme still deduplicate within
        a batch retry only if they supply ids.
        """
        prepared = []
        for record in records:
            record = dict(record)
            record.setdefault("event_id", uuid.uuid4().hex)
            record.setdefault("timestamp_ms", self.now_ms())
            record.setdefault("channel", CHANNEL_RELIABLE)
            record.setdefault("kind", "goal")
            prepared.append(record)
        return self.log.append_records(prepared)

    # -- experiment lifecycle -------------------------------------------------

    def create_experiment(self, experiment_key: str, tracking_method: str,
                          variant_weights, exposure_buckets: int, *,
                          preregistration: PreRegistration | dict | None = None,
                          description: str = "", team: str = "",
                          product_area: str = "", salt: str = "",
                          actor: str, at: int | None = None) -> ExperimentRecord:
        if isinstance(preregistration, dict):
            preregistration = PreRegistration.from_dict(preregistration)
        return self.registry.create_experiment(
            experiment_key, tracking_method, tuple(variant_weights),
            exposure_buckets, preregistration=preregistration,
            description=description, team=team, product_area=product_area,
            salt=salt, actor=actor,
            at=self.now_ms() if at is None else at)

    def start_experiment(self, experiment_key: str, *, actor: str,
                         at: int | None = None) -> ExperimentRecord:
        return self.registry.start_experiment(
            experiment_key, actor=actor,
            at=self.now_ms() if at is None else at)

    def stop_experiment(self, experiment_key: str, *, actor: str,
                        reason: str = "",
                        at: int | None = None) -> ExperimentRecord:
        """Stop and freeze: measurements and the rendered report.

        The composed report is rendered before the transition so the
        frozen copy shows the experiment as it looked at stop time.
        Stopping is never automated; this is only reachable through an
        explicit, attributed call.
        """
        record = self.registry.get(experiment_key)
        if record.state.value != "running":
            raise StateError(
                f"cannot stop {experiment_key!r} from state {record.state.value}",
                record.state.value)
        ts = self.now_ms() if at is None else at
        snapshots = self._rt_grid(experiment_key)
        report = self.compose_report(experiment_key, generated_at=ts)
        return self.registry.stop_experiment(
            experiment_key, actor=actor, at=ts,
            snapshots=snapshots, report=report.to_dict(), reason=reason)

    def record_decision(self, experiment_key: str, outcome: str,
                        rationale: str, *, actor: str,
                        decided_by: str = "",
                        at: int | None = None) -> ExperimentRecord:
        ts = self.now_ms() if at is None else at
        report = self.compose_report(experiment_key, generated_at=ts)
        return self.registry.record_decision(
            experiment_key, outcome, rationale, actor=actor, at=ts,
            decided_by=decided_by, report=report.to_dict())

    # -- reporting --------------------------------------------------------

    def _grid_names(self) -> tuple[str, ...]:
        return tuple(self.catalog.names())

    def _rt_grid(self, experiment_key: str) -> list:
        record = self.registry.get(experiment_key)
        return self.rt.snapshot(experiment_key,
                                len(record.variant_weights),
                                self._grid_names())

    def compose_report(self, experiment_key: str, *,
                       generated_at: int | None = None) -> Report:
        record = self.registry.get(experiment_key)
        return compose_report(
            record, self._rt_grid(experiment_key), self.catalog,
            unknown_rate=self.rt.unknown_rate(experiment_key),
            divergence=self.divergence_for(experiment_key),
            alpha=self.config.alpha,
            srm_threshold=self.config.srm_threshold,
            generated_at=self.now_ms() if generated_at is None else generated_at)

    def guardrail_status(self, experiment_key: str, *,
                         generated_at: int | None = None) -> GuardrailStatus:
        record = self.registry.get(experiment_key)
        return guardrail_status(
            record, self._rt_grid(experiment_key), self.catalog,
            staleness_ticks=self.staleness_ticks(),
            alpha=self.config.alpha,
            generated_at=self.now_ms() if generated_at is None else generated_at)

    # -- batch cadence and quality ------------------------------------------

    def run_batch(self) -> DiscrepancyReport | None:
        """One batch cadence: full replay up to the rt watermark, compared.

        Replaying to the streaming watermark pins both snapshot sets to
        one cut of the log, which is what makes the comparison
        meaningful. Returns None before the streaming pipeline has
        processed anything.
        """
        up_to = self.rt.watermark
        if up_to == 0:
            return None
        grids = {}
        for key in self.registry.experiment_keys():
            record = self.registry.get(key)
            grids[key] = (len(record.variant_weights), self._grid_names())
        self._batch_snapshots = batch_run(
            self._batch_reader, up_to, self.catalog, grids=grids)
        batch_rows = [row for rows in self._batch_snapshots.values()
                      for row in rows]
        rt_rows = []
        keys = set(self.registry.experiment_keys()) | set(self.rt.experiment_keys())
        for key in sorted(keys):
            if key in grids:
                rt_rows.extend(self._rt_grid(key))
            else:
                rt_rows.extend(self.rt.snapshot(key))
        self._divergence = compare_pipelines(
            rt_rows, batch_rows, self.config.divergence_tolerance, self.catalog)
        return self._divergence

    @property
    def last_divergence(self) -> DiscrepancyReport | None:
        return self._divergence

    def divergence_for(self, experiment_key: str) -> dict | None:
        """The latest comparison, cut down to one experiment's rows."""
        if self._divergence is None:
            return None
        document = self._divergence.to_dict()
        document["rows"] = [row for row in document["rows"]
                            if row["experiment_key"] == experiment_key]
        document["any_flagged"] = any(row["divergence_flagged"]
                                      for row in document["rows"])
        return document

    def quality_check(self, scenario=None) -> ControlledCheckResult:
        """Run the controlled-input probe on an isolated log."""
        probe_scenario = scenario if scenario is not None \
            else make_controlled_scenario()
        probe_log = MemoryEventLog(metric_gate=set(self.catalog.names()))
        probe_rt = RtPipeline(FilteredReader(probe_log, "rt"), self.catalog)
        return run_controlled_input_check(
            probe_log, probe_rt, self.catalog, probe_scenario,
            batch_reader=FilteredReader(probe_log, "batch"))

    def aa_pool(self, pool_size: int, *, per_experiment_n: int = 10_000,
                seed: int = 0) -> AaPoolResult:
        return aa_pool_run(
            pool_size, per_experiment_n=per_experiment_n,
            alpha=self.config.alpha, seed=seed,
            srm_threshold=self.config.srm_threshold)

    # -- simulation -------------------------------------------------------

    def simulate(self, scenario: Scenario, *, actor: str = "simulator"
                 ) -> GroundTruth:
        """Run a scenario against the platform's own log.

        An unregistered experiment key is created and started from the
        scenario's spec (same salt, so assignment matches the scenario
        exactly); a registered one must already be running. After the
        events land, the pipeline is ticked to the head and one batch
        cadence runs, so reports are immediately coherent.

        With a file-backed log the ground truth is written next to it
        as JSON, keyed by scenario name and seed.
        """
        spec = scenario.experiment
        key = spec.experiment_key
        if key not in self.registry:
            self.registry.create_experiment(
                key, spec.tracking_method, spec.variant_weights,
                spec.exposure_buckets,
                preregistration=PreRegistration(
                    hypothesis=f"simulated scenario {scenario.name}",
                    primary_metric="conversion",
                    expected_direction="increase",
                    secondary_metrics=(("revenue",)
                                       if scenario.effect.real_metric_name
                                       else ()),
                    target_description="synthetic traffic",
                    planned_sample_size=scenario.profile.n_visitors),
                description=f"scenario {scenario.name}",
                salt=spec.salt, bucket_count=spec.bucket_count,
                actor=actor, at=self.now_ms())
            self.registry.start_experiment(key, actor=actor, at=self.now_ms())
        live = self.registry.assignment_spec(key)
        if live.state.value != "running":
            raise StateError(
                f"experiment {key!r} is not running", live.state.value)
        truth = run_scenario(scenario.profile, scenario.effect, scenario.loss,
                             live, self.log, self.methods)
        self.tick()
        self.run_batch()
        if self.config.log_dir:
            path = (Path(self.config.log_dir) /
                    f"ground-truth-{scenario.name}-{scenario.profile.seed}.json")
            path.write_text(json.dumps(truth.to_dict(), indent=2) + "\n",
                            encoding="utf-8")
        return truth

    # -- introspection ------------------------------------------------------

    def health(self) -> dict:
        return {
            "status": "ok",
            "head": self.log.head,
            "rt_watermark": self.rt.watermark,
            "tick": self._tick_index,
            "caught_up": self.rt.caught_up(),
            "experiments": len(self.registry),
        }

    def close(self) -> None:
        self.registry.close()
        close = getattr(self.log, "close", None)
        if close is not None:
            close()

    def __enter__(self) -> "Platform":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
