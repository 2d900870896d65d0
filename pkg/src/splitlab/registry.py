"""Audited experiment registry with enforced pre-registration.

Every mutation is an audit entry (who, when, what); the registry's whole
state is a pure replay of its audit log, so two registries fed the same
entries are identical and any historical state can be reconstructed.
File-backed registries persist entries as JSON lines and replay them on
open.

Lifecycle: draft -> running -> stopped -> concluded, with
stopped -> running allowed as a new iteration under a fresh salt.
Starting requires a complete pre-registration (hypothesis, primary
metric, expected direction), which freezes at start: results may never
choose the question. Stopping freezes a canonical snapshot of the
measurements into the audit log. Concluding requires an explicit decision
with a rationale and a named decision maker.

Stopping is always an explicit, attributed act. Nothing in the platform
stops an experiment automatically; monitoring may alarm, a person pulls
the switch.
"""

from __future__ import annotations

import json
import secrets
from dataclasses import dataclass, field
from pathlib import Path

from .assignment import AssignmentSpec, ExperimentState, MethodRegistry
from .errors import (
    ConflictError,
    FrozenError,
    NotFoundError,
    StateError,
    ValidationFailure,
)
from .metrics import MetricCatalog

DIRECTION_INCREASE = "increase"
DIRECTION_DECREASE = "decrease"

OUTCOME_SHIP = "ship"
OUTCOME_ABANDON = "abandon"
OUTCOME_ITERATE = "iterate"

_OUTCOMES = (OUTCOME_SHIP, OUTCOME_ABANDON, OUTCOME_ITERATE)
_DIRECTIONS = (DIRECTION_INCREASE, DIRECTION_DECREASE)


@dataclass(frozen=True, slots=True)
class PreRegistration:
    """The question an experiment is allowed to answer, fixed up front."""

    hypothesis: str
    primary_metric: str
    expected_direction: str
    secondary_metrics: tuple[str, ...] = ()
    target_description: str = ""
    planned_sample_size: int = 0

    def validate(self, catalog: MetricCatalog) -> None:
        if not self.hypothesis.strip():
            raise ValidationFailure("pre-registration needs a hypothesis")
        if not self.primary_metric:
            raise ValidationFailure("pre-registration needs a primary metric")
        if self.primary_metric not in catalog:
            raise ValidationFailure(
                f"primary metric {self.primary_metric!r} is not registered")
        if self.expected_direction not in _DIRECTIONS:
            raise ValidationFailure(
                f"expected_direction must be one of {_DIRECTIONS}, "
                f"got {self.expected_direction!r}")
        for name in self.secondary_metrics:
            if name not in catalog:
                raise ValidationFailure(
                    f"secondary metric {name!r} is not registered")
            if name == self.primary_metric:
                raise ValidationFailure(
                    "primary metric repeated in secondary metrics")
        if self.planned_sample_size < 0:
            raise ValidationFailure("planned_sample_size must be non-negative")

    def to_dict(self) -> dict:
        return {
            "hypothesis": self.hypothesis,
            "primary_metric": self.primary_metric,
            "expected_direction": self.expected_direction,
            "secondary_metrics": list(self.secondary_metrics),
            "target_description": self.target_description,
            "planned_sample_size": self.planned_sample_size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PreRegistration":
        return cls(
            hypothesis=data["hypothesis"],
            primary_metric=data["primary_metric"],
            expected_direction=data["expected_direction"],
            secondary_metrics=tuple(data.get("secondary_metrics", ())),
            target_description=data.get("target_description", ""),
            planned_sample_size=data.get("planned_sample_size", 0),
        )


@dataclass(frozen=True, slots=True)
class DecisionRecord:
    """The attributed outcome of a concluded experiment."""

    outcome: str
    rationale: str
    decided_by: str
    decided_at: int

    def validate(self) -> None:
        if self.outcome not in _OUTCOMES:
            raise ValidationFailure(
                f"outcome must be one of {_OUTCOMES}, got {self.outcome!r}")
        if not self.rationale.strip():
            raise ValidationFailure("a decision needs a rationale")
        if not self.decided_by.strip():
            raise ValidationFailure("a decision needs a decision maker")

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "rationale": self.rationale,
            "decided_by": self.decided_by,
            "decided_at": self.decided_at,
        }


@dataclass(slots=True)
class IterationEntry:
    """One running stretch of an experiment under one salt."""

    iteration: int
    salt: str
    started_at: int
    stopped_at: int | None = None
    final_snapshot: str | None = None

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "salt": self.salt,
            "started_at": self.started_at,
            "stopped_at": self.stopped_at,
            "final_snapshot": self.final_snapshot,
        }


@dataclass(slots=True)
class ExperimentRecord:
    """The registry's view of one experiment; treat as read-only."""

    experiment_key: str
    tracking_method: str
    variant_weights: tuple[int, ...]
    exposure_buckets: int
    bucket_count: int
    salt: str
    state: ExperimentState
    description: str = ""
    team: str = ""
    product_area: str = ""
    preregistration: PreRegistration | None = None
    decision: DecisionRecord | None = None
    iterations: list[IterationEntry] = field(default_factory=list)
    report_snapshots: list[str] = field(default_factory=list)
    created_at: int = 0
    created_by: str = ""
    updated_at: int = 0

    def to_dict(self) -> dict:
        return {
            "experiment_key": self.experiment_key,
            "tracking_method": self.tracking_method,
            "variant_weights": list(self.variant_weights),
            "exposure_buckets": self.exposure_buckets,
            "bucket_count": self.bucket_count,
            "salt": self.salt,
            "state": self.state.value,
            "description": self.description,
            "team": self.team,
            "product_area": self.product_area,
            "preregistration": (self.preregistration.to_dict()
                                if self.preregistration else None),
            "decision": self.decision.to_dict() if self.decision else None,
            "iterations": [it.to_dict() for it in self.iterations],
            "report_snapshots": list(self.report_snapshots),
            "created_at": self.created_at,
            "created_by": self.created_by,
            "updated_at": self.updated_at,
        }


def freeze_snapshots(snapshots) -> str:
    """Canonical, byte-stable JSON for a snapshot set.

    Key-sorted, separator-normalized, row-ordered; equal measurement sets
    always freeze to identical bytes.
    """
    rows = sorted(
        (s.to_dict() for s in snapshots),
        key=lambda r: (r["metric_name"], r["variant_index"], r["pipeline"]))
    return json.dumps({"rows": rows}, sort_keys=True, separators=(",", ":"))


EMPTY_SNAPSHOT = freeze_snapshots(())


def freeze_report(document: dict) -> str:
    """Canonical, byte-stable JSON for a rendered report document.

    Stored reports are frozen renderings, not inputs: fetching one later
    returns exactly the bytes frozen at stop or conclude time, immune to
    any later change in how reports are computed.
    """
    return json.dumps(document, sort_keys=True, separators=(",", ":"))

_ACTIONS = ("create", "amend-prereg", "set-exposure", "start", "stop", "decide")


class AuditRegistry:
    """Event-sourced experiment store over an append-only audit log."""

    def __init__(self, catalog: MetricCatalog, methods: MethodRegistry,
                 audit_path: str | Path | None = None):
        self._catalog = catalog
        self._methods = methods
        self._records: dict[str, ExperimentRecord] = {}
        self._entries: list[dict] = []
        self._audit_file = None
        if audit_path is not None:
            path = Path(audit_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            if path.exists():
                with open(path, encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if line:
                            self._apply(json.loads(line))
            self._audit_file = open(path, "a", encoding="utf-8")

    # -- plumbing ---------------------------------------------------------

    def _record(self, key: str) -> ExperimentRecord:
        try:
            return self._records[key]
        except KeyError:
            raise NotFoundError(f"experiment {key!r} is not registered") from None

    def _commit(self, action: str, key: str, payload: dict,
                actor: str, at: int) -> ExperimentRecord:
        if not actor or not actor.strip():
            raise ValidationFailure("every registry action needs an actor")
        entry = {
            "seq": len(self._entries),
            "at": at,
            "actor": actor,
            "action": action,
            "key": key,
            "payload": payload,
        }
        record = self._apply(entry)
        if self._audit_file is not None:
            self._audit_file.write(
                json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")
            self._audit_file.flush()
        return record

    def _apply(self, entry: dict) -> ExperimentRecord:
        """Fold one audit entry into the state; replay calls this directly."""
        action = entry["action"]
        key = entry["key"]
        payload = entry["payload"]
        at = entry["at"]
        if action == "create":
            record = ExperimentRecord(
                experiment_key=key,
                tracking_method=payload["tracking_method"],
                variant_weights=tuple(payload["variant_weights"]),
                exposure_buckets=payload["exposure_buckets"],
                bucket_count=payload["bucket_count"],
                salt=payload["salt"],
                state=ExperimentState.DRAFT,
                description=payload.get("description", ""),
                team=payload.get("team", ""),
                product_area=payload.get("product_area", ""),
                preregistration=(PreRegistration.from_dict(payload["preregistration"])
                                 if payload.get("preregistration") else None),
                created_at=at,
                created_by=entry["actor"],
                updated_at=at,
            )
            self._records[key] = record
        elif action == "amend-prereg":
            record = self._records[key]
            record.preregistration = PreRegistration.from_dict(payload["preregistration"])
        elif action == "set-exposure":
            record = self._records[key]
            record.exposure_buckets = payload["exposure_buckets"]
        elif action == "start":
            record = self._records[key]
            record.state = ExperimentState.RUNNING
            record.salt = payload["salt"]
            record.iterations.append(IterationEntry(
                iteration=len(record.iterations) + 1,
                salt=payload["salt"],
                started_at=at,
            ))
        elif action == "stop":
            record = self._records[key]
            record.state = ExperimentState.STOPPED
            current = record.iterations[-1]
            current.stopped_at = at
            current.final_snapshot = payload["final_snapshot"]
            if payload.get("report") is not None:
                record.report_snapshots.append(payload["report"])
        elif action == "decide":
            record = self._records[key]
            record.state = ExperimentState.CONCLUDED
            record.decision = DecisionRecord(
                outcome=payload["outcome"],
                rationale=payload["rationale"],
                decided_by=payload["decided_by"],
                decided_at=at,
            )
            if payload.get("report") is not None:
                record.report_snapshots.append(payload["report"])
        else:
            raise ValidationFailure(f"unknown audit action {action!r}")
        record.updated_at = at
        self._entries.append(entry)
        return record

    # -- mutations --------------------------------------------------------

    def create_experiment(self, experiment_key: str, tracking_method: str,
                          variant_weights: tuple[int, ...],
                          exposure_buckets: int, *,
                          preregistration: PreRegistration | None = None,
                          description: str = "", team: str = "",
                          product_area: str = "", salt: str = "",
                          bucket_count: int = 1000,
                          actor: str, at: int) -> ExperimentRecord:
        """Register a draft experiment.

        An empty salt is filled with a fresh random one; the chosen salt
        is recorded in the audit entry so replay never re-rolls it.

        Raises:
            ConflictError: for an existing key.
            NotFoundError: for an unregistered tracking method.
            ValidationFailure: for malformed parameters.
        """
        if experiment_key in self._records:
            raise ConflictError(f"experiment {experiment_key!r} already exists")
        self._methods.get(tracking_method)
        if not salt:
            salt = secrets.token_hex(16)
        probe = AssignmentSpec(
            experiment_key=experiment_key,
            salt=salt,
            tracking_method=tracking_method,
            variant_weights=tuple(variant_weights),
            exposure_buckets=exposure_buckets,
            state=ExperimentState.DRAFT,
            bucket_count=bucket_count,
        )
        probe.validate()
        if preregistration is not None:
            preregistration.validate(self._catalog)
        payload = {
            "tracking_method": tracking_method,
            "variant_weights": list(variant_weights),
            "exposure_buckets": exposure_buckets,
            "bucket_count": bucket_count,
            "salt": salt,
            "description": description,
            "team": team,
            "product_area": product_area,
            "preregistration": (preregistration.to_dict()
                                if preregistration else None),
        }
        return self._commit("create", experiment_key, payload, actor, at)

    def amend_preregistration(self, experiment_key: str,
                              preregistration: PreRegistration, *,
                              actor: str, at: int) -> ExperimentRecord:
        """Replace the pre-registration; drafts only.

        Raises:
            FrozenError: once the experiment has ever started.
        """
        record = self._record(experiment_key)
        if record.state is not ExperimentState.DRAFT:
            raise FrozenError(
                f"pre-registration of {experiment_key!r} is frozen "
                f"in state {record.state.value}")
        preregistration.validate(self._catalog)
        payload = {"preregistration": preregistration.to_dict()}
        return self._commit("amend-prereg", experiment_key, payload, actor, at)

    def set_exposure(self, experiment_key: str, exposure_buckets: int, *,
                     actor: str, at: int) -> ExperimentRecord:
        """Adjust the exposure ramp; allowed while draft or running."""
        record = self._record(experiment_key)
        if record.state in (ExperimentState.STOPPED, ExperimentState.CONCLUDED):
            raise StateError(
                f"cannot ramp {experiment_key!r} in state {record.state.value}",
                record.state.value)
        if not 0 <= exposure_buckets <= record.bucket_count:
            raise ValidationFailure(
                f"exposure_buckets must be in [0, {record.bucket_count}], "
                f"got {exposure_buckets}")
        payload = {"exposure_buckets": exposure_buckets}
        return self._commit("set-exposure", experiment_key, payload, actor, at)

    def start_experiment(self, experiment_key: str, *,
                         actor: str, at: int) -> ExperimentRecord:
        """Move draft -> running, or stopped -> running as a new iteration.

        A draft must carry a complete pre-registration before it may
        start; from that moment the pre-registration is frozen. Restarts
        get a fresh salt so bucket placements never carry over between
        iterations.

        Raises:
            StateError: from running or concluded.
        """
        record = self._record(experiment_key)
        if record.state is ExperimentState.DRAFT:
            if record.preregistration is None:
                raise ValidationFailure(
                    f"experiment {experiment_key!r} cannot start without "
                    f"a pre-registration")
            record.preregistration.validate(self._catalog)
            salt = record.salt
        elif record.state is ExperimentState.STOPPED:
            salt = secrets.token_hex(16)
        else:
            raise StateError(
                f"cannot start {experiment_key!r} from state {record.state.value}",
                record.state.value)
        return self._commit("start", experiment_key, {"salt": salt}, actor, at)

    def stop_experiment(self, experiment_key: str, *, actor: str, at: int,
                        snapshots=None, report: dict | None = None,
                        reason: str = "") -> ExperimentRecord:
        """Move running -> stopped, freezing the final measurements.

        ``snapshots`` is the snapshot set to freeze; omitted, a minimal
        empty snapshot is frozen so the audit trail always closes the
        iteration. ``report`` is an optional rendered report document,
        frozen byte-stably into the record's report history. ``reason``
        is the actor's stated motive, kept in the audit entry.

        Raises:
            StateError: from any state but running.
        """
        record = self._record(experiment_key)
        if record.state is not ExperimentState.RUNNING:
            raise StateError(
                f"cannot stop {experiment_key!r} from state {record.state.value}",
                record.state.value)
        frozen = freeze_snapshots(snapshots) if snapshots else EMPTY_SNAPSHOT
        payload = {
            "final_snapshot": frozen,
            "report": freeze_report(report) if report is not None else None,
            "reason": reason,
        }
        return self._commit("stop", experiment_key, payload, actor, at)

    def record_decision(self, experiment_key: str, outcome: str,
                        rationale: str, *, actor: str, at: int,
                        decided_by: str = "",
                        report: dict | None = None) -> ExperimentRecord:
        """Move stopped -> concluded with an immutable decision.

        ``report``, when given, is frozen into the record's report
        history alongside the decision.

        Raises:
            StateError: unless the experiment is stopped.
            ConflictError: if a decision was already recorded.
        """
        record = self._record(experiment_key)
        if record.decision is not None:
            raise ConflictError(
                f"experiment {experiment_key!r} already has a decision")
        if record.state is not ExperimentState.STOPPED:
            raise StateError(
                f"cannot decide {experiment_key!r} in state {record.state.value}",
                record.state.value)
        decision = DecisionRecord(
            outcome=outcome,
            rationale=rationale,
            decided_by=decided_by or actor,
            decided_at=at,
        )
        decision.validate()
        payload = {
            "outcome": decision.outcome,
            "rationale": decision.rationale,
            "decided_by": decision.decided_by,
            "report": freeze_report(report) if report is not None else None,
        }
        return self._commit("decide", experiment_key, payload, actor, at)

    # -- queries ----------------------------------------------------------

    def get(self, experiment_key: str) -> ExperimentRecord:
        return self._record(experiment_key)

    def __contains__(self, experiment_key: str) -> bool:
        return experiment_key in self._records

    def __len__(self) -> int:
        return len(self._records)

    def experiment_keys(self) -> list[str]:
        return sorted(self._records)

    def all_records(self) -> list[ExperimentRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def assignment_spec(self, experiment_key: str) -> AssignmentSpec:
        """The live assignment parameters for one experiment."""
        record = self._record(experiment_key)
        return AssignmentSpec(
            experiment_key=record.experiment_key,
            salt=record.salt,
            tracking_method=record.tracking_method,
            variant_weights=record.variant_weights,
            exposure_buckets=record.exposure_buckets,
            state=record.state,
            bucket_count=record.bucket_count,
        )

    def search(self, *, status: str | None = None,
               team: str | None = None,
               product_area: str | None = None,
               tracking_method: str | None = None,
               metric: str | None = None,
               free_text: str | None = None,
               date_range: tuple[int, int] | None = None
               ) -> list[ExperimentRecord]:
        """Conjunctive filtering, newest activity first.

        ``metric`` matches the primary or any secondary metric;
        ``free_text`` searches the key, description, hypothesis, and
        decision rationale case-insensitively; ``date_range`` is an
        inclusive (low, high) window on last activity.
        """
        needle = free_text.lower() if free_text else None
        hits = []
        for record in self._records.values():
            if status is not None and record.state.value != status:
                continue
            if team is not None and record.team != team:
                continue
            if product_area is not None and record.product_area != product_area:
                continue
            if tracking_method is not None and record.tracking_method != tracking_method:
                continue
            if date_range is not None and not (
                    date_range[0] <= record.updated_at <= date_range[1]):
                continue
            if metric is not None:
                prereg = record.preregistration
                names = set()
                if prereg is not None:
                    names.add(prereg.primary_metric)
                    names.update(prereg.secondary_metrics)
                if metric not in names:
                    continue
            if needle is not None:
                haystack = [record.experiment_key, record.description]
                if record.preregistration is not None:
                    haystack.append(record.preregistration.hypothesis)
                if record.decision is not None:
                    haystack.append(record.decision.rationale)
                if not any(needle in text.lower() for text in haystack):
                    continue
            hits.append(record)
        hits.sort(key=lambda r: (-r.updated_at, r.experiment_key))
        return hits

    def audit_entries(self) -> list[dict]:
        """The full audit log; replaying it reproduces this registry."""
        return list(self._entries)

    @classmethod
    def replay(cls, entries, catalog: MetricCatalog,
               methods: MethodRegistry) -> "AuditRegistry":
        """Rebuild a registry from an audit log."""
        registry = cls(catalog, methods)
        for entry in entries:
            registry._apply(entry)
        return registry

    def state_digest(self) -> str:
        """Canonical JSON of every record, for replay-equality checks."""
        return json.dumps(
            {key: self._records[key].to_dict() for key in sorted(self._records)},
            sort_keys=True, separators=(",", ":"))

    def close(self) -> None:
        if self._audit_file is not None:
            self._audit_file.close()
            self._audit_file = None

    def __enter__(self) -> "AuditRegistry":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
