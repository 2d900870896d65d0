"""Seeded synthetic traffic with a ground-truth oracle.

Every acceptance-style check needs to know what the measurement stack
should have measured. The simulator provides that: visitors flow through
the real assignment path and the real event log, while a GroundTruth
record accumulates what actually happened (who was recruited, who truly
converted, what was dropped, duplicated, unknown, or malicious) before
any loss or delivery noise is applied.

All randomness comes from one numpy generator seeded per scenario, and
every random draw is made for every visitor regardless of branch
outcomes, so a scenario's event stream is byte-identical across runs and
machines. Timestamps are simulated milliseconds, never wall clock.

Modeling notes:

- Unknown visitors produce an unknown-identifier event and nothing else;
  with no identity there is nothing to attribute behaviour to.
- Malicious visitors carry valid identifiers and are recruited like
  anyone else (they appear in recruitment ground truth) and emit
  conversion goal events at the baseline rate regardless of variant, but
  are excluded from ground-truth converter counts and value sums: the
  gap between pipeline output and ground truth is their distortion.
- Per-pipeline source divergence is modeled by marking a goal record
  with ``drop_for``; the marked record reaches the log but the named
  pipeline's reader never sees it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from hashlib import blake2b
from pathlib import Path

import numpy as np

from .assignment import (
    UNKNOWN_IDENTITY,
    AssignmentSpec,
    ExperimentState,
    MethodRegistry,
    VisitorIdentity,
    assign,
)
from .errors import StateError, ValidationFailure
from .events import CHANNEL_LOSSY, CHANNEL_RELIABLE, KIND_EXPOSURE, KIND_GOAL, KIND_UNKNOWN


@dataclass(frozen=True)
class TrafficProfile:
    """Who shows up: volume, identity mix, and the scenario seed."""

    n_visitors: int
    method: str = "cookie"
    unknown_fraction: float = 0.0
    malicious_fraction: float = 0.0
    seed: int = 0
    start_ts: int = 1_700_000_000_000
    ms_per_visitor: int = 1
    goal_delay_ms: int = 50

    def validate(self) -> None:
        if self.n_visitors < 0:
            raise ValidationFailure("n_visitors must be non-negative")
        for name in ("unknown_fraction", "malicious_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationFailure(f"{name} must be in [0, 1], got {value}")
        if self.unknown_fraction + self.malicious_fraction > 1.0:
            raise ValidationFailure("unknown and malicious fractions overlap")

    def to_dict(self) -> dict:
        return {
            "n_visitors": self.n_visitors,
            "method": self.method,
            "unknown_fraction": self.unknown_fraction,
            "malicious_fraction": self.malicious_fraction,
            "seed": self.seed,
            "start_ts": self.start_ts,
            "ms_per_visitor": self.ms_per_visitor,
            "goal_delay_ms": self.goal_delay_ms,
        }


@dataclass(frozen=True)
class EffectModel:
    """What the variants do to behaviour.

    ``lifts`` are additive conversion-probability deltas for each
    non-control variant, in fraction units (0.01 is +1 percentage point).
    When ``real_metric_name`` is set, every true converter also emits one
    value drawn log-normally with per-variant location ``real_mu``.
    """

    baseline_rate: float
    lifts: tuple[float, ...] = (0.0,)
    real_metric_name: str = ""
    real_mu: tuple[float, ...] = ()
    real_sigma: float = 1.0

    def rate_for(self, variant: int) -> float:
        return self.baseline_rate + (self.lifts[variant - 1] if variant else 0.0)

    def validate(self, n_variants: int) -> None:
        if len(self.lifts) != n_variants - 1:
            raise ValidationFailure(
                f"need {n_variants - 1} lifts for {n_variants} variants, "
                f"got {len(self.lifts)}")
        for variant in range(n_variants):
            rate = self.rate_for(variant)
            if not 0.0 <= rate <= 1.0:
                raise ValidationFailure(
                    f"variant {variant} conversion rate {rate} outside [0, 1]")
        if self.real_metric_name:
            if len(self.real_mu) != n_variants:
                raise ValidationFailure(
                    f"real_mu needs one entry per variant ({n_variants})")
            if self.real_sigma < 0.0:
                raise ValidationFailure("real_sigma must be non-negative")

    def to_dict(self) -> dict:
        return {
            "baseline_rate": self.baseline_rate,
            "lifts": list(self.lifts),
            "real_metric_name": self.real_metric_name,
            "real_mu": list(self.real_mu),
            "real_sigma": self.real_sigma,
        }


@dataclass(frozen=True)
class LossModel:
    """What the world loses, duplicates, or splits between sources."""

    channel_loss: float = 0.0
    attrition: tuple[float, ...] = ()
    duplication_rate: float = 0.0
    rt_only_loss: float = 0.0
    batch_only_loss: float = 0.0

    def attrition_for(self, variant: int) -> float:
        return self.attrition[variant] if variant < len(self.attrition) else 0.0

    def validate(self, n_variants: int) -> None:
        probs = [self.channel_loss, self.duplication_rate,
                 self.rt_only_loss, self.batch_only_loss, *self.attrition]
        for p in probs:
            if not 0.0 <= p <= 1.0:
                raise ValidationFailure(f"loss probability {p} outside [0, 1]")
        if self.rt_only_loss + self.batch_only_loss > 1.0:
            raise ValidationFailure("rt_only_loss + batch_only_loss exceeds 1")
        if len(self.attrition) > n_variants:
            raise ValidationFailure("more attrition entries than variants")

    def to_dict(self) -> dict:
        return {
            "channel_loss": self.channel_loss,
            "attrition": list(self.attrition),
            "duplication_rate": self.duplication_rate,
            "rt_only_loss": self.rt_only_loss,
            "batch_only_loss": self.batch_only_loss,
        }


@dataclass
class GroundTruth:
    """What actually happened, independent of the measurement stack."""

    n_variants: int
    seed: int
    intended_recruited: list[int] = field(default_factory=list)
    recruited: list[int] = field(default_factory=list)
    attrited: list[int] = field(default_factory=list)
    converters: list[int] = field(default_factory=list)
    real_sums: list[float] = field(default_factory=list)
    unknown_count: int = 0
    out_of_exposure: int = 0
    malicious_count: int = 0
    malicious_converters: int = 0
    dropped_channel: int = 0
    dropped_rt_only: int = 0
    dropped_batch_only: int = 0
    duplicated: int = 0
    n_events: int = 0

    def __post_init__(self):
        for name in ("intended_recruited", "recruited", "attrited",
                     "converters"):
            if not getattr(self, name):
                setattr(self, name, [0] * self.n_variants)
        if not self.real_sums:
            self.real_sums = [0.0] * self.n_variants

    def to_dict(self) -> dict:
        return {
            "n_variants": self.n_variants,
            "seed": self.seed,
            "intended_recruited": self.intended_recruited,
            "recruited": self.recruited,
            "attrited": self.attrited,
            "converters": self.converters,
            "real_sums": self.real_sums,
            "unknown_count": self.unknown_count,
            "out_of_exposure": self.out_of_exposure,
            "malicious_count": self.malicious_count,
            "malicious_converters": self.malicious_converters,
            "dropped_channel": self.dropped_channel,
            "dropped_rt_only": self.dropped_rt_only,
            "dropped_batch_only": self.dropped_batch_only,
            "duplicated": self.duplicated,
            "n_events": self.n_events,
        }


def run_scenario(profile: TrafficProfile, effect: EffectModel,
                 loss: LossModel, spec: AssignmentSpec, log,
                 methods: MethodRegistry | None = None) -> GroundTruth:
    """Generate one scenario's traffic into a log; returns ground truth.

    Visitors pass through the production ``assign`` path one by one;
    recruited visitors emit an exposure event, convert according to the
    effect model, and converters emit goal events subject to the loss
    model. Identical inputs produce a byte-identical event stream.

    Raises:
        StateError: when the spec is not running.
        ValidationFailure: on invalid model parameters.
    """
    if spec.state is not ExperimentState.RUNNING:
        raise StateError("scenario requires a running experiment", spec.state.value)
    profile.validate()
    n_variants = len(spec.variant_weights)
    effect.validate(n_variants)
    loss.validate(n_variants)
    if methods is None:
        methods = MethodRegistry()

    n = profile.n_visitors
    rng = np.random.default_rng(profile.seed)
    id_blob = rng.bytes(8 * n) if n else b""
    role_draw = rng.random(n)
    attrition_draw = rng.random(n)
    conversion_draw = rng.random(n)
    conv_route_draw = rng.random(n)
    conv_dup_draw = rng.random(n)
    value_normals = rng.standard_normal(n)
    value_chan_draw = rng.random(n)
    value_route_draw = rng.random(n)
    value_dup_draw = rng.random(n)

    truth = GroundTruth(n_variants=n_variants, seed=profile.seed)
    eid_base = blake2b(
        f"{profile.seed}:{spec.experiment_key}".encode(), digest_size=8,
    ).hexdigest()
    eid_seq = 0
    producer_seq = 0
    method_name = profile.method
    key = spec.experiment_key
    unknown_cut = profile.unknown_fraction
    malicious_cut = unknown_cut + profile.malicious_fraction
    rt_cut = loss.rt_only_loss
    batch_cut = loss.rt_only_loss + loss.batch_only_loss
    real_name = effect.real_metric_name
    append = log.append_record

    def emit_goal(record, route, dup):
        nonlocal eid_seq
        if route < rt_cut:
            record["drop_for"] = "rt"
            truth.dropped_rt_only += 1
        elif route < batch_cut:
            record["drop_for"] = "batch"
            truth.dropped_batch_only += 1
        append(record)
        truth.n_events += 1
        if dup < loss.duplication_rate:
            append(record)
            truth.duplicated += 1
            truth.n_events += 1

    for i in range(n):
        ts = profile.start_ts + i * profile.ms_per_visitor
        role = role_draw[i]
        if role < unknown_cut:
            outcome = assign(spec, UNKNOWN_IDENTITY, methods)
            if not outcome.recruited:
                append({
                    "event_id": eid_base + f"{eid_seq:016x}",
                    "timestamp_ms": ts,
                    "kind": KIND_UNKNOWN,
                    "experiment_key": key,
                    "variant_index": 0,
                    "method": "",
                    "raw_id": "",
                    "producer_seq": producer_seq,
                })
                eid_seq += 1
                producer_seq += 1
                truth.n_events += 1
                truth.unknown_count += 1
            continue
        malicious = role < malicious_cut
        raw_id = id_blob[8 * i:8 * (i + 1)].hex()
        outcome = assign(spec, VisitorIdentity(method_name, raw_id), methods)
        if not outcome.recruited:
            truth.out_of_exposure += 1
            continue
        variant = outcome.variant_index
        truth.intended_recruited[variant] += 1
        if attrition_draw[i] < loss.attrition_for(variant):
            truth.attrited[variant] += 1
            continue
        truth.recruited[variant] += 1
        if malicious:
            truth.malicious_count += 1
        append({
            "event_id": eid_base + f"{eid_seq:016x}",
            "timestamp_ms": ts,
            "kind": KIND_EXPOSURE,
            "experiment_key": key,
            "variant_index": variant,
            "method": method_name,
            "raw_id": raw_id,
            "producer_seq": producer_seq,
        })
        eid_seq += 1
        producer_seq += 1
        truth.n_events += 1

        rate = effect.baseline_rate if malicious else effect.rate_for(variant)
        if conversion_draw[i] >= rate:
            continue
        if malicious:
            truth.malicious_converters += 1
        else:
            truth.converters[variant] += 1
        goal_ts = ts + profile.goal_delay_ms
        emit_goal({
            "event_id": eid_base + f"{eid_seq:016x}",
            "timestamp_ms": goal_ts,
            "kind": KIND_GOAL,
            "method": method_name,
            "raw_id": raw_id,
            "metric_name": "conversion",
            "value": 1.0,
            "channel": CHANNEL_RELIABLE,
        }, conv_route_draw[i], conv_dup_draw[i])
        eid_seq += 1

        if real_name and not malicious:
            value = math.exp(effect.real_mu[variant]
                             + effect.real_sigma * value_normals[i])
            truth.real_sums[variant] += value
            if value_chan_draw[i] < loss.channel_loss:
                truth.dropped_channel += 1
            else:
                emit_goal({
                    "event_id": eid_base + f"{eid_seq:016x}",
                    "timestamp_ms": goal_ts,
                    "kind": KIND_GOAL,
                    "method": method_name,
                    "raw_id": raw_id,
                    "metric_name": real_name,
                    "value": value,
                    "channel": CHANNEL_LOSSY,
                }, value_route_draw[i], value_dup_draw[i])
            eid_seq += 1
    return truth


@dataclass(frozen=True)
class Scenario:
    """A named, fully-parameterized, reproducible simulation run."""

    name: str
    profile: TrafficProfile
    effect: EffectModel
    loss: LossModel
    experiment: AssignmentSpec

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "profile": self.profile.to_dict(),
            "effect": self.effect.to_dict(),
            "loss": self.loss.to_dict(),
            "experiment": self.experiment.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        profile = data["profile"]
        effect = data["effect"]
        loss = data["loss"]
        return cls(
            name=data["name"],
            profile=TrafficProfile(
                n_visitors=profile["n_visitors"],
                method=profile.get("method", "cookie"),
                unknown_fraction=profile.get("unknown_fraction", 0.0),
                malicious_fraction=profile.get("malicious_fraction", 0.0),
                seed=profile.get("seed", 0),
                start_ts=profile.get("start_ts", 1_700_000_000_000),
                ms_per_visitor=profile.get("ms_per_visitor", 1),
                goal_delay_ms=profile.get("goal_delay_ms", 50),
            ),
            effect=EffectModel(
                baseline_rate=effect["baseline_rate"],
                lifts=tuple(effect.get("lifts", (0.0,))),
                real_metric_name=effect.get("real_metric_name", ""),
                real_mu=tuple(effect.get("real_mu", ())),
                real_sigma=effect.get("real_sigma", 1.0),
            ),
            loss=LossModel(
                channel_loss=loss.get("channel_loss", 0.0),
                attrition=tuple(loss.get("attrition", ())),
                duplication_rate=loss.get("duplication_rate", 0.0),
                rt_only_loss=loss.get("rt_only_loss", 0.0),
                batch_only_loss=loss.get("batch_only_loss", 0.0),
            ),
            experiment=AssignmentSpec.from_dict(data["experiment"]),
        )

    def run(self, log, methods: MethodRegistry | None = None) -> GroundTruth:
        return run_scenario(self.profile, self.effect, self.loss,
                            self.experiment, log, methods)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, profile=replace(self.profile, seed=seed))


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def make_attrition_scenario(dropout_t: float, n: int, *, seed: int = 0,
                            salt: str = "0" * 32,
                            baseline_rate: float = 0.05,
                            key: str = "attrition-probe") -> Scenario:
    """Selective-attrition preset: treatment visitors vanish pre-event.

    ``n`` is the total visitor count across both arms; with a 50/50 split
    and treatment dropout ``dropout_t``, expected observed recruitment is
    (n/2, n/2 * (1 - dropout_t)).

    Raises:
        ValidationFailure: when dropout_t is outside [0, 1).
    """
    if not 0.0 <= dropout_t < 1.0:
        raise ValidationFailure(f"dropout_t must be in [0, 1), got {dropout_t}")
    return Scenario(
        name=f"attrition-{dropout_t:g}",
        profile=TrafficProfile(n_visitors=n, seed=seed),
        effect=EffectModel(baseline_rate=baseline_rate, lifts=(0.0,)),
        loss=LossModel(attrition=(0.0, dropout_t)),
        experiment=AssignmentSpec(
            experiment_key=key,
            salt=salt,
            tracking_method="cookie",
            variant_weights=(1, 1),
            exposure_buckets=1000,
            state=ExperimentState.RUNNING,
        ),
    )
