"""Data-trust machinery: divergence monitoring, controlled probes, AA pool.

Three independent lines of evidence establish that the numbers can be
trusted. The two aggregation pipelines are compared metric by metric and
any relative difference beyond tolerance is flagged. Controlled-input
probes feed a script with exactly known counts end to end and demand the
pipelines report those counts exactly. And a pool of AA experiments
(treatment identical to control) exercises the entire stack to verify
the advertised false positive rate and a uniform p-value distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentSpec, ExperimentState, MethodRegistry
from .errors import ValidationFailure, WatermarkMismatchError
from .eventlog import FilteredReader, MemoryEventLog
from .events import KIND_EXPOSURE, KIND_GOAL
from .metrics import KIND_BINARY, MetricCatalog
from .pipeline_rt import RtPipeline
from .snapshots import MetricSnapshot
from .stats import FprReport, TestResult, aa_false_positive_rate, srm_check, two_proportion_ztest
from . import pipeline_batch


@dataclass(frozen=True, slots=True)
class DiscrepancyRow:
    """One compared cell; ``field`` names the most-diverging accumulator."""

    experiment_key: str
    variant_index: int
    metric_name: str
    field: str
    rt_value: float
    batch_value: float
    relative_diff: float
    divergence_flagged: bool

    def to_dict(self) -> dict:
        return {
            "experiment_key": self.experiment_key,
            "variant_index": self.variant_index,
            "metric_name": self.metric_name,
            "field": self.field,
            "rt_value": self.rt_value,
            "batch_value": self.batch_value,
            "relative_diff": self.relative_diff,
            "divergence_flagged": self.divergence_flagged,
        }


@dataclass(frozen=True)
class DiscrepancyReport:
    rows: tuple[DiscrepancyRow, ...]
    tolerance: float
    compared_at_watermark: int

    @property
    def any_flagged(self) -> bool:
        return any(row.divergence_flagged for row in self.rows)

    @property
    def flagged_rows(self) -> list[DiscrepancyRow]:
        return [row for row in self.rows if row.divergence_flagged]

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "compared_at_watermark": self.compared_at_watermark,
            "any_flagged": self.any_flagged,
            "rows": [row.to_dict() for row in self.rows],
        }


def _relative_diff(rt_value: float, batch_value: float) -> float:
    return abs(rt_value - batch_value) / max(batch_value, 1.0)


def compare_pipelines(rt_snapshots: list[MetricSnapshot],
                      batch_snapshots: list[MetricSnapshot],
                      tolerance: float,
                      catalog: MetricCatalog) -> DiscrepancyReport:
    """Compare the two pipelines' snapshot sets cell by cell.

    For every (experiment, variant, metric) present on either side, the
    recruitment count and the metric's decision value (x for binary
    metrics, sum for real ones; x additionally for real) are compared as
    ``|rt - batch| / max(batch, 1)``; the reported row carries the field
    with the largest relative difference. A cell missing on one side
    compares against zeros. Two zero values are a difference of zero by
    convention, never a flag.

    Raises:
        WatermarkMismatchError: unless every snapshot on both sides sits
            at one common watermark; comparing mixed cuts is meaningless.
    """
    rt_wm = {s.watermark for s in rt_snapshots}
    batch_wm = {s.watermark for s in batch_snapshots}
    if len(rt_wm) > 1 or len(batch_wm) > 1 or (rt_wm and batch_wm and rt_wm != batch_wm):
        raise WatermarkMismatchError(sorted(rt_wm), sorted(batch_wm))
    watermark = next(iter(rt_wm | batch_wm), 0)

    def index(snapshots):
        return {(s.experiment_key, s.variant_index, s.metric_name): s
                for s in snapshots}

    rt_index = index(rt_snapshots)
    batch_index = index(batch_snapshots)
    rows = []
    for cell in sorted(set(rt_index) | set(batch_index)):
        rt, batch = rt_index.get(cell), batch_index.get(cell)
        key, variant, metric = cell
        binary = metric in catalog and catalog.get(metric).kind == KIND_BINARY
        fields = [
            ("n", float(rt.n if rt else 0), float(batch.n if batch else 0)),
            ("x", float(rt.x if rt else 0), float(batch.x if batch else 0)),
        ]
        if not binary:
            fields.append(("sum", rt.sum if rt else 0.0, batch.sum if batch else 0.0))
        worst = max(fields, key=lambda f: _relative_diff(f[1], f[2]))
        diff = _relative_diff(worst[1], worst[2])
        rows.append(DiscrepancyRow(
            experiment_key=key,
            variant_index=variant,
            metric_name=metric,
            field=worst[0],
            rt_value=worst[1],
            batch_value=worst[2],
            relative_diff=diff,
            divergence_flagged=diff > tolerance,
        ))
    return DiscrepancyReport(tuple(rows), tolerance, watermark)


@dataclass(frozen=True)
class ControlledInputScenario:
    """A scripted event sequence with expectations fixed by construction.

    ``expected`` maps metric name to whole-experiment totals; the values
    are derived from the script parameters before any events flow, never
    measured from the records themselves.
    """

    experiment_key: str
    records: tuple[dict, ...]
    expected_visits: int
    expected: dict[str, dict[str, float]]
    variant_count: int = 2


def make_controlled_scenario(experiment_key: str = "controlled-input-probe",
                             n_visits: int = 1000,
                             n_conversions: int = 100,
                             withhold: int = 0,
                             start_ts: int = 1_600_000_000_000
                             ) -> ControlledInputScenario:
    """Script exactly n_visits exposures and n_conversions conversions.

    ``withhold`` removes that many conversion events from the tail of the
    script after the expectations are fixed, producing a known deficit.
    """
    if not 0 <= n_conversions <= n_visits:
        raise ValidationFailure("n_conversions must be within n_visits")
    if not 0 <= withhold <= n_conversions:
        raise ValidationFailure("cannot withhold more conversions than scripted")
    expected = {"conversion": {"n": float(n_visits), "x": float(n_conversions),
                               "sum": float(n_conversions)}}
    records = []
    seq = 0
    for i in range(n_visits):
        records.append({
            "event_id": f"probe-{i:08d}-visit",
            "timestamp_ms": start_ts + i,
            "kind": KIND_EXPOSURE,
            "experiment_key": experiment_key,
            "variant_index": i % 2,
            "method": "cookie",
            "raw_id": f"probe-visitor-{i:08d}",
            "producer_seq": seq,
        })
        seq += 1
    for i in range(n_conversions - withhold):
        records.append({
            "event_id": f"probe-{i:08d}-goal",
            "timestamp_ms": start_ts + n_visits + i,
            "kind": KIND_GOAL,
            "method": "cookie",
            "raw_id": f"probe-visitor-{i:08d}",
            "metric_name": "conversion",
            "value": 1.0,
            "channel": "reliable",
        })
    return ControlledInputScenario(
        experiment_key=experiment_key,
        records=tuple(records),
        expected_visits=n_visits,
        expected=expected,
    )


@dataclass(frozen=True, slots=True)
class DeficitRow:
    pipeline: str
    metric_name: str
    field: str
    expected: float
    observed: float

    @property
    def deficit(self) -> float:
        return self.expected - self.observed

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "metric_name": self.metric_name,
            "field": self.field,
            "expected": self.expected,
            "observed": self.observed,
            "deficit": self.deficit,
        }


@dataclass(frozen=True)
class ControlledCheckResult:
    status: str  # pass | fail | inconclusive
    mismatches: tuple[DeficitRow, ...]

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def metric_deficit(self, metric_name: str) -> float:
        """Largest absolute deficit recorded for the metric, signed."""
        worst = 0.0
        for row in self.mismatches:
            if row.metric_name == metric_name and abs(row.deficit) > abs(worst):
                worst = row.deficit
        return worst

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "mismatches": [row.to_dict() for row in self.mismatches],
        }


def run_controlled_input_check(log, rt: RtPipeline, catalog: MetricCatalog,
                               scenario: ControlledInputScenario,
                               batch_reader=None,
                               max_ticks: int = 100,
                               records_per_tick: int = 100_000
                               ) -> ControlledCheckResult:
    """Feed a controlled script end to end and verify exact counts.

    The scripted events are appended to the live log, the streaming
    pipeline is driven until it reaches the head (or the tick budget runs
    out, yielding an inconclusive status distinct from failure), the
    batch pipeline replays to the same watermark, and both pipelines'
    totals are compared with the scripted expectations exactly.
    """
    log.append_records(list(scenario.records))
    head = log.head
    for _ in range(max_ticks):
        if rt.watermark >= head:
            break
        rt.poll(records_per_tick)
    if rt.watermark < head:
        return ControlledCheckResult(status="inconclusive", mismatches=())

    key = scenario.experiment_key
    metric_names = tuple(sorted(scenario.expected))
    grid = {key: (scenario.variant_count, metric_names)}
    rt_snaps = rt.snapshot(key, scenario.variant_count, metric_names)
    batch_snaps = pipeline_batch.run(
        batch_reader if batch_reader is not None else log,
        rt.watermark, catalog, grids=grid)[key]

    mismatches = []
    for pipeline, snaps in (("rt", rt_snaps), ("batch", batch_snaps)):
        totals: dict[str, dict[str, float]] = {}
        visits = 0.0
        seen_variants = set()
        for s in snaps:
            agg = totals.setdefault(s.metric_name, {"n": 0.0, "x": 0.0, "sum": 0.0})
            agg["x"] += s.x
            agg["sum"] += s.sum
            if s.variant_index not in seen_variants:
                seen_variants.add(s.variant_index)
                visits += s.n
        for metric_name, want in scenario.expected.items():
            got = totals.get(metric_name, {"n": 0.0, "x": 0.0, "sum": 0.0})
            got["n"] = visits
            for fname, expected_value in want.items():
                observed = got.get(fname, 0.0)
                if observed != expected_value:
                    mismatches.append(DeficitRow(
                        pipeline=pipeline,
                        metric_name=metric_name,
                        field=fname,
                        expected=expected_value,
                        observed=observed,
                    ))
    status = "pass" if not mismatches else "fail"
    return ControlledCheckResult(status=status, mismatches=tuple(mismatches))


@dataclass(frozen=True)
class AaPoolResult:
    """False-positive calibration over a pool of null experiments."""

    fpr: FprReport
    p_values: tuple[float, ...]
    decile_fractions: tuple[float, ...]
    srm_flags: int

    @property
    def max_decile_deviation(self) -> float:
        """Largest |decile mass - 0.1| over the ten p-value deciles."""
        return max(abs(f - 0.1) for f in self.decile_fractions)

    def to_dict(self) -> dict:
        return {
            "n_experiments": self.fpr.n_experiments,
            "n_false_positives": self.fpr.n_false_positives,
            "rate": self.fpr.rate,
            "interval_low": self.fpr.interval_low,
            "interval_high": self.fpr.interval_high,
            "alpha": self.fpr.alpha,
            "calibrated": self.fpr.calibrated,
            "decile_fractions": list(self.decile_fractions),
            "max_decile_deviation": self.max_decile_deviation,
            "srm_flags": self.srm_flags,
        }


def aa_pool_run(pool_size: int, per_experiment_n: int = 10_000,
                alpha: float = 0.05, seed: int = 0,
                baseline_rate: float = 0.05,
                srm_threshold: float = 0.001) -> AaPoolResult:
    """Run a pool of AA experiments through the full measurement path.

    Each pool member is a complete, independently-salted experiment:
    seeded traffic flows through assignment into a fresh log, the
    streaming pipeline aggregates it, and the z-test runs on the
    pipeline's snapshots exactly as a real readout would. With zero
    effect by construction, every rejection is a false positive.

    Deterministic for a given seed. Raises rather than returning partial
    results if any member fails to produce a readout.
    """
    from .simulator import EffectModel, LossModel, TrafficProfile, run_scenario

    if pool_size < 1:
        raise ValidationFailure("pool_size must be at least 1")
    catalog = MetricCatalog.with_defaults()
    methods = MethodRegistry()
    master = np.random.default_rng(seed)
    child_seeds = master.integers(0, 2**63 - 1, size=pool_size, dtype=np.int64)
    salt_bytes = master.bytes(16 * pool_size)

    results: list[TestResult] = []
    p_values = []
    srm_flags = 0
    effect = EffectModel(baseline_rate=baseline_rate, lifts=(0.0,))
    loss = LossModel()
    for i in range(pool_size):
        key = f"aa-{i:05d}"
        spec = AssignmentSpec(
            experiment_key=key,
            salt=salt_bytes[16 * i:16 * (i + 1)].hex(),
            tracking_method="cookie",
            variant_weights=(1, 1),
            exposure_buckets=1000,
            state=ExperimentState.RUNNING,
        )
        spec.validate()
        log = MemoryEventLog(metric_gate=catalog)
        profile = TrafficProfile(n_visitors=2 * per_experiment_n,
                                 seed=int(child_seeds[i]))
        rt = RtPipeline(FilteredReader(log, "rt"), catalog)
        run_scenario(profile, effect, loss, spec, log, methods)
        while not rt.caught_up():
            rt.poll(200_000)
        snaps = rt.snapshot(key, 2, ("conversion",))
        cells = {s.variant_index: s for s in snaps if s.metric_name == "conversion"}
        control, treatment = cells[0], cells[1]
        result = two_proportion_ztest(control.x, control.n,
                                      treatment.x, treatment.n, alpha)
        results.append(result)
        p_values.append(result.p_value)
        if srm_check([control.n, treatment.n], list(spec.variant_weights),
                     srm_threshold).flagged:
            srm_flags += 1

    fpr = aa_false_positive_rate(results, alpha)
    bins = [0] * 10
    for p in p_values:
        bins[min(int(p * 10), 9)] += 1
    deciles = tuple(b / pool_size for b in bins)
    return AaPoolResult(fpr=fpr, p_values=tuple(p_values),
                        decile_fractions=deciles, srm_flags=srm_flags)


@dataclass(frozen=True)
class CoverageResult:
    """Confidence-interval coverage over repeated seeded effect scenarios.

    Attributes:
        runs: Number of independent scenario draws.
        covered: Runs whose interval contained the true effect.
        coverage: ``covered / runs``.
        true_effect: The injected additive conversion lift.
        alpha: Nominal test level; target coverage is ``1 - alpha``.
    """

    runs: int
    covered: int
    coverage: float
    true_effect: float
    alpha: float

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "covered": self.covered,
            "coverage": self.coverage,
            "true_effect": self.true_effect,
            "alpha": self.alpha,
        }


class _NullSink:
    """Event sink that discards everything.

    ``run_scenario`` draws every random number up front and assigns
    event ids from a counter, so discarding the emitted records leaves
    the ground truth byte-identical to a logged run. Used where only
    the truth counts matter and retaining millions of events would be
    waste, e.g. repeated-scenario coverage studies.
    """

    @staticmethod
    def append_record(record: dict) -> None:
        return None


def coverage_run(runs: int, n_per_arm: int = 50_000,
                 baseline_rate: float = 0.05, lift: float = 0.01,
                 alpha: float = 0.05, seed: int = 0) -> CoverageResult:
    """Measure CI coverage of the z-test over seeded lift scenarios.

    Each run draws a fresh scenario (independent salt and traffic seed)
    with a known additive lift, recruits ``2 * n_per_arm`` visitors
    through the production assignment path, and tests whether the
    ``1 - alpha`` confidence interval for the difference in conversion
    rates contains the injected lift. A well-calibrated interval covers
    the truth in roughly ``1 - alpha`` of runs.

    Deterministic for a given seed.
    """
    from .simulator import EffectModel, LossModel, TrafficProfile, run_scenario

    if runs < 1:
        raise ValidationFailure("runs must be at least 1")
    methods = MethodRegistry()
    master = np.random.default_rng(seed)
    child_seeds = master.integers(0, 2**63 - 1, size=runs, dtype=np.int64)
    salt_bytes = master.bytes(16 * runs)
    effect = EffectModel(baseline_rate=baseline_rate, lifts=(lift,))
    loss = LossModel()
    sink = _NullSink()

    covered = 0
    for i in range(runs):
        spec = AssignmentSpec(
            experiment_key=f"coverage-{i:05d}",
            salt=salt_bytes[16 * i:16 * (i + 1)].hex(),
            tracking_method="cookie",
            variant_weights=(1, 1),
            exposure_buckets=1000,
            state=ExperimentState.RUNNING,
        )
        spec.validate()
        profile = TrafficProfile(n_visitors=2 * n_per_arm,
                                 seed=int(child_seeds[i]))
        truth = run_scenario(profile, effect, loss, spec, sink, methods)
        result = two_proportion_ztest(truth.converters[0], truth.recruited[0],
                                      truth.converters[1], truth.recruited[1],
                                      alpha)
        if result.ci_low <= lift <= result.ci_high:
            covered += 1
    return CoverageResult(runs=runs, covered=covered,
                          coverage=covered / runs, true_effect=lift,
                          alpha=alpha)
