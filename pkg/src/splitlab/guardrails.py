"""Safeguard gating and report composition.

A report is only as honest as its gates. Composition here enforces two
of them unconditionally: a flagged sample-ratio mismatch hides every
comparative block (a randomization defect invalidates all comparisons at
once), and unknown-identifier traffic attaches a warning while leaving
the numbers visible (a coverage caveat, not a validity failure). Reports
with no recruited traffic say so explicitly instead of fabricating
zero-effect statistics.

Guardrail status is the fast path: per-metric treatment deltas computed
from the streaming pipeline's snapshots, stamped with how many ticks the
pipeline is lagging. When the lag exceeds the staleness budget the
status carries an alarm, because a stale "all clear" is worse than none.

Nothing in this module stops an experiment. Monitoring surfaces harm;
a named actor pulls the switch through the registry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .metrics import KIND_BINARY, MetricCatalog, MetricDefinition
from .registry import ExperimentRecord
from .snapshots import MetricSnapshot, by_variant, recruited_counts
from .stats import SrmResult, TestResult, srm_check, two_proportion_ztest, welch_ttest
from .errors import DegenerateDataError, InsufficientSampleError

ROLE_PRIMARY = "primary"
ROLE_SECONDARY = "secondary"
ROLE_GUARDRAIL = "guardrail"

STATUS_OK = "ok"
STATUS_GATED = "gated"
STATUS_NO_DATA = "no_data"

WARN_SRM = "srm"
WARN_UNKNOWN_IDENTIFIERS = "unknown_identifiers"
WARN_PIPELINE_DIVERGENCE = "pipeline_divergence"

STALENESS_BUDGET_TICKS = 5


@dataclass(frozen=True, slots=True)
class VariantCell:
    """One variant's aggregate for one metric."""

    variant_index: int
    n: int
    x: int
    mean: float

    def to_dict(self) -> dict:
        return {"variant_index": self.variant_index, "n": self.n,
                "x": self.x, "mean": self.mean}


@dataclass(frozen=True, slots=True)
class Comparison:
    """One treatment-vs-control test, or the reason it was not run."""

    variant_index: int
    test: TestResult | None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "variant_index": self.variant_index,
            "test": None if self.test is None else {
                "estimate_diff": self.test.estimate_diff,
                "std_error": self.test.std_error,
                "statistic": self.test.statistic,
                "df": self.test.df,
                "p_value": self.test.p_value,
                "ci_low": self.test.ci_low,
                "ci_high": self.test.ci_high,
                "alpha": self.test.alpha,
                "degenerate": self.test.degenerate,
            },
            "note": self.note,
        }


@dataclass(frozen=True, slots=True)
class MetricBlock:
    """One metric's comparative block, or its HIDDEN marker.

    A hidden block carries no cells and no comparisons; hiding strips
    the numbers rather than wrapping them, so nothing downstream can
    accidentally render what the gate suppressed.
    """

    metric_name: str
    role: str
    hidden: bool = False
    cells: tuple[VariantCell, ...] = ()
    comparisons: tuple[Comparison, ...] = ()
    direction_ok: bool | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "role": self.role,
            "hidden": self.hidden,
            "cells": [c.to_dict() for c in self.cells],
            "comparisons": [c.to_dict() for c in self.comparisons],
            "direction_ok": self.direction_ok,
            "note": self.note,
        }


@dataclass(frozen=True, slots=True)
class Report:
    """The owner-facing composition for one experiment."""

    experiment_key: str
    status: str
    srm: SrmResult | None
    unknown_identifier_rate: float
    blocks: tuple[MetricBlock, ...]
    divergence: dict | None
    warnings: tuple[dict, ...]
    generated_at: int
    watermark: int

    @property
    def gated(self) -> bool:
        return self.status == STATUS_GATED

    def to_dict(self) -> dict:
        return {
            "experiment_key": self.experiment_key,
            "status": self.status,
            "srm": None if self.srm is None else {
                "chi_square": self.srm.chi_square,
                "df": self.srm.df,
                "p_value": self.srm.p_value,
                "flagged": self.srm.flagged,
                "threshold": self.srm.threshold,
            },
            "unknown_identifier_rate": self.unknown_identifier_rate,
            "blocks": [b.to_dict() for b in self.blocks],
            "divergence": self.divergence,
            "warnings": [dict(w) for w in self.warnings],
            "generated_at": self.generated_at,
            "watermark": self.watermark,
        }


@dataclass(frozen=True, slots=True)
class GuardrailRow:
    """One guardrail metric's treatment-vs-control movement."""

    metric_name: str
    variant_index: int
    control_value: float
    treatment_value: float
    delta: float
    relative_delta: float | None
    z: float | None

    def to_dict(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "variant_index": self.variant_index,
            "control_value": self.control_value,
            "treatment_value": self.treatment_value,
            "delta": self.delta,
            "relative_delta": self.relative_delta,
            "z": self.z,
        }


@dataclass(frozen=True, slots=True)
class GuardrailStatus:
    """Fast health readout from the streaming pipeline."""

    experiment_key: str
    rows: tuple[GuardrailRow, ...]
    staleness_ticks: int
    stale: bool
    no_data: bool
    generated_at: int
    watermark: int

    def to_dict(self) -> dict:
        return {
            "experiment_key": self.experiment_key,
            "rows": [r.to_dict() for r in self.rows],
            "staleness_ticks": self.staleness_ticks,
            "stale": self.stale,
            "no_data": self.no_data,
            "generated_at": self.generated_at,
            "watermark": self.watermark,
        }


def _metric_roles(record: ExperimentRecord,
                  catalog: MetricCatalog) -> list[tuple[str, str]]:
    """Ordered (metric, role) pairs: primary, secondaries, then guardrails."""
    roles: list[tuple[str, str]] = []
    listed: set[str] = set()
    prereg = record.preregistration
    if prereg is not None:
        roles.append((prereg.primary_metric, ROLE_PRIMARY))
        listed.add(prereg.primary_metric)
        for name in prereg.secondary_metrics:
            roles.append((name, ROLE_SECONDARY))
            listed.add(name)
    for name in catalog.guardrail_names():
        if name not in listed:
            roles.append((name, ROLE_GUARDRAIL))
    return roles


def _cells(definition: MetricDefinition, per_variant: dict[int, MetricSnapshot],
           counts: dict[int, int]) -> tuple[VariantCell, ...]:
    cells = []
    for variant in sorted(counts):
        snap = per_variant.get(variant)
        n = counts[variant]
        if snap is None:
            cells.append(VariantCell(variant, n, 0, 0.0))
        elif definition.kind == KIND_BINARY:
            cells.append(VariantCell(variant, n, snap.x,
                                     snap.x / n if n else 0.0))
        else:
            cells.append(VariantCell(variant, n, snap.x, snap.mean))
    return tuple(cells)


def _compare(definition: MetricDefinition, control: MetricSnapshot | None,
             treatment: MetricSnapshot | None, n_c: int, n_t: int,
             variant: int, alpha: float) -> Comparison:
    """Test one treatment arm against control, or say why it cannot be."""
    if n_c < 1 or n_t < 1:
        return Comparison(variant, None, "an arm has no recruited traffic")
    x_c = control.x if control is not None else 0
    x_t = treatment.x if treatment is not None else 0
    try:
        if definition.kind == KIND_BINARY:
            test = two_proportion_ztest(x_c, n_c, x_t, n_t, alpha)
        else:
            mean_c = control.mean if control is not None else 0.0
            var_c = control.variance if control is not None else 0.0
            mean_t = treatment.mean if treatment is not None else 0.0
            var_t = treatment.variance if treatment is not None else 0.0
            test = welch_ttest(mean_c, var_c, n_c, mean_t, var_t, n_t, alpha)
    except DegenerateDataError as exc:
        return Comparison(variant, None, str(exc))
    except InsufficientSampleError as exc:
        return Comparison(variant, None, str(exc))
    return Comparison(variant, test)


def _direction_ok(expected_direction: str,
                  comparisons: tuple[Comparison, ...]) -> bool | None:
    """Whether every testable treatment moved the way the owner predicted.

    None when nothing was testable or every estimate is exactly zero:
    an absent effect has no direction.
    """
    verdicts = []
    for comparison in comparisons:
        if comparison.test is None or comparison.test.estimate_diff == 0:
            continue
        moved_up = comparison.test.estimate_diff > 0
        verdicts.append(moved_up == (expected_direction == "increase"))
    if not verdicts:
        return None
    return all(verdicts)


def compose_report(record: ExperimentRecord,
                   snapshots: list[MetricSnapshot],
                   catalog: MetricCatalog, *,
                   unknown_rate: float = 0.0,
                   divergence: dict | None = None,
                   alpha: float = 0.05,
                   srm_threshold: float = 0.001,
                   generated_at: int = 0) -> Report:
    """Compose the gated, owner-facing report for one experiment.

    ``snapshots`` is one pipeline's snapshot grid for this experiment.
    The sample-ratio check runs on recruited counts against the
    configured weights; a flag hides every comparative block. A
    positive ``unknown_rate`` adds a warning without hiding anything.
    ``divergence`` is the latest pipeline comparison, embedded verbatim.

    With no recruited traffic the report is an explicit no-data state:
    no SRM verdict, no blocks, never a fabricated zero-effect table.
    """
    counts = recruited_counts(snapshots)
    watermark = max((s.watermark for s in snapshots), default=0)
    warnings: list[dict] = []

    if divergence is not None and divergence.get("any_flagged"):
        warnings.append({
            "code": WARN_PIPELINE_DIVERGENCE,
            "message": "rt and batch pipelines disagree beyond tolerance; "
                       "counts shown may not be trustworthy",
        })

    if not counts or sum(counts.values()) == 0:
        return Report(
            experiment_key=record.experiment_key,
            status=STATUS_NO_DATA,
            srm=None,
            unknown_identifier_rate=unknown_rate,
            blocks=(),
            divergence=divergence,
            warnings=(*warnings, {"code": STATUS_NO_DATA,
                                  "message": "no recruited traffic yet"}),
            generated_at=generated_at,
            watermark=watermark,
        )

    # Zero-weight variants hold no wheel slots, so their expected share is
    # exactly zero; the ratio check runs over the active arms only.
    active = [v for v, w in enumerate(record.variant_weights) if w > 0]
    srm = None
    if len(active) >= 2:
        srm = srm_check([counts.get(v, 0) for v in active],
                        [record.variant_weights[v] for v in active],
                        threshold=srm_threshold)

    if unknown_rate > 0:
        warnings.append({
            "code": WARN_UNKNOWN_IDENTIFIERS,
            "message": f"{unknown_rate:.2%} of assignment requests carried "
                       f"an unknown or invalid identifier and fell back to "
                       f"control behavior",
        })

    blocks = []
    if srm is not None and srm.flagged:
        warnings.append({
            "code": WARN_SRM,
            "message": f"sample ratio mismatch (chi-square "
                       f"{srm.chi_square:.2f}, p {srm.p_value:.2e}): "
                       f"comparative statistics are hidden",
        })
        for metric_name, role in _metric_roles(record, catalog):
            blocks.append(MetricBlock(metric_name, role, hidden=True,
                                      note="hidden: sample ratio mismatch"))
        return Report(
            experiment_key=record.experiment_key,
            status=STATUS_GATED,
            srm=srm,
            unknown_identifier_rate=unknown_rate,
            blocks=tuple(blocks),
            divergence=divergence,
            warnings=tuple(warnings),
            generated_at=generated_at,
            watermark=watermark,
        )

    full = {v: counts.get(v, 0) for v in range(len(record.variant_weights))}
    for metric_name, role in _metric_roles(record, catalog):
        definition = catalog.get(metric_name)
        per_variant = by_variant(snapshots, metric_name)
        if not per_variant:
            blocks.append(MetricBlock(metric_name, role,
                                      note="no observations for this metric"))
            continue
        cells = _cells(definition, per_variant, full)
        comparisons = tuple(
            _compare(definition, per_variant.get(0), per_variant.get(v),
                     full.get(0, 0), full.get(v, 0), v, alpha)
            for v in sorted(full) if v != 0)
        direction = None
        if role == ROLE_PRIMARY and record.preregistration is not None:
            direction = _direction_ok(
                record.preregistration.expected_direction, comparisons)
        blocks.append(MetricBlock(metric_name, role, cells=cells,
                                  comparisons=comparisons,
                                  direction_ok=direction))

    return Report(
        experiment_key=record.experiment_key,
        status=STATUS_OK,
        srm=srm,
        unknown_identifier_rate=unknown_rate,
        blocks=tuple(blocks),
        divergence=divergence,
        warnings=tuple(warnings),
        generated_at=generated_at,
        watermark=watermark,
    )


def guardrail_status(record: ExperimentRecord,
                     snapshots: list[MetricSnapshot],
                     catalog: MetricCatalog, *,
                     staleness_ticks: int,
                     alpha: float = 0.05,
                     generated_at: int = 0) -> GuardrailStatus:
    """Fast per-guardrail-metric deltas from the streaming pipeline.

    ``staleness_ticks`` is how many ticks the pipeline's watermark lags
    the log head; beyond STALENESS_BUDGET_TICKS the status carries a
    stale alarm. Relative deltas divide by the control value and are
    None when control sits at zero. The z column is the comparative
    statistic when computable, None otherwise; display thresholds on z
    are the caller's concern. Nothing here stops the experiment.
    """
    counts = recruited_counts(snapshots)
    watermark = max((s.watermark for s in snapshots), default=0)
    no_data = not counts or sum(counts.values()) == 0
    rows: list[GuardrailRow] = []
    if not no_data:
        full = {v: counts.get(v, 0) for v in range(len(record.variant_weights))}
        for metric_name in catalog.guardrail_names():
            definition = catalog.get(metric_name)
            per_variant = by_variant(snapshots, metric_name)
            control = per_variant.get(0)
            n_c = full.get(0, 0)
            if definition.kind == KIND_BINARY:
                value_c = (control.x / n_c) if control is not None and n_c else 0.0
            else:
                value_c = control.mean if control is not None else 0.0
            for variant in sorted(full):
                if variant == 0:
                    continue
                treatment = per_variant.get(variant)
                n_t = full.get(variant, 0)
                if definition.kind == KIND_BINARY:
                    value_t = (treatment.x / n_t) if treatment is not None and n_t \
                        else 0.0
                else:
                    value_t = treatment.mean if treatment is not None else 0.0
                comparison = _compare(definition, control, treatment,
                                      n_c, n_t, variant, alpha)
                rows.append(GuardrailRow(
                    metric_name=metric_name,
                    variant_index=variant,
                    control_value=value_c,
                    treatment_value=value_t,
                    delta=value_t - value_c,
                    relative_delta=((value_t - value_c) / value_c
                                    if value_c else None),
                    z=(comparison.test.statistic
                       if comparison.test is not None else None),
                ))
    return GuardrailStatus(
        experiment_key=record.experiment_key,
        rows=tuple(rows),
        staleness_ticks=staleness_ticks,
        stale=staleness_ticks > STALENESS_BUDGET_TICKS,
        no_data=no_data,
        generated_at=generated_at,
        watermark=watermark,
    )
