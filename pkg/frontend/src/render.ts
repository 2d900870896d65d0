// Pure DOM builders for the dashboard. Every function takes a Document
// and returns a detached element, so pages and tests compose them the
// same way.
//
// One rule is load bearing: any node whose text is a comparative
// statistic (a mean, a difference, an interval bound, a p-value) carries
// the `data-comparative` attribute. A gated report renders hidden-metric
// panels instead, and those panels contain no such node, so "the page
// shows no comparative numbers while sample ratios are off" is a single
// query away.

import type {
  AaPoolDoc,
  ApiError,
  DivergenceDoc,
  ExperimentRecordDoc,
  GuardrailStatusDoc,
  MetricBlockDoc,
  ReportDoc,
} from "./api.js";

function el(doc: Document, tag: string, className?: string,
            text?: string): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function comparative(doc: Document, tag: string, className: string,
                     text: string): HTMLElement {
  const node = el(doc, tag, className, text);
  node.setAttribute("data-comparative", "");
  return node;
}

function fmt(x: number, digits = 4): string {
  return x.toFixed(digits);
}

function fmtCount(x: number): string {
  return String(Math.round(x));
}

/** Red banner carrying a service warning or error line verbatim. */
export function renderBanner(doc: Document, kind: "warning" | "error" | "alarm",
                             text: string): HTMLElement {
  const banner = el(doc, "div", `banner banner-${kind}`, text);
  banner.setAttribute("role", "alert");
  return banner;
}

/** The exact line for a failed request: status, code, service message. */
export function renderApiError(doc: Document, error: ApiError): HTMLElement {
  return renderBanner(doc, "error", error.display());
}

function renderMetricBlock(doc: Document, block: MetricBlockDoc): HTMLElement {
  const section = el(doc, "section", "metric-block");
  section.setAttribute("data-metric", block.metric_name);
  const title = el(doc, "h3", "metric-title",
                   `${block.metric_name} (${block.role})`);
  section.appendChild(title);

  if (block.hidden) {
    // No cell or comparison is consulted on this branch: a hidden block
    // is a notice, not a smaller table.
    const panel = el(doc, "div", "hidden-panel");
    panel.setAttribute("data-hidden-metric", block.metric_name);
    panel.appendChild(el(doc, "strong", "hidden-label", "HIDDEN"));
    const reason = block.note || "sample ratio mismatch";
    panel.appendChild(el(doc, "span", "hidden-reason", ` ${reason}`));
    section.appendChild(panel);
    return section;
  }

  const cells = el(doc, "table", "cells");
  const head = el(doc, "tr");
  for (const label of ["variant", "n", "x", "mean"]) {
    head.appendChild(el(doc, "th", undefined, label));
  }
  cells.appendChild(head);
  for (const cell of block.cells) {
    const row = el(doc, "tr", "cell-row");
    row.appendChild(el(doc, "td", "variant", String(cell.variant_index)));
    row.appendChild(comparative(doc, "td", "n", fmtCount(cell.n)));
    row.appendChild(comparative(doc, "td", "x", fmt(cell.x, 2)));
    row.appendChild(comparative(doc, "td", "mean", fmt(cell.mean)));
    cells.appendChild(row);
  }
  section.appendChild(cells);

  if (block.comparisons.length > 0) {
    const table = el(doc, "table", "comparisons");
    const header = el(doc, "tr");
    for (const label of ["vs control", "difference", "interval", "p-value"]) {
      header.appendChild(el(doc, "th", undefined, label));
    }
    table.appendChild(header);
    for (const comparison of block.comparisons) {
      const row = el(doc, "tr", "comparison-row");
      row.appendChild(el(doc, "td", "variant",
                         `variant ${comparison.variant_index}`));
      if (comparison.test === null) {
        const note = el(doc, "td", "note",
                        comparison.note || "no test") as HTMLTableCellElement;
        note.colSpan = 3;
        row.appendChild(note);
      } else {
        const t = comparison.test;
        row.appendChild(comparative(doc, "td", "diff", fmt(t.estimate_diff)));
        row.appendChild(comparative(doc, "td", "interval",
                                    `[${fmt(t.ci_low)}, ${fmt(t.ci_high)}]`));
        row.appendChild(comparative(doc, "td", "p-value", fmt(t.p_value)));
      }
      table.appendChild(row);
    }
    section.appendChild(table);
  }

  if (block.direction_ok !== null) {
    const verdict = block.direction_ok
      ? "moves in the pre-registered direction"
      : "moves OPPOSITE to the pre-registered direction";
    section.appendChild(el(doc, "p", "direction", verdict));
  }
  if (block.note) {
    section.appendChild(el(doc, "p", "block-note", block.note));
  }
  return section;
}

function renderDivergence(doc: Document,
                          divergence: DivergenceDoc): HTMLElement {
  const section = el(doc, "section", "divergence");
  const flaggedText = divergence.any_flagged ? "DIVERGED" : "agree";
  section.appendChild(el(doc, "h3", undefined,
                         `Pipeline cross-check: ${flaggedText} ` +
                         `(tolerance ${divergence.tolerance})`));
  const table = el(doc, "table", "divergence-rows");
  const head = el(doc, "tr");
  for (const label of ["experiment", "variant", "metric", "field",
                       "streaming", "batch", "relative diff", ""]) {
    head.appendChild(el(doc, "th", undefined, label));
  }
  table.appendChild(head);
  for (const row of divergence.rows) {
    const tr = el(doc, "tr",
                  row.divergence_flagged ? "divergence-row flagged"
                                         : "divergence-row");
    tr.appendChild(el(doc, "td", undefined, row.experiment_key));
    tr.appendChild(el(doc, "td", undefined, String(row.variant_index)));
    tr.appendChild(el(doc, "td", undefined, row.metric_name));
    tr.appendChild(el(doc, "td", undefined, row.field));
    tr.appendChild(el(doc, "td", "rt-value", fmt(row.rt_value, 2)));
    tr.appendChild(el(doc, "td", "batch-value", fmt(row.batch_value, 2)));
    tr.appendChild(el(doc, "td", "relative-diff", fmt(row.relative_diff, 6)));
    tr.appendChild(el(doc, "td", "flag",
                      row.divergence_flagged ? "FLAGGED" : ""));
    table.appendChild(tr);
  }
  section.appendChild(table);
  return section;
}

/** Full report page body. Hidden metric blocks come out as HIDDEN
 * panels; a flagged sample ratio additionally raises a banner, and on
 * that path no rendered node carries `data-comparative`. */
export function renderReport(doc: Document, report: ReportDoc): HTMLElement {
  const root = el(doc, "section", "report");
  root.setAttribute("data-status", report.status);
  root.appendChild(el(doc, "h2", undefined,
                      `Report: ${report.experiment_key}`));
  root.appendChild(el(doc, "p", `status status-${report.status}`,
                      `status: ${report.status}`));

  for (const warning of report.warnings) {
    root.appendChild(renderBanner(doc, "warning", warning));
  }

  if (report.srm !== null) {
    const srm = report.srm;
    const line = el(doc, "p", srm.flagged ? "srm flagged" : "srm",
                    `Sample ratio check: chi-square ${fmt(srm.chi_square, 2)},` +
                    ` p ${fmt(srm.p_value, 6)}` +
                    (srm.flagged ? " (FLAGGED)" : ""));
    root.appendChild(line);
    if (srm.flagged) {
      root.appendChild(renderBanner(
        doc, "alarm",
        "Sample ratio mismatch: comparative results are withheld until " +
        "assignment counts are explained."));
    }
  }

  root.appendChild(el(doc, "p", "unknown-rate",
                      `unknown identifier rate: ` +
                      `${fmt(report.unknown_identifier_rate)}`));

  for (const block of report.blocks) {
    root.appendChild(renderMetricBlock(doc, block));
  }

  if (report.divergence !== null) {
    root.appendChild(renderDivergence(doc, report.divergence));
  }

  root.appendChild(el(doc, "p", "watermark",
                      `log watermark ${report.watermark}`));
  return root;
}

/** Guardrail panel. Staleness is an alarm, not a footnote: when the
 * readout lags the log the banner says by how many ticks. */
export function renderGuardrails(doc: Document,
                                 status: GuardrailStatusDoc): HTMLElement {
  const root = el(doc, "section", "guardrails");
  root.appendChild(el(doc, "h2", undefined,
                      `Guardrails: ${status.experiment_key}`));
  if (status.stale) {
    root.appendChild(renderBanner(
      doc, "alarm",
      `Guardrail readout is STALE: ${status.staleness_ticks} ticks behind ` +
      "the event log. Numbers below may not reflect current traffic."));
  }
  if (status.no_data) {
    root.appendChild(el(doc, "p", "no-data", "no guardrail data yet"));
    return root;
  }
  const table = el(doc, "table", "guardrail-rows");
  const head = el(doc, "tr");
  for (const label of ["metric", "variant", "control", "treatment",
                       "delta", "relative", "z"]) {
    head.appendChild(el(doc, "th", undefined, label));
  }
  table.appendChild(head);
  for (const row of status.rows) {
    const tr = el(doc, "tr", "guardrail-row");
    tr.appendChild(el(doc, "td", undefined, row.metric_name));
    tr.appendChild(el(doc, "td", undefined, String(row.variant_index)));
    tr.appendChild(el(doc, "td", "control", fmt(row.control_value)));
    tr.appendChild(el(doc, "td", "treatment", fmt(row.treatment_value)));
    tr.appendChild(el(doc, "td", "delta", fmt(row.delta)));
    tr.appendChild(el(doc, "td", "relative",
                      row.relative_delta === null ? "n/a"
                                                  : fmt(row.relative_delta)));
    tr.appendChild(el(doc, "td", "z",
                      row.z === null ? "n/a" : fmt(row.z, 2)));
    table.appendChild(tr);
  }
  root.appendChild(table);
  root.appendChild(el(doc, "p", "watermark",
                      `readout watermark ${status.watermark}`));
  return root;
}

/** Searchable listing. Row clicks are left to the caller: each row
 * carries `data-key` and no handler. */
export function renderRepository(doc: Document,
                                 records: ExperimentRecordDoc[]): HTMLElement {
  const root = el(doc, "section", "repository");
  root.appendChild(el(doc, "h2", undefined,
                      `Experiments (${records.length})`));
  const table = el(doc, "table", "experiment-rows");
  const head = el(doc, "tr");
  for (const label of ["key", "state", "team", "area", "primary metric",
                       "variants"]) {
    head.appendChild(el(doc, "th", undefined, label));
  }
  table.appendChild(head);
  for (const record of records) {
    const tr = el(doc, "tr", `experiment-row state-${record.state}`);
    tr.setAttribute("data-key", record.experiment_key);
    tr.appendChild(el(doc, "td", "key", record.experiment_key));
    tr.appendChild(el(doc, "td", "state", record.state));
    tr.appendChild(el(doc, "td", "team", record.team));
    tr.appendChild(el(doc, "td", "area", record.product_area));
    tr.appendChild(el(doc, "td", "primary",
                      record.preregistration?.primary_metric ?? ""));
    tr.appendChild(el(doc, "td", "variants",
                      String(record.variant_weights.length)));
    table.appendChild(tr);
  }
  root.appendChild(table);
  return root;
}

export interface DetailHandlers {
  onStart?: () => void;
  onStop?: (reason: string) => void;
  onDecide?: (outcome: string, rationale: string) => void;
}

/** One experiment's header card: registration facts, pre-registration,
 * decision if recorded, and the lifecycle controls the current state
 * allows. A running experiment always gets a stop control. */
export function renderExperimentDetail(doc: Document,
                                       record: ExperimentRecordDoc,
                                       handlers: DetailHandlers = {}): HTMLElement {
  const root = el(doc, "section", "experiment-detail");
  root.setAttribute("data-key", record.experiment_key);
  root.appendChild(el(doc, "h2", undefined, record.experiment_key));
  root.appendChild(el(doc, "p", `state state-${record.state}`,
                      `state: ${record.state}`));
  root.appendChild(el(doc, "p", "facts",
                      `${record.tracking_method} tracking, ` +
                      `${record.variant_weights.length} variants ` +
                      `(weights ${record.variant_weights.join(":")}), ` +
                      `${record.exposure_buckets}/${record.bucket_count} ` +
                      `buckets exposed`));
  root.appendChild(el(doc, "p", "ownership",
                      `${record.team} / ${record.product_area} ` +
                      `(created by ${record.created_by})`));
  if (record.description) {
    root.appendChild(el(doc, "p", "description", record.description));
  }

  const prereg = el(doc, "div", "preregistration");
  prereg.appendChild(el(doc, "h3", undefined, "Pre-registration"));
  if (record.preregistration === null) {
    prereg.appendChild(el(doc, "p", "missing",
                          "none yet: the experiment cannot start without " +
                          "a hypothesis and a primary metric"));
  } else {
    const p = record.preregistration;
    prereg.appendChild(el(doc, "p", "hypothesis", p.hypothesis));
    prereg.appendChild(el(doc, "p", "primary-metric",
                          `primary metric: ${p.primary_metric} ` +
                          `(expected to ${p.expected_direction})`));
    if (p.secondary_metrics.length > 0) {
      prereg.appendChild(el(doc, "p", "secondary-metrics",
                            `secondary: ${p.secondary_metrics.join(", ")}`));
    }
  }
  root.appendChild(prereg);

  if (record.decision !== null) {
    const decision = el(doc, "div", "decision");
    decision.appendChild(el(doc, "h3", undefined, "Decision"));
    decision.appendChild(el(doc, "p", "outcome",
                            `${record.decision.outcome} ` +
                            `(by ${record.decision.decided_by})`));
    decision.appendChild(el(doc, "p", "rationale",
                            record.decision.rationale));
    root.appendChild(decision);
  }

  const controls = el(doc, "div", "controls");
  if (record.state === "draft") {
    const start = el(doc, "button", "start-control", "Start") as HTMLButtonElement;
    start.setAttribute("data-action", "start");
    if (record.preregistration === null) {
      start.disabled = true;
      controls.appendChild(start);
      controls.appendChild(el(doc, "p", "control-note",
                              "start is blocked: pre-register a hypothesis " +
                              "and primary metric first"));
    } else {
      start.addEventListener("click", () => handlers.onStart?.());
      controls.appendChild(start);
    }
  }
  if (record.state === "running") {
    const reason = el(doc, "input", "stop-reason") as HTMLInputElement;
    reason.setAttribute("placeholder", "reason for stopping");
    reason.setAttribute("data-field", "stop-reason");
    const stop = el(doc, "button", "stop-control", "Stop experiment") as HTMLButtonElement;
    stop.setAttribute("data-action", "stop");
    stop.addEventListener("click", () => handlers.onStop?.(reason.value));
    controls.appendChild(reason);
    controls.appendChild(stop);
  }
  if (record.state === "stopped") {
    const outcome = el(doc, "select", "decision-outcome") as HTMLSelectElement;
    outcome.setAttribute("data-field", "decision-outcome");
    for (const value of ["ship", "abandon", "iterate"]) {
      const option = doc.createElement("option");
      option.value = value;
      option.textContent = value;
      outcome.appendChild(option);
    }
    const rationale = el(doc, "input", "decision-rationale") as HTMLInputElement;
    rationale.setAttribute("placeholder", "rationale");
    rationale.setAttribute("data-field", "decision-rationale");
    const decide = el(doc, "button", "decide-control", "Record decision") as HTMLButtonElement;
    decide.setAttribute("data-action", "decide");
    decide.addEventListener("click",
                            () => handlers.onDecide?.(outcome.value,
                                                      rationale.value));
    controls.appendChild(outcome);
    controls.appendChild(rationale);
    controls.appendChild(decide);
  }
  root.appendChild(controls);
  return root;
}

/** AA-pool calibration card on the quality page. */
export function renderAaPool(doc: Document, pool: AaPoolDoc): HTMLElement {
  const root = el(doc, "section", "aa-pool");
  root.appendChild(el(doc, "h3", undefined, "AA calibration pool"));
  const verdict = pool.calibrated ? "calibrated" : "NOT calibrated";
  root.appendChild(el(doc, "p", pool.calibrated ? "verdict" : "verdict flagged",
                      `${pool.n_false_positives} false positives in ` +
                      `${pool.n_experiments} null experiments ` +
                      `(rate ${fmt(pool.rate)}, expected interval ` +
                      `[${fmt(pool.interval_low)}, ${fmt(pool.interval_high)}]` +
                      `): ${verdict}`));
  root.appendChild(el(doc, "p", "deciles",
                      `worst p-value decile deviation ` +
                      `${fmt(pool.max_decile_deviation)}`));
  if (pool.srm_flags > 0) {
    root.appendChild(renderBanner(doc, "warning",
                                  `${pool.srm_flags} pool members tripped ` +
                                  "the sample ratio check"));
  }
  return root;
}
