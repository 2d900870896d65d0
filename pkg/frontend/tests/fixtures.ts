// Canned service documents and a scripted fetch for the specs. Shapes
// mirror the platform's JSON exactly; tests that need a variation clone
// and edit.

import type {
  DivergenceDoc,
  ExperimentRecordDoc,
  GuardrailStatusDoc,
  MetricBlockDoc,
  ReportDoc,
} from "../src/api.js";

export function visibleBlock(metric = "conversion",
                             role = "primary"): MetricBlockDoc {
  return {
    metric_name: metric,
    role,
    hidden: false,
    cells: [
      { variant_index: 0, n: 5000, x: 250, mean: 0.05 },
      { variant_index: 1, n: 5000, x: 350, mean: 0.07 },
    ],
    comparisons: [
      {
        variant_index: 1,
        test: {
          statistic: 4.2,
          p_value: 0.00003,
          estimate_diff: 0.02,
          std_error: 0.0047,
          ci_low: 0.0107,
          ci_high: 0.0293,
          alpha: 0.05,
          df: 0,
          degenerate: false,
        },
        note: "",
      },
    ],
    direction_ok: true,
    note: "",
  };
}

export function hiddenBlock(metric = "conversion",
                            role = "primary"): MetricBlockDoc {
  return {
    metric_name: metric,
    role,
    hidden: true,
    cells: [],
    comparisons: [],
    direction_ok: null,
    note: "withheld: sample ratio mismatch",
  };
}

export function okReport(): ReportDoc {
  return {
    experiment_key: "checkout-cta",
    status: "ok",
    srm: { chi_square: 1.1, df: 1, p_value: 0.29, flagged: false,
           threshold: 0.001 },
    unknown_identifier_rate: 0.001,
    blocks: [visibleBlock(), visibleBlock("revenue", "secondary")],
    divergence: null,
    warnings: [],
    generated_at: 1700000000000,
    watermark: 10000,
  };
}

export function gatedReport(): ReportDoc {
  return {
    ...okReport(),
    status: "gated",
    srm: { chi_square: 12.89, df: 1, p_value: 0.00033, flagged: true,
           threshold: 0.001 },
    blocks: [hiddenBlock(), hiddenBlock("revenue", "secondary")],
    warnings: ["sample ratio mismatch: metric results are withheld"],
  };
}

export function divergenceDoc(flagged: boolean): DivergenceDoc {
  return {
    tolerance: 0.001,
    compared_at_watermark: 10000,
    any_flagged: flagged,
    rows: [
      {
        experiment_key: "checkout-cta",
        variant_index: 0,
        metric_name: "conversion",
        field: "x",
        rt_value: flagged ? 247 : 250,
        batch_value: 250,
        relative_diff: flagged ? 0.012 : 0,
        divergence_flagged: flagged,
      },
    ],
  };
}

export function guardrailStatus(stale: boolean): GuardrailStatusDoc {
  return {
    experiment_key: "checkout-cta",
    rows: [
      { metric_name: "conversion", variant_index: 1, control_value: 0.05,
        treatment_value: 0.049, delta: -0.001, relative_delta: -0.02,
        z: -0.4 },
    ],
    staleness_ticks: stale ? 9 : 0,
    stale,
    no_data: false,
    generated_at: 1700000000000,
    watermark: 10000,
  };
}

export function experimentRecord(
    overrides: Partial<ExperimentRecordDoc> = {}): ExperimentRecordDoc {
  return {
    experiment_key: "checkout-cta",
    state: "running",
    tracking_method: "cookie",
    variant_weights: [1, 1],
    exposure_buckets: 1000,
    bucket_count: 1000,
    salt: "ab".repeat(16),
    team: "growth",
    product_area: "checkout",
    description: "bigger call to action",
    preregistration: {
      hypothesis: "a bigger button lifts conversion",
      primary_metric: "conversion",
      expected_direction: "increase",
      secondary_metrics: ["revenue"],
      target_description: "",
      planned_sample_size: 0,
    },
    decision: null,
    iterations: [],
    created_by: "ana",
    created_at: 1700000000000,
    updated_at: 1700000000000,
    report_snapshots: [],
    ...overrides,
  };
}

export interface RecordedCall {
  url: string;
  method: string;
  headers: Record<string, string>;
  body: unknown;
}

/** Fetch stub scripted per "METHOD path". Handlers run in order for
 * repeated calls to the same route; the last one sticks. */
export class FakeFetch {
  readonly calls: RecordedCall[] = [];
  private readonly routes = new Map<string, { status: number; body: unknown }[]>();

  on(method: string, path: string, body: unknown, status = 200): this {
    const key = `${method} ${path}`;
    const queue = this.routes.get(key) ?? [];
    queue.push({ status, body });
    this.routes.set(key, queue);
    return this;
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    this.calls.push({
      url,
      method,
      headers: (init?.headers ?? {}) as Record<string, string>,
      body: typeof init?.body === "string" ? JSON.parse(init.body) : undefined,
    });
    const queue = this.routes.get(`${method} ${path}`);
    if (!queue || queue.length === 0) {
      throw new Error(`unscripted route: ${method} ${path}`);
    }
    const next = queue.length > 1 ? queue.shift()! : queue[0]!;
    const ok = next.status >= 200 && next.status < 300;
    return {
      ok,
      status: next.status,
      statusText: ok ? "OK" : "Error",
      text: async () => JSON.stringify(next.body),
    } as unknown as Response;
  };
}
