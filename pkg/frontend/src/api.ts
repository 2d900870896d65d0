// Typed client for the experiment platform's HTTP API. The dashboard
// computes no statistics of its own: every number shown on a page came
// out of one of these calls verbatim.

export interface TestResultDoc {
  statistic: number;
  p_value: number;
  estimate_diff: number;
  std_error: number;
  ci_low: number;
  ci_high: number;
  alpha: number;
  df: number;
  degenerate: boolean;
}

export interface SrmResultDoc {
  chi_square: number;
  df: number;
  p_value: number;
  flagged: boolean;
  threshold: number;
}

export interface VariantCellDoc {
  variant_index: number;
  n: number;
  x: number;
  mean: number;
}

export interface ComparisonDoc {
  variant_index: number;
  test: TestResultDoc | null;
  note: string;
}

export interface MetricBlockDoc {
  metric_name: string;
  role: string;
  hidden: boolean;
  cells: VariantCellDoc[];
  comparisons: ComparisonDoc[];
  direction_ok: boolean | null;
  note: string;
}

export interface DivergenceRowDoc {
  experiment_key: string;
  variant_index: number;
  metric_name: string;
  field: string;
  rt_value: number;
  batch_value: number;
  relative_diff: number;
  divergence_flagged: boolean;
}

export interface DivergenceDoc {
  tolerance: number;
  compared_at_watermark: number;
  any_flagged: boolean;
  rows: DivergenceRowDoc[];
}

export interface ReportDoc {
  experiment_key: string;
  status: "ok" | "gated" | "no_data";
  srm: SrmResultDoc | null;
  unknown_identifier_rate: number;
  blocks: MetricBlockDoc[];
  divergence: DivergenceDoc | null;
  warnings: string[];
  generated_at: number;
  watermark: number;
}

export interface GuardrailRowDoc {
  metric_name: string;
  variant_index: number;
  control_value: number;
  treatment_value: number;
  delta: number;
  relative_delta: number | null;
  z: number | null;
}

export interface GuardrailStatusDoc {
  experiment_key: string;
  rows: GuardrailRowDoc[];
  staleness_ticks: number;
  stale: boolean;
  no_data: boolean;
  generated_at: number;
  watermark: number;
}

export interface PreRegistrationDoc {
  hypothesis: string;
  primary_metric: string;
  expected_direction: string;
  secondary_metrics: string[];
  target_description: string;
  planned_sample_size: number;
}

export interface DecisionDoc {
  outcome: string;
  rationale: string;
  decided_by: string;
  decided_at?: number;
}

export interface ExperimentRecordDoc {
  experiment_key: string;
  state: string;
  tracking_method: string;
  variant_weights: number[];
  exposure_buckets: number;
  bucket_count: number;
  salt: string;
  team: string;
  product_area: string;
  description: string;
  preregistration: PreRegistrationDoc | null;
  decision: DecisionDoc | null;
  iterations: unknown[];
  created_by: string;
  created_at: number;
  updated_at: number;
  report_snapshots: string[];
}

export interface AuditEntryDoc {
  seq: number;
  at: number;
  actor: string;
  action: string;
  key: string;
  payload: Record<string, unknown>;
}

export interface AaPoolDoc {
  n_experiments: number;
  n_false_positives: number;
  rate: number;
  interval_low: number;
  interval_high: number;
  alpha: number;
  calibrated: boolean;
  decile_fractions: number[];
  max_decile_deviation: number;
  srm_flags: number;
}

export interface SearchFilters {
  status?: string;
  team?: string;
  product_area?: string;
  metric?: string;
  free_text?: string;
}

/** A non-2xx response, carrying the service's envelope verbatim. */
export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly currentStatus?: string;

  constructor(status: number, code: string, message: string,
              currentStatus?: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
    this.currentStatus = currentStatus;
  }

  /** The exact line a page should show the operator. */
  display(): string {
    return `${this.status} ${this.code}: ${this.message}`;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly actor: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, token: string, actor: string,
              fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.token = token;
    this.actor = actor;
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string,
                           body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "X-Actor": this.actor };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const parsed = text ? JSON.parse(text) : null;
    if (!response.ok) {
      const envelope = parsed ?? {};
      throw new ApiError(response.status,
                         envelope.code ?? "error",
                         envelope.message ?? response.statusText,
                         envelope.current_status);
    }
    return parsed as T;
  }

  listExperiments(filters: SearchFilters = {}): Promise<{ experiments: ExperimentRecordDoc[] }> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value) params.set(key, value);
    }
    const query = params.toString();
    return this.request("GET", `/experiments${query ? "?" + query : ""}`);
  }

  getExperiment(key: string): Promise<ExperimentRecordDoc> {
    return this.request("GET", `/experiments/${encodeURIComponent(key)}`);
  }

  createExperiment(payload: Record<string, unknown>): Promise<ExperimentRecordDoc> {
    return this.request("POST", "/experiments", payload);
  }

  startExperiment(key: string): Promise<ExperimentRecordDoc> {
    return this.request("POST", `/experiments/${encodeURIComponent(key)}/start`, {});
  }

  stopExperiment(key: string, reason: string): Promise<ExperimentRecordDoc> {
    return this.request("POST", `/experiments/${encodeURIComponent(key)}/stop`,
                        { reason });
  }

  recordDecision(key: string, outcome: string,
                 rationale: string): Promise<ExperimentRecordDoc> {
    return this.request("POST",
                        `/experiments/${encodeURIComponent(key)}/decision`,
                        { outcome, rationale, decided_by: this.actor });
  }

  getReport(key: string): Promise<ReportDoc> {
    return this.request("GET", `/experiments/${encodeURIComponent(key)}/report`);
  }

  getGuardrails(key: string): Promise<GuardrailStatusDoc> {
    return this.request("GET",
                        `/experiments/${encodeURIComponent(key)}/guardrails`);
  }

  getAudit(key: string): Promise<{ entries: AuditEntryDoc[] }> {
    return this.request("GET", `/experiments/${encodeURIComponent(key)}/audit`);
  }

  getPipelineQuality(): Promise<{ divergence: DivergenceDoc | null;
                                  rt_watermark: number; head: number;
                                  tick: number }> {
    return this.request("GET", "/quality/pipelines");
  }

  getAaPool(n: number, seed: number): Promise<AaPoolDoc> {
    return this.request("GET", `/quality/aa-pool?n=${n}&seed=${seed}`);
  }

  listMetrics(): Promise<{ metrics: { name: string; kind: string;
                                      aggregation: string; scope: string;
                                      description: string }[] }> {
    return this.request("GET", "/metrics");
  }
}
