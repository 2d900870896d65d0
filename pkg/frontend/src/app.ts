// Page wiring: hash routes, the polling loop, and the glue between the
// API client and the pure renderers. Nothing here computes; every
// number on screen was fetched, and every button maps to exactly one
// service call.

import { ApiClient, ApiError } from "./api.js";
import type { SearchFilters } from "./api.js";
import {
  renderAaPool,
  renderApiError,
  renderBanner,
  renderExperimentDetail,
  renderGuardrails,
  renderReport,
  renderRepository,
} from "./render.js";
import { mountWizard } from "./wizard.js";

export const DEFAULT_POLL_MS = 2000;

export class Dashboard {
  readonly root: HTMLElement;
  readonly client: ApiClient;
  readonly pollMs: number;
  private pollHandle: ReturnType<typeof setInterval> | null = null;
  private currentKey: string | null = null;

  constructor(root: HTMLElement, client: ApiClient,
              pollMs: number = DEFAULT_POLL_MS) {
    this.root = root;
    this.client = client;
    this.pollMs = pollMs;
  }

  /** Route a location hash to a page. Unknown hashes land on the
   * repository listing. */
  async navigate(hash: string): Promise<void> {
    this.stopPolling();
    this.currentKey = null;
    const experiment = /^#\/experiments\/(.+)$/.exec(hash);
    if (experiment) {
      await this.showExperiment(decodeURIComponent(experiment[1]!));
    } else if (hash === "#/new") {
      this.showWizard();
    } else if (hash === "#/quality") {
      await this.showQuality();
    } else {
      await this.showRepository({});
    }
  }

  /** Attach to window-level hashchange events and render the first
   * page. */
  start(win: Window): void {
    win.addEventListener("hashchange",
                         () => void this.navigate(win.location.hash));
    void this.navigate(win.location.hash);
  }

  stopPolling(): void {
    if (this.pollHandle !== null) {
      clearInterval(this.pollHandle);
      this.pollHandle = null;
    }
  }

  private doc(): Document {
    return this.root.ownerDocument;
  }

  private clear(): void {
    this.root.textContent = "";
  }

  private showError(error: unknown): void {
    if (error instanceof ApiError) {
      this.root.appendChild(renderApiError(this.doc(), error));
    } else {
      this.root.appendChild(renderBanner(this.doc(), "error",
                                         String(error)));
    }
  }

  private nav(): HTMLElement {
    const doc = this.doc();
    const nav = doc.createElement("nav");
    for (const [label, hash] of [["experiments", "#/"],
                                 ["new experiment", "#/new"],
                                 ["pipeline quality", "#/quality"]]) {
      const link = doc.createElement("a");
      link.href = hash!;
      link.textContent = label!;
      nav.appendChild(link);
    }
    return nav;
  }

  async showRepository(filters: SearchFilters): Promise<void> {
    this.clear();
    this.root.appendChild(this.nav());
    try {
      const listing = await this.client.listExperiments(filters);
      this.root.appendChild(renderRepository(this.doc(),
                                             listing.experiments));
      for (const row of Array.from(
          this.root.querySelectorAll(".experiment-row"))) {
        row.addEventListener("click", () => {
          const key = row.getAttribute("data-key");
          if (key) void this.showExperiment(key);
        });
      }
    } catch (error) {
      this.showError(error);
    }
  }

  /** Detail page: registration card, live report, guardrail readout.
   * While the page is open it re-fetches on the poll interval so a
   * collapse or a staleness alarm shows up without a reload. */
  async showExperiment(key: string): Promise<void> {
    this.stopPolling();
    this.currentKey = key;
    await this.refreshExperiment(key);
    this.pollHandle = setInterval(() => {
      if (this.currentKey === key) void this.refreshExperiment(key);
    }, this.pollMs);
  }

  private async refreshExperiment(key: string): Promise<void> {
    const doc = this.doc();
    this.clear();
    this.root.appendChild(this.nav());
    let record;
    try {
      record = await this.client.getExperiment(key);
    } catch (error) {
      this.showError(error);
      return;
    }
    this.root.appendChild(renderExperimentDetail(doc, record, {
      onStart: () => void this.act(() => this.client.startExperiment(key), key),
      onStop: (reason) => void this.act(
        () => this.client.stopExperiment(key, reason), key),
      onDecide: (outcome, rationale) => void this.act(
        () => this.client.recordDecision(key, outcome, rationale), key),
    }));
    try {
      const report = await this.client.getReport(key);
      this.root.appendChild(renderReport(doc, report));
    } catch (error) {
      this.showError(error);
    }
    try {
      const guardrails = await this.client.getGuardrails(key);
      this.root.appendChild(renderGuardrails(doc, guardrails));
    } catch (error) {
      this.showError(error);
    }
  }

  /** Run one lifecycle call, then re-render from what the service now
   * says. A failure leaves the page up and surfaces the error line. */
  private async act(call: () => Promise<unknown>, key: string): Promise<void> {
    try {
      await call();
    } catch (error) {
      this.showError(error);
      return;
    }
    await this.refreshExperiment(key);
  }

  showWizard(): void {
    this.clear();
    this.root.appendChild(this.nav());
    const host = this.doc().createElement("section");
    host.className = "wizard-page";
    this.root.appendChild(host);
    mountWizard(host, (payload) => {
      void (async () => {
        try {
          const record = await this.client.createExperiment(payload);
          await this.showExperiment(record.experiment_key);
        } catch (error) {
          this.showError(error);
        }
      })();
    });
  }

  async showQuality(): Promise<void> {
    const doc = this.doc();
    this.clear();
    this.root.appendChild(this.nav());
    try {
      const quality = await this.client.getPipelineQuality();
      const summary = doc.createElement("p");
      summary.className = "pipeline-summary";
      summary.textContent =
        `streaming watermark ${quality.rt_watermark} of ${quality.head} ` +
        `records (tick ${quality.tick})`;
      this.root.appendChild(summary);
      if (quality.divergence === null) {
        this.root.appendChild(renderBanner(
          doc, "warning", "no pipeline comparison has run yet"));
      } else if (quality.divergence.any_flagged) {
        this.root.appendChild(renderBanner(
          doc, "alarm", "the two metric pipelines DISAGREE beyond " +
          "tolerance; treat reports as suspect until explained"));
      }
      const aaButton = doc.createElement("button");
      aaButton.setAttribute("data-action", "aa-pool");
      aaButton.textContent = "Run AA calibration pool (20 members)";
      aaButton.addEventListener("click", () => {
        void (async () => {
          try {
            const pool = await this.client.getAaPool(20, 0);
            this.root.appendChild(renderAaPool(doc, pool));
          } catch (error) {
            this.showError(error);
          }
        })();
      });
      this.root.appendChild(aaButton);
    } catch (error) {
      this.showError(error);
    }
  }
}

/** Entry point for the static page: read connection settings from data
 * attributes on the mount node and start routing. */
export function boot(win: Window): Dashboard {
  const doc = win.document;
  const root = doc.getElementById("app");
  if (!root) throw new Error("missing #app mount node");
  const base = root.getAttribute("data-api-base") ?? "";
  const token = root.getAttribute("data-api-token") ?? "";
  const actor = root.getAttribute("data-actor") ?? "dashboard";
  const dashboard = new Dashboard(root, new ApiClient(base, token, actor));
  dashboard.start(win);
  return dashboard;
}
