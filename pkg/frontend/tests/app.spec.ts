// Dashboard wiring: the stop control round-trips through the service
// and the page re-renders from the service's answer, never from local
// state; failures stay on screen as verbatim error lines.

import { beforeEach, describe, expect, it, vi } from "vitest";
import { ApiClient } from "../src/api.js";
import { DEFAULT_POLL_MS, Dashboard } from "../src/app.js";
import {
  FakeFetch,
  experimentRecord,
  guardrailStatus,
  okReport,
} from "./fixtures.js";

const BASE = "http://service.test";
const NEVER = 1 << 30;

function dashboard(fake: FakeFetch, pollMs = NEVER): Dashboard {
  document.body.innerHTML = "";
  const root = document.createElement("div");
  document.body.appendChild(root);
  const client = new ApiClient(BASE, "t", "oncall", fake.fetch);
  return new Dashboard(root, client, pollMs);
}

function experimentRoutes(fake: FakeFetch): FakeFetch {
  return fake
    .on("GET", "/experiments/checkout-cta", experimentRecord())
    .on("GET", "/experiments/checkout-cta/report", okReport())
    .on("GET", "/experiments/checkout-cta/guardrails", guardrailStatus(false));
}

describe("stop round trip", () => {
  let fake: FakeFetch;
  let dash: Dashboard;

  beforeEach(async () => {
    fake = experimentRoutes(new FakeFetch())
      .on("GET", "/experiments/checkout-cta",
          experimentRecord({ state: "stopped" }))
      .on("POST", "/experiments/checkout-cta/stop",
          experimentRecord({ state: "stopped" }));
    dash = dashboard(fake);
    await dash.showExperiment("checkout-cta");
  });

  it("stops via the service and re-renders the stopped state", async () => {
    expect(dash.root.querySelector(".state")!.textContent)
      .toBe("state: running");
    const reason = dash.root.querySelector(
      "[data-field=stop-reason]") as HTMLInputElement;
    reason.value = "guardrail collapse";
    (dash.root.querySelector("[data-action=stop]") as HTMLButtonElement)
      .click();

    await vi.waitFor(() => {
      expect(dash.root.querySelector(".state")!.textContent)
        .toBe("state: stopped");
    });

    const stop = fake.calls.find((c) => c.method === "POST" &&
                                        c.url.endsWith("/stop"))!;
    expect(stop.body).toEqual({ reason: "guardrail collapse" });
    expect(stop.headers["X-Actor"]).toBe("oncall");

    // The stop control is gone; the decision controls take its place.
    expect(dash.root.querySelector("[data-action=stop]")).toBeNull();
    expect(dash.root.querySelector("[data-action=decide]")).not.toBeNull();
    dash.stopPolling();
  });
});

describe("experiment page", () => {
  it("renders detail, report, and guardrails from one navigation", async () => {
    const fake = experimentRoutes(new FakeFetch());
    const dash = dashboard(fake);
    await dash.navigate("#/experiments/checkout-cta");
    expect(dash.root.querySelector(".experiment-detail")).not.toBeNull();
    expect(dash.root.querySelector(".report")).not.toBeNull();
    expect(dash.root.querySelector(".guardrails")).not.toBeNull();
    expect(fake.calls.map((c) => c.url)).toEqual([
      `${BASE}/experiments/checkout-cta`,
      `${BASE}/experiments/checkout-cta/report`,
      `${BASE}/experiments/checkout-cta/guardrails`,
    ]);
    dash.stopPolling();
  });

  it("polls the open experiment, 2 s by default", async () => {
    expect(DEFAULT_POLL_MS).toBe(2000);
    const fake = experimentRoutes(new FakeFetch());
    const dash = dashboard(fake, 5);
    await dash.showExperiment("checkout-cta");
    const afterFirstRender = fake.calls.length;
    await vi.waitFor(() => {
      expect(fake.calls.length).toBeGreaterThan(afterFirstRender);
    });
    dash.stopPolling();
  });

  it("surfaces a rejected action verbatim and keeps the page up", async () => {
    const fake = experimentRoutes(new FakeFetch())
      .on("GET", "/experiments/checkout-cta",
          experimentRecord({ state: "stopped" }))
      .on("POST", "/experiments/checkout-cta/decision",
          { code: "validation", message: "a decision needs a rationale" },
          422);
    const dash = dashboard(fake);
    await dash.showExperiment("checkout-cta");
    await dash.showExperiment("checkout-cta");
    (dash.root.querySelector("[data-action=decide]") as HTMLButtonElement)
      .click();
    await vi.waitFor(() => {
      expect(dash.root.querySelector(".banner-error")).not.toBeNull();
    });
    expect(dash.root.querySelector(".banner-error")!.textContent)
      .toBe("422 validation: a decision needs a rationale");
    expect(dash.root.querySelector(".experiment-detail")).not.toBeNull();
    dash.stopPolling();
  });
});

describe("repository and wizard pages", () => {
  it("lists experiments and navigates on row click", async () => {
    const fake = experimentRoutes(new FakeFetch())
      .on("GET", "/experiments", { experiments: [experimentRecord()] });
    const dash = dashboard(fake);
    await dash.navigate("#/");
    const row = dash.root.querySelector(".experiment-row") as HTMLElement;
    expect(row).not.toBeNull();
    row.click();
    await vi.waitFor(() => {
      expect(dash.root.querySelector(".experiment-detail")).not.toBeNull();
    });
    dash.stopPolling();
  });

  it("creates through the wizard and lands on the new experiment", async () => {
    const fake = experimentRoutes(new FakeFetch())
      .on("POST", "/experiments", experimentRecord({ state: "draft" }), 201);
    const dash = dashboard(fake);
    await dash.navigate("#/new");

    const fill = (field: string, value: string) => {
      const control = dash.root.querySelector(
        `[data-field=${field}]`) as HTMLInputElement;
      control.value = value;
      control.dispatchEvent(new Event("input", { bubbles: true }));
    };
    fill("experiment_key", "checkout-cta");
    fill("hypothesis", "a bigger button lifts conversion");
    fill("primary_metric", "conversion");
    (dash.root.querySelector("[data-action=create]") as HTMLButtonElement)
      .click();

    await vi.waitFor(() => {
      expect(dash.root.querySelector(".experiment-detail")).not.toBeNull();
    });
    const create = fake.calls.find((c) => c.method === "POST")!;
    expect((create.body as { experiment_key: string }).experiment_key)
      .toBe("checkout-cta");
    dash.stopPolling();
  });

  it("shows a creation conflict verbatim", async () => {
    const fake = new FakeFetch().on(
      "POST", "/experiments",
      { code: "conflict", message: "experiment 'checkout-cta' already exists" },
      409);
    const dash = dashboard(fake);
    await dash.navigate("#/new");
    const fill = (field: string, value: string) => {
      const control = dash.root.querySelector(
        `[data-field=${field}]`) as HTMLInputElement;
      control.value = value;
      control.dispatchEvent(new Event("input", { bubbles: true }));
    };
    fill("experiment_key", "checkout-cta");
    fill("hypothesis", "h");
    fill("primary_metric", "conversion");
    (dash.root.querySelector("[data-action=create]") as HTMLButtonElement)
      .click();
    await vi.waitFor(() => {
      expect(dash.root.querySelector(".banner-error")).not.toBeNull();
    });
    expect(dash.root.querySelector(".banner-error")!.textContent)
      .toBe("409 conflict: experiment 'checkout-cta' already exists");
  });
});
