// The API client: headers on every request, faithful query building,
// and error envelopes surfaced verbatim with their status codes.

import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";
import { FakeFetch, experimentRecord } from "./fixtures.js";

const BASE = "http://service.test";

describe("ApiClient requests", () => {
  it("sends the bearer token and actor on every call", async () => {
    const fake = new FakeFetch().on("GET", "/experiments", { experiments: [] });
    const client = new ApiClient(BASE, "desk-token", "ana", fake.fetch);
    await client.listExperiments();
    expect(fake.calls[0]!.headers["Authorization"]).toBe("Bearer desk-token");
    expect(fake.calls[0]!.headers["X-Actor"]).toBe("ana");
  });

  it("omits the Authorization header when no token is configured", async () => {
    const fake = new FakeFetch().on("GET", "/experiments", { experiments: [] });
    const client = new ApiClient(BASE, "", "ana", fake.fetch);
    await client.listExperiments();
    expect(fake.calls[0]!.headers["Authorization"]).toBeUndefined();
    expect(fake.calls[0]!.headers["X-Actor"]).toBe("ana");
  });

  it("builds search queries from the given filters only", async () => {
    const fake = new FakeFetch().on(
      "GET", "/experiments?team=growth&free_text=checkout",
      { experiments: [] });
    const client = new ApiClient(BASE, "t", "ana", fake.fetch);
    await client.listExperiments({ team: "growth", free_text: "checkout" });
    expect(fake.calls[0]!.url)
      .toBe(`${BASE}/experiments?team=growth&free_text=checkout`);
  });

  it("posts the stop reason as the request body", async () => {
    const fake = new FakeFetch().on(
      "POST", "/experiments/checkout-cta/stop",
      experimentRecord({ state: "stopped" }));
    const client = new ApiClient(BASE, "t", "oncall", fake.fetch);
    const record = await client.stopExperiment("checkout-cta",
                                               "guardrail collapse");
    expect(fake.calls[0]!.body).toEqual({ reason: "guardrail collapse" });
    expect(record.state).toBe("stopped");
  });
});

describe("ApiClient error envelopes", () => {
  it("surfaces the service message verbatim with its status", async () => {
    const fake = new FakeFetch().on(
      "POST", "/experiments/checkout-cta/decision",
      { code: "illegal_state",
        message: "cannot decide 'checkout-cta' in state running",
        current_status: "running" },
      409);
    const client = new ApiClient(BASE, "t", "ana", fake.fetch);
    const failure = await client
      .recordDecision("checkout-cta", "ship", "looks good")
      .then(() => null, (e: unknown) => e as ApiError);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure!.status).toBe(409);
    expect(failure!.code).toBe("illegal_state");
    expect(failure!.message)
      .toBe("cannot decide 'checkout-cta' in state running");
    expect(failure!.currentStatus).toBe("running");
    expect(failure!.display())
      .toBe("409 illegal_state: cannot decide 'checkout-cta' in state running");
  });

  it("maps not-found envelopes the same way", async () => {
    const fake = new FakeFetch().on(
      "GET", "/experiments/ghost",
      { code: "not_found", message: "experiment 'ghost' is not registered" },
      404);
    const client = new ApiClient(BASE, "t", "ana", fake.fetch);
    const failure = await client.getExperiment("ghost")
      .then(() => null, (e: unknown) => e as ApiError);
    expect(failure!.status).toBe(404);
    expect(failure!.display())
      .toBe("404 not_found: experiment 'ghost' is not registered");
  });
});
