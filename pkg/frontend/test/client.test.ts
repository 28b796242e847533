import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, MonitorClient, splitStreamChunk } from "../src/client.js";

describe("splitStreamChunk", () => {
  it("parses complete lines and buffers the remainder", () => {
    const first = splitStreamChunk("", '{"type":"keepalive"}\n{"type":"sam');
    expect(first.records).toEqual([{ type: "keepalive" }]);
    expect(first.rest).toBe('{"type":"sam');
    const second = splitStreamChunk(first.rest, 'ple","ts_ms":5}\n');
    expect(second.records).toEqual([{ type: "sample", ts_ms: 5 }]);
    expect(second.rest).toBe("");
  });

  it("is chunking independent", () => {
    const lines = ['{"a":1}', '{"b":2}', '{"c":3}'].join("\n") + "\n";
    for (const cut of [1, 3, 7, 10, lines.length - 1]) {
      const head = splitStreamChunk("", lines.slice(0, cut));
      const tail = splitStreamChunk(head.rest, lines.slice(cut));
      expect([...head.records, ...tail.records]).toEqual([{ a: 1 }, { b: 2 }, { c: 3 }]);
    }
  });

  it("drops garbled lines without giving up", () => {
    const split = splitStreamChunk("", 'not json\n{"type":"keepalive"}\n');
    expect(split.records).toEqual([{ type: "keepalive" }]);
  });
});

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("MonitorClient", () => {
  afterEach(() => vi.unstubAllGlobals());

  it("maps error envelopes to ApiError", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        jsonResponse(409, { error: { code: "conflict", message: "session already active" } }),
      ),
    );
    const client = new MonitorClient("http://x");
    const err = await client.startSession().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.code).toBe("conflict");
    expect(err.message).toMatch("already active");
  });

  it("exposes validation field lists", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        jsonResponse(400, {
          error: { code: "validation", message: "missing required fields", fields: ["safe_low"] },
        }),
      ),
    );
    const client = new MonitorClient("http://x");
    const err = await client.setZoneThresholds(NaN, 110).catch((e) => e);
    expect(err.fields).toEqual(["safe_low"]);
  });

  it("collapses double-clicks into one in-flight request", async () => {
    let resolveFetch: (r: Response) => void = () => {};
    const fetchMock = vi.fn(
      () => new Promise<Response>((resolve) => (resolveFetch = resolve)),
    );
    vi.stubGlobal("fetch", fetchMock);
    const client = new MonitorClient("http://x");

    const first = client.captureBaseline();
    const second = client.captureBaseline(); // double-click
    expect(fetchMock).toHaveBeenCalledTimes(1);

    resolveFetch(jsonResponse(200, { monitor: {} }));
    await expect(first).resolves.toEqual({ monitor: {} });
    await expect(second).resolves.toEqual({ monitor: {} });

    // after settling, the next click is a fresh call
    const third = client.captureBaseline();
    expect(fetchMock).toHaveBeenCalledTimes(2);
    resolveFetch(jsonResponse(200, { monitor: {} }));
    await third;
  });

  it("different actions do not block each other", async () => {
    const resolvers: Array<(r: Response) => void> = [];
    vi.stubGlobal(
      "fetch",
      vi.fn(() => new Promise<Response>((resolve) => resolvers.push(resolve))),
    );
    const client = new MonitorClient("http://x");
    void client.startSession();
    void client.captureBaseline();
    expect(resolvers).toHaveLength(2);
    resolvers.forEach((resolve) => resolve(jsonResponse(200, {})));
  });

  it("wraps network failure as an unreachable ApiError", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => {
        throw new TypeError("fetch failed");
      }),
    );
    const client = new MonitorClient("http://nope");
    const err = await client.status().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("unreachable");
  });
});
