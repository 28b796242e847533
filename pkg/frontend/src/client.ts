// HTTP + stream client for the monitor service. Works unchanged in the
// browser and under Node's fetch, which is what the integration tests use.

import type { MonitorSettings, ServiceStatus, StreamRecord } from "./types.js";

export class ApiError extends Error {
  status: number;
  code: string;
  fields: string[];

  constructor(status: number, code: string, message: string, fields: string[] = []) {
    super(message);
    this.status = status;
    this.code = code;
    this.fields = fields;
  }
}

async function requestJson<T>(url: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, "unreachable", `service unreachable: ${String(err)}`);
  }
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const error = (body as { error?: { code?: string; message?: string; fields?: string[] } }).error;
    throw new ApiError(
      response.status,
      error?.code ?? "error",
      error?.message ?? `HTTP ${response.status}`,
      error?.fields ?? [],
    );
  }
  return body as T;
}

export class MonitorClient {
  readonly baseUrl: string;
  private inflight = new Map<string, Promise<unknown>>();

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  // One API call per user action: a second identical action while the first
  // is still in flight joins it instead of firing another request.
  private single<T>(key: string, run: () => Promise<T>): Promise<T> {
    const pending = this.inflight.get(key);
    if (pending) return pending as Promise<T>;
    const task = run().finally(() => this.inflight.delete(key));
    this.inflight.set(key, task);
    return task;
  }

  status(): Promise<ServiceStatus> {
    return requestJson<ServiceStatus>(`${this.baseUrl}/status`);
  }

  startSession(): Promise<{ session_id: string }> {
    return this.single("session/start", () =>
      requestJson(`${this.baseUrl}/session/start`, { method: "POST" }),
    );
  }

  stopSession(): Promise<{ session_id: string }> {
    return this.single("session/stop", () =>
      requestJson(`${this.baseUrl}/session/stop`, { method: "POST" }),
    );
  }

  captureBaseline(): Promise<{ monitor: MonitorSettings }> {
    return this.single("threshold/baseline", () =>
      requestJson(`${this.baseUrl}/threshold/baseline`, { method: "POST" }),
    );
  }

  setZoneThresholds(safeLow: number, safeHigh: number): Promise<{ monitor: MonitorSettings }> {
    return this.single("threshold/zone", () =>
      requestJson(`${this.baseUrl}/threshold/zone`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ safe_low: safeLow, safe_high: safeHigh }),
      }),
    );
  }

  sessionLog(sessionId: string): Promise<{ records: unknown[] }> {
    return requestJson(`${this.baseUrl}/session/log?session_id=${encodeURIComponent(sessionId)}`);
  }
}

// -- stream ----------------------------------------------------------------

export type LineSplit = { records: StreamRecord[]; rest: string };

/** Split buffered text + a new chunk into complete NDJSON records. */
export function splitStreamChunk(buffer: string, chunk: string): LineSplit {
  const text = buffer + chunk;
  const lines = text.split("\n");
  const rest = lines.pop() ?? "";
  const records: StreamRecord[] = [];
  for (const line of lines) {
    if (!line.trim()) continue;
    try {
      records.push(JSON.parse(line) as StreamRecord);
    } catch {
      // a torn or garbled line is dropped; the stream carries on
    }
  }
  return { records, rest };
}

export type StreamHandlers = {
  onRecord: (record: StreamRecord) => void;
  onDrop?: (reason: string) => void;
  onReconnect?: () => void;
};

export type StreamHandle = { stop: () => void };

/**
 * Subscribe to the live NDJSON stream with automatic resubscribe on drop.
 * Retries every `retryMs` until stopped; each successful (re)connect fires
 * onReconnect after the first.
 */
export function subscribeStream(
  baseUrl: string,
  handlers: StreamHandlers,
  retryMs = 1000,
): StreamHandle {
  let stopped = false;
  let controller: AbortController | null = null;
  let timer: ReturnType<typeof setTimeout> | null = null;
  let everConnected = false;

  const connect = async () => {
    controller = new AbortController();
    try {
      const response = await fetch(`${baseUrl.replace(/\/+$/, "")}/stream`, {
        signal: controller.signal,
      });
      if (!response.ok || !response.body) {
        throw new Error(`stream refused: HTTP ${response.status}`);
      }
      if (everConnected) handlers.onReconnect?.();
      everConnected = true;
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        const split = splitStreamChunk(buffer, decoder.decode(value, { stream: true }));
        buffer = split.rest;
        for (const record of split.records) handlers.onRecord(record);
      }
      throw new Error("stream ended");
    } catch (err) {
      if (stopped) return;
      handlers.onDrop?.(String(err));
      timer = setTimeout(connect, retryMs);
    }
  };

  void connect();
  return {
    stop: () => {
      stopped = true;
      if (timer !== null) clearTimeout(timer);
      controller?.abort();
    },
  };
}
