// Pure view-state reducer over the service's stream records. The UI never
// computes a zone itself: the badge, banners, and chart all render values the
// service pushed, so there is exactly one source of truth for classification.

import type { MonitorSettings, StreamRecord, Zone } from "./types.js";

export const CHART_WINDOW_MS = 60_000;
export const CHART_MAX_POINTS = 1500; // > 60 s at the 20 Hz default rate

export type ChartPoint = { ts_ms: number; angle_deg: number; zone: Zone };

export type Banner = {
  id: number;
  tone: "alert" | "timer" | "link";
  message: string;
  ts_ms: number;
};

export type ConnectionState = "connecting" | "live" | "dropped";

export type SessionView = {
  connection: ConnectionState;
  deviceConnected: boolean;
  angleDeg: number | null;
  counts: number | null;
  zone: Zone;
  degraded: boolean;
  lastTs: number | null;
  sessionId: string | null;
  sessionStartTs: number | null;
  elapsedMs: number | null;
  alertActive: boolean;
  sitLimitFired: boolean;
  monitor: MonitorSettings | null;
  banners: Banner[];
  chart: ChartPoint[];
  vibrateCount: number;
};

let bannerSeq = 0;

export function initialView(): SessionView {
  return {
    connection: "connecting",
    deviceConnected: false,
    angleDeg: null,
    counts: null,
    zone: "unknown",
    degraded: false,
    lastTs: null,
    sessionId: null,
    sessionStartTs: null,
    elapsedMs: null,
    alertActive: false,
    sitLimitFired: false,
    monitor: null,
    banners: [],
    chart: [],
    vibrateCount: 0,
  };
}

function pushBanner(view: SessionView, tone: Banner["tone"], message: string, ts: number): void {
  view.banners = [...view.banners, { id: ++bannerSeq, tone, message, ts_ms: ts }].slice(-6);
}

function dropBanners(view: SessionView, tone: Banner["tone"]): void {
  view.banners = view.banners.filter((b) => b.tone !== tone);
}

function trimChart(chart: ChartPoint[]): ChartPoint[] {
  if (chart.length === 0) return chart;
  const horizon = chart[chart.length - 1].ts_ms - CHART_WINDOW_MS;
  let start = 0;
  while (start < chart.length && chart[start].ts_ms < horizon) start++;
  const trimmed = start > 0 ? chart.slice(start) : chart;
  return trimmed.length > CHART_MAX_POINTS
    ? trimmed.slice(trimmed.length - CHART_MAX_POINTS)
    : trimmed;
}

/** Apply one stream record; returns a new view (input is not mutated). */
export function applyRecord(previous: SessionView, record: StreamRecord): SessionView {
  const view: SessionView = { ...previous, banners: previous.banners, chart: previous.chart };

  switch (record.type) {
    case "hello": {
      const status = record.status;
      view.connection = "live";
      view.deviceConnected = status.connected;
      view.zone = status.zone;
      view.angleDeg = status.angle_deg;
      view.counts = status.counts;
      view.lastTs = status.ts_ms;
      view.sessionId = status.session_id;
      view.sessionStartTs = status.session_start_ts_ms;
      view.elapsedMs = status.session_elapsed_ms ?? null;
      view.alertActive = status.alert_active;
      view.sitLimitFired = status.sit_limit_fired;
      view.monitor = status.monitor;
      break;
    }
    case "sample": {
      view.zone = record.zone; // service-pushed, never recomputed
      view.angleDeg = record.angle_deg;
      view.counts = record.counts;
      view.degraded = record.degraded ?? false;
      view.lastTs = record.ts_ms;
      if (view.sessionId !== null && view.sessionStartTs !== null) {
        const elapsed = record.ts_ms - view.sessionStartTs;
        // monotone while the session is active
        view.elapsedMs = Math.max(view.elapsedMs ?? 0, elapsed);
      }
      if (record.angle_deg !== null) {
        view.chart = trimChart([
          ...view.chart,
          { ts_ms: record.ts_ms, angle_deg: record.angle_deg, zone: record.zone },
        ]);
      }
      break;
    }
    case "event":
      applyEvent(view, record.kind, record.ts_ms);
      view.lastTs = record.ts_ms;
      if (record.kind === "SessionStart") {
        view.sessionId = record.session_id;
        view.sessionStartTs = record.ts_ms;
        view.elapsedMs = 0;
        view.sitLimitFired = false;
        dropBanners(view, "timer");
      } else if (record.kind === "SessionStop") {
        view.sessionId = null; // timer display freezes at the last elapsed value
      }
      break;
    case "config":
      view.monitor = record.monitor;
      break;
    case "keepalive":
    case "shutdown":
      break;
  }
  return view;
}

function applyEvent(view: SessionView, kind: string, ts: number): void {
  switch (kind) {
    case "ZoneExit":
      view.alertActive = true;
      pushBanner(view, "alert", "Out of the safe zone — sit back up", ts);
      break;
    case "VibrateSent":
      view.vibrateCount += 1;
      break;
    case "ZoneReenter":
      view.alertActive = false;
      dropBanners(view, "alert");
      break;
    case "SitLimitReached":
      if (!view.sitLimitFired) {
        view.sitLimitFired = true;
        pushBanner(view, "timer", "Sitting limit reached — time to stand up", ts);
      }
      break;
    case "DeviceLost":
      view.deviceConnected = false;
      pushBanner(view, "link", "Device lost — waiting for it to come back", ts);
      break;
    case "DeviceRestored":
      view.deviceConnected = true;
      dropBanners(view, "link");
      break;
  }
}

export function markStreamDropped(previous: SessionView): SessionView {
  const view = { ...previous };
  view.connection = "dropped";
  return view;
}

export function markStreamLive(previous: SessionView): SessionView {
  const view = { ...previous };
  view.connection = "live";
  return view;
}

export function formatElapsed(ms: number | null): string {
  if (ms === null) return "--:--";
  const total = Math.floor(ms / 1000);
  const minutes = Math.floor(total / 60);
  const seconds = total % 60;
  return `${String(minutes).padStart(2, "0")}:${String(seconds).padStart(2, "0")}`;
}
