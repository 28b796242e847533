// DOM glue for the four operator pages: home, instructions, connect, monitor.
// All state lives in the SessionView reducer; this file only renders it and
// forwards button clicks to the API client.

import { ApiError, MonitorClient, subscribeStream, type StreamHandle } from "./client.js";
import {
  applyRecord,
  formatElapsed,
  initialView,
  markStreamDropped,
  markStreamLive,
  type SessionView,
} from "./viewmodel.js";

type PageId = "home" | "instructions" | "connect" | "monitor";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let view: SessionView = initialView();
let client: MonitorClient | null = null;
let stream: StreamHandle | null = null;

function showPage(page: PageId): void {
  for (const id of ["home", "instructions", "connect", "monitor"] as PageId[]) {
    el(`page-${id}`).classList.toggle("active", id === page);
  }
}

function defaultServiceUrl(): string {
  // When the service itself hosts the UI, its own origin is the API.
  if (location.protocol.startsWith("http")) return location.origin;
  return "http://127.0.0.1:8800";
}

function setActionNote(message: string, isError: boolean): void {
  const note = el<HTMLSpanElement>("action-note");
  note.textContent = message;
  note.classList.toggle("error", isError);
}

async function runAction(label: string, action: () => Promise<unknown>): Promise<void> {
  try {
    await action();
    setActionNote(label, false);
  } catch (err) {
    if (err instanceof ApiError) {
      setActionNote(`${label} failed: ${err.message}`, true);
    } else {
      setActionNote(`${label} failed: ${String(err)}`, true);
    }
  }
  render();
}

function connectTo(url: string): void {
  client = new MonitorClient(url);
  stream?.stop();
  view = initialView();
  render();
  stream = subscribeStream(url, {
    onRecord: (record) => {
      view = applyRecord(view, record);
      render();
    },
    onDrop: () => {
      view = markStreamDropped(view);
      render();
    },
    onReconnect: () => {
      view = markStreamLive(view);
      render();
    },
  });
  showPage("monitor");
}

// -- rendering ----------------------------------------------------------------

const ZONE_LABELS: Record<string, string> = {
  Normal: "Normal",
  Safe: "Safe",
  OutOfZone: "Out of zone",
  unknown: "—",
};

function render(): void {
  const state = el<HTMLSpanElement>("conn-state");
  if (view.connection === "dropped") {
    state.textContent = "stream lost — retrying";
    state.dataset.tone = "bad";
  } else if (!view.deviceConnected && view.connection === "live") {
    state.textContent = "service up, device lost";
    state.dataset.tone = "warn";
  } else if (view.connection === "live") {
    state.textContent = "live";
    state.dataset.tone = "ok";
  } else {
    state.textContent = "connecting…";
    state.dataset.tone = "warn";
  }

  el<HTMLDivElement>("angle-value").textContent =
    view.angleDeg === null ? "—" : `${view.angleDeg.toFixed(1)}°`;
  el<HTMLDivElement>("counts-value").textContent =
    view.counts === null ? "" : `${view.counts} counts${view.degraded ? " (out of range)" : ""}`;

  const badge = el<HTMLSpanElement>("zone-badge");
  badge.textContent = ZONE_LABELS[view.zone] ?? view.zone;
  badge.dataset.zone = view.zone;

  el<HTMLDivElement>("timer-value").textContent = formatElapsed(view.elapsedMs);
  el<HTMLSpanElement>("session-label").textContent = view.sessionId ?? "no session";
  el<HTMLButtonElement>("btn-start").disabled = view.sessionId !== null;
  el<HTMLButtonElement>("btn-stop").disabled = view.sessionId === null;

  if (view.monitor) {
    const m = view.monitor;
    el<HTMLDivElement>("threshold-label").textContent =
      m.mode === "sensor_baseline"
        ? `baseline ${m.baseline_counts} ± ${m.baseline_tolerance} counts`
        : `safe zone ${m.safe_low}°–${m.safe_high}°`;
    el<HTMLInputElement>("zone-low").placeholder = String(m.safe_low);
    el<HTMLInputElement>("zone-high").placeholder = String(m.safe_high);
  }

  const banners = el<HTMLDivElement>("banners");
  banners.replaceChildren(
    ...view.banners.map((banner) => {
      const node = document.createElement("div");
      node.className = `banner ${banner.tone}`;
      node.textContent = banner.message;
      return node;
    }),
  );

  drawChart();
}

function drawChart(): void {
  const canvas = el<HTMLCanvasElement>("chart");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const lo = 60;
  const hi = 130;
  const y = (angle: number) => height - ((angle - lo) / (hi - lo)) * height;

  // safe-zone band
  if (view.monitor && view.monitor.mode === "angle_zone") {
    ctx.fillStyle = "rgba(64, 160, 96, 0.15)";
    const top = y(view.monitor.safe_high);
    ctx.fillRect(0, top, width, y(view.monitor.safe_low) - top);
  }

  if (view.chart.length < 2) return;
  const t1 = view.chart[view.chart.length - 1].ts_ms;
  const t0 = t1 - 60_000;
  const x = (ts: number) => ((ts - t0) / 60_000) * width;

  ctx.beginPath();
  for (let i = 0; i < view.chart.length; i++) {
    const point = view.chart[i];
    const px = x(point.ts_ms);
    const py = y(Math.min(hi, Math.max(lo, point.angle_deg)));
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  }
  ctx.strokeStyle = view.alertActive ? "#d05050" : "#58a6ff";
  ctx.lineWidth = 2;
  ctx.stroke();
}

// -- wiring ----------------------------------------------------------------------

export function initApp(): void {
  el<HTMLButtonElement>("nav-connect").addEventListener("click", () => showPage("connect"));
  el<HTMLButtonElement>("nav-instructions").addEventListener("click", () =>
    showPage("instructions"),
  );
  for (const id of ["back-from-instructions", "back-from-connect"]) {
    el<HTMLButtonElement>(id).addEventListener("click", () => showPage("home"));
  }
  el<HTMLButtonElement>("btn-home").addEventListener("click", () => {
    stream?.stop();
    stream = null;
    showPage("home");
  });

  const urlInput = el<HTMLInputElement>("service-url");
  urlInput.value = defaultServiceUrl();
  el<HTMLButtonElement>("btn-connect").addEventListener("click", () => {
    connectTo(urlInput.value.trim());
  });

  el<HTMLButtonElement>("btn-start").addEventListener("click", () =>
    runAction("session started", () => client!.startSession()),
  );
  el<HTMLButtonElement>("btn-stop").addEventListener("click", () =>
    runAction("session stopped", () => client!.stopSession()),
  );
  el<HTMLButtonElement>("btn-baseline").addEventListener("click", () =>
    runAction("baseline captured", () => client!.captureBaseline()),
  );
  el<HTMLButtonElement>("btn-zone").addEventListener("click", () => {
    const low = parseFloat(el<HTMLInputElement>("zone-low").value);
    const high = parseFloat(el<HTMLInputElement>("zone-high").value);
    void runAction("zone thresholds set", () => client!.setZoneThresholds(low, high));
  });

  showPage("home");
  render();
}

initApp();
