// Wire shapes pushed by the monitor service (NDJSON stream + JSON endpoints).

export type Zone = "Normal" | "Safe" | "OutOfZone" | "unknown";

export type MonitorSettings = {
  mode: "angle_zone" | "sensor_baseline";
  safe_low: number;
  safe_high: number;
  baseline_counts: number | null;
  baseline_tolerance: number;
  debounce_ms: number;
  vibrate_repeat_ms: number;
  sit_limit_ms: number;
};

export type ServiceStatus = {
  connected: boolean;
  device: string;
  model: string;
  model_domain_deg: [number, number];
  zone: Zone;
  angle_deg: number | null;
  counts: number | null;
  ts_ms: number | null;
  alert_active: boolean;
  session_id: string | null;
  session_start_ts_ms: number | null;
  session_elapsed_ms?: number;
  sit_limit_fired: boolean;
  monitor: MonitorSettings;
  persistence_failed: boolean;
  counters: Record<string, number>;
};

export type SampleRecord = {
  type: "sample";
  ts_ms: number;
  kind: "Sample";
  counts: number;
  angle_deg: number | null;
  zone: Zone;
  degraded?: boolean;
  session_id: string | null;
  recv_ns: number;
};

export type EventRecord = {
  type: "event";
  ts_ms: number;
  kind:
    | "ZoneExit"
    | "ZoneReenter"
    | "VibrateSent"
    | "SitLimitReached"
    | "SessionStart"
    | "SessionStop"
    | "DeviceLost"
    | "DeviceRestored";
  angle_deg?: number;
  session_id: string | null;
};

export type ConfigRecord = { type: "config"; monitor: MonitorSettings };
export type HelloRecord = { type: "hello"; status: ServiceStatus };
export type KeepaliveRecord = { type: "keepalive" };
export type ShutdownRecord = { type: "shutdown" };

export type StreamRecord =
  | SampleRecord
  | EventRecord
  | ConfigRecord
  | HelloRecord
  | KeepaliveRecord
  | ShutdownRecord;
