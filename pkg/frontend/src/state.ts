// UI session state: a pure projection of server events plus local input.
// Nothing here mutates guidance state; that only happens through control
// messages. The ghost color mapping mirrors the server's exactly.

export type FeasibilityState = "feasible" | "warning" | "infeasible";

export interface Snapshot {
  frame_index: number;
  state: FeasibilityState;
  raw_state: FeasibilityState;
  e: number;
  r: number;
  c: boolean;
  w: number;
  q: number[];
  p: number[][];
  ghost_color: string;
  haptic: string;
  tracker_timestamp: number;
  wall_clock: number;
  link_poses?: number[][][];
}

export interface ReplayView {
  job: string;
  status: "queued" | "running" | "done" | "failed" | "cancelled";
  progress: number;
  episodeId: string;
  report?: { success: boolean; ticks: number; max_tcp_error: number };
  error?: string;
}

export const GHOST_COLORS: Record<FeasibilityState, string> = {
  feasible: "green",
  warning: "yellow",
  infeasible: "red",
};

export function ghostColor(state: FeasibilityState): string {
  return GHOST_COLORS[state];
}

export interface GaugeView {
  value: number;
  /** 0..1 fill fraction for the bar */
  fill: number;
  /** 0..1 position of the threshold marker, if any */
  marker?: number;
  alarmed: boolean;
}

export function rateGauge(r: number, tauR: number): GaugeView {
  const span = 1.25; // show a little headroom past the hard limit
  return {
    value: r,
    fill: Math.min(r / span, 1),
    marker: tauR / span,
    alarmed: r > tauR,
  };
}

export function manipulabilityGauge(w: number, tauW: number): GaugeView {
  // log scale: tau_w sits mid-bar so approach to singularity reads clearly
  const lo = Math.log10(Math.max(tauW, 1e-12)) - 2;
  const hi = Math.log10(Math.max(tauW, 1e-12)) + 2;
  const x = Math.log10(Math.max(w, 1e-12));
  return {
    value: w,
    fill: Math.min(Math.max((x - lo) / (hi - lo), 0), 1),
    marker: 0.5,
    alarmed: w < tauW,
  };
}

export function residualGauge(e: number, eps: number): GaugeView {
  const span = eps * 2;
  return {
    value: e,
    fill: Math.min(e / span, 1),
    marker: 0.5,
    alarmed: e >= eps,
  };
}

export interface LoggedState {
  frameIndex: number;
  state: FeasibilityState;
  color: string;
}

export class UiSessionState {
  connection: "disconnected" | "connecting" | "connected" = "disconnected";
  latest: Snapshot | null = null;
  clutchEngaged = true;
  recording = false;
  episodeId: string | null = null;
  replay: ReplayView | null = null;
  /** rendered-state event log, used to cross-check against the server */
  eventLog: LoggedState[] = [];
  toasts: string[] = [];

  onSnapshot(doc: Snapshot): void {
    this.latest = doc;
    this.eventLog.push({
      frameIndex: doc.frame_index,
      state: doc.state,
      color: ghostColor(doc.state),
    });
  }

  onSessionStatus(doc: { clutch_engaged: boolean; recording: boolean; episode_id: string | null }): void {
    this.clutchEngaged = doc.clutch_engaged;
    this.recording = doc.recording;
    this.episodeId = doc.episode_id;
  }

  onReplay(view: ReplayView | null): void {
    this.replay = view;
  }

  toast(message: string): void {
    this.toasts.push(message);
    if (this.toasts.length > 5) this.toasts.shift();
  }

  gauges(tauR = 0.8, tauW = 0.01, eps = 0.005) {
    const s = this.latest;
    return {
      rate: rateGauge(s?.r ?? 0, tauR),
      manipulability: manipulabilityGauge(s?.w ?? 1, tauW),
      residual: residualGauge(s?.e ?? 0, eps),
    };
  }
}
