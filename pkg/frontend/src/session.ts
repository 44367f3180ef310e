// Session controller: owns the WebSocket packet stream, the SSE state
// feed, and the outbound frame throttle. Headless by design so the same
// controller drives the browser app and the node test harness.

import { ControlApi } from "./api";
import { sseEvents } from "./feed";
import { TargetPose, toColumnMajor } from "./pose";
import { FLAG_ECHO, FramePacket, encodeFramePacket } from "./protocol";
import { FrameThrottle } from "./rateLimiter";
import { Snapshot, UiSessionState } from "./state";

/** The slice of the WebSocket API the controller needs; lets node tests
 * substitute the `ws` package for the browser global. */
export interface WsLike {
  binaryType: string;
  send(data: Uint8Array): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export interface SessionConfig {
  httpBase: string; // e.g. http://127.0.0.1:8080
  wsFactory: (url: string) => WsLike;
  fullFeed?: boolean;
  maxHz?: number;
  now?: () => number; // ms clock, injectable for tests
  echoFrames?: boolean;
}

export class SessionController {
  readonly state = new UiSessionState();
  readonly api: ControlApi;
  private ws: WsLike | null = null;
  private feedAbort: AbortController | null = null;
  private throttle: FrameThrottle<TargetPose>;
  private readonly now: () => number;
  private frameCounter = 0;
  onSnapshot: ((s: Snapshot) => void) | null = null;

  constructor(readonly config: SessionConfig) {
    this.api = new ControlApi(config.httpBase);
    this.now = config.now ?? (() => performance.now());
    this.throttle = new FrameThrottle<TargetPose>(
      (pose) => this.sendFrame(pose),
      config.maxHz ?? 60,
    );
  }

  get outboundFrames(): number {
    return this.throttle.sentCount;
  }

  async connect(): Promise<void> {
    this.state.connection = "connecting";
    const wsUrl = this.config.httpBase.replace(/^http/, "ws") + "/stream/ws";
    await new Promise<void>((resolve, reject) => {
      const ws = this.config.wsFactory(wsUrl);
      ws.binaryType = "arraybuffer";
      ws.onopen = () => resolve();
      ws.onerror = (ev) => reject(new Error(`stream connect failed: ${ev}`));
      ws.onclose = () => {
        this.state.connection = "disconnected";
      };
      ws.onmessage = () => {
        /* acks arrive here when echo is on; nothing to do */
      };
      this.ws = ws;
    });
    this.state.connection = "connected";
    this.startFeed();
    const status = await this.api.sessionStatus();
    if (status.status === 200) this.state.onSessionStatus(status.body);
  }

  private startFeed(): void {
    const abort = new AbortController();
    this.feedAbort = abort;
    const url =
      `${this.config.httpBase}/state/feed` + (this.config.fullFeed ? "?full=1" : "");
    (async () => {
      try {
        for await (const doc of sseEvents(url, abort.signal)) {
          const snap = doc as Snapshot;
          this.state.onSnapshot(snap);
          this.onSnapshot?.(snap);
        }
      } catch (err) {
        if (this.state.connection === "connected") {
          this.state.toast(`feed lost: ${err}`);
          this.state.connection = "disconnected";
        }
      }
    })();
  }

  /** Queue a target pose; the throttle enforces the 60 Hz outbound cap. */
  driveTarget(pose: TargetPose): void {
    if (this.state.connection !== "connected") return;
    this.throttle.push(pose, this.now());
  }

  /** Called from the render loop to release a conflated pending frame. */
  tick(): void {
    this.throttle.flush(this.now());
  }

  private sendFrame(pose: TargetPose): void {
    if (this.ws === null) return;
    const nowS = this.now() / 1000;
    const packet: FramePacket = {
      trackerTimestamp: this.frameCounter++ * 1e-9 + nowS,
      wallClock: Date.now() / 1000,
      pose: toColumnMajor(pose),
      image: new Uint8Array(0),
      flags: this.config.echoFrames ? FLAG_ECHO : 0,
    };
    this.ws.send(encodeFramePacket(packet));
  }

  async setClutch(engaged: boolean): Promise<void> {
    const res = await this.api.setClutch(engaged);
    if (res.status === 200) this.state.clutchEngaged = res.body.engaged;
    else this.state.toast(`clutch: ${res.status} ${res.body?.error ?? ""}`);
  }

  close(): void {
    this.feedAbort?.abort();
    this.ws?.close();
    this.state.connection = "disconnected";
  }
}
