// Outbound frame throttle with latest-value conflation: however fast the
// pointer fires, at most maxHz frames leave per wall-clock second. push()
// sends immediately when the interval has elapsed; otherwise the newest
// frame waits for the next flush() (the app flushes from its render loop).

export class FrameThrottle<T> {
  private readonly intervalMs: number;
  private lastSent = -Infinity;
  private pending: T | null = null;
  sentCount = 0;

  constructor(
    private readonly send: (frame: T) => void,
    maxHz = 60,
  ) {
    this.intervalMs = 1000 / maxHz;
  }

  push(frame: T, nowMs: number): void {
    if (nowMs - this.lastSent >= this.intervalMs) {
      this.lastSent = nowMs;
      this.pending = null;
      this.sentCount++;
      this.send(frame);
    } else {
      this.pending = frame; // conflate: only the newest survives
    }
  }

  flush(nowMs: number): void {
    if (this.pending !== null && nowMs - this.lastSent >= this.intervalMs) {
      const frame = this.pending;
      this.pending = null;
      this.lastSent = nowMs;
      this.sentCount++;
      this.send(frame);
    }
  }
}
