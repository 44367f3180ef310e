import { describe, expect, it } from "vitest";
import { FrameThrottle } from "../src/rateLimiter";

describe("outbound frame throttle", () => {
  it("caps a 1 kHz pointer storm at 60 Hz", () => {
    // the [secondary] rate-cap acceptance criterion: 1000 events/s for one
    // second must produce at most 60 outbound frames (+1 boundary frame)
    const sent: number[] = [];
    const throttle = new FrameThrottle<number>((f) => sent.push(f), 60);
    for (let i = 0; i < 1000; i++) {
      const nowMs = i; // one event per millisecond
      throttle.push(i, nowMs);
      throttle.flush(nowMs);
    }
    expect(sent.length).toBeLessThanOrEqual(61);
    expect(sent.length).toBeGreaterThanOrEqual(59);
    // spacing respects the 60 Hz interval
    const times = sent.map((f) => f);
    for (let i = 1; i < times.length; i++) {
      expect(times[i] - times[i - 1]).toBeGreaterThanOrEqual(16);
    }
  });

  it("conflates to the latest value while throttled", () => {
    const sent: string[] = [];
    const throttle = new FrameThrottle<string>((f) => sent.push(f), 60);
    throttle.push("a", 0);
    throttle.push("b", 5);
    throttle.push("c", 10);
    expect(sent).toEqual(["a"]);
    throttle.flush(17);
    expect(sent).toEqual(["a", "c"]); // b was displaced
  });

  it("passes a slow stream through untouched", () => {
    const sent: number[] = [];
    const throttle = new FrameThrottle<number>((f) => sent.push(f), 60);
    for (let i = 0; i < 30; i++) {
      throttle.push(i, i * 33.4); // ~30 Hz
    }
    expect(sent.length).toBe(30);
  });

  it("burst then idle flushes exactly the pending frame", () => {
    const sent: number[] = [];
    const throttle = new FrameThrottle<number>((f) => sent.push(f), 60);
    for (let i = 0; i < 10; i++) throttle.push(i, i);
    expect(sent).toEqual([0]);
    throttle.flush(20);
    throttle.flush(40);
    expect(sent).toEqual([0, 9]); // nothing new pending after the burst
  });
});
