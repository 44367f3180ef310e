// Secondary acceptance: after a scripted 30 s steering session against the
// real server, the UI's rendered state log must match the server's
// /feasibility channel frame-for-frame on the emitted state.

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";
import { GRIP_DOWN } from "../src/drive";
import { Mat3, TargetPose } from "../src/pose";
import { SessionController } from "../src/session";

const REPO_ROOT = join(__dirname, "..", "..");
let server: ChildProcess | null = null;
let httpPort = 0;
let dataDir = "";

function startServer(): Promise<void> {
  dataDir = mkdtempSync(join(tmpdir(), "feasicap-ui-"));
  const cfgPath = join(dataDir, "serve.toml");
  writeFileSync(cfgPath, "[server]\nautorecord = false\n");
  server = spawn(
    "python3",
    ["-m", "feasicap.cli", "serve", "--config", cfgPath, "--data-dir", dataDir],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  return new Promise((resolve, reject) => {
    let out = "";
    const timer = setTimeout(() => reject(new Error(`serve never came up: ${out}`)), 20000);
    server!.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const m = out.match(/http=127\.0\.0\.1:(\d+)/);
      if (m) {
        httpPort = parseInt(m[1], 10);
        clearTimeout(timer);
        resolve();
      }
    });
    server!.stderr!.on("data", (chunk: Buffer) => (out += chunk.toString()));
    server!.on("exit", (code) => reject(new Error(`serve exited ${code}: ${out}`)));
  });
}

beforeAll(async () => {
  await startServer();
});

afterAll(() => {
  if (server) {
    server.kill("SIGINT");
    setTimeout(() => server?.kill("SIGKILL"), 3000).unref();
  }
});

describe("UI/server state agreement", () => {
  it("30 s scripted session: rendered states equal the recorded channel", async () => {
    const session = new SessionController({
      httpBase: `http://127.0.0.1:${httpPort}`,
      wsFactory: (url) => new WebSocket(url) as never,
    });
    await session.connect();

    const rec = await session.api.recordStart("ui-agreement");
    expect(rec.status).toBe(200);

    // scripted drive: sweep through reachable and unreachable x, mild y/z
    const pose: TargetPose = {
      position: [0.5, 0, 0.35],
      rotation: [...GRIP_DOWN] as Mat3,
    };
    const t0 = performance.now();
    const durationMs = 30_000;
    await new Promise<void>((resolve) => {
      const timer = setInterval(() => {
        const t = (performance.now() - t0) / 1000;
        if (t * 1000 >= durationMs) {
          clearInterval(timer);
          resolve();
          return;
        }
        pose.position[0] = 0.5 + 0.26 * Math.sin(2 * Math.PI * 0.1 * t);
        pose.position[1] = 0.12 * Math.sin(2 * Math.PI * 0.13 * t + 1.0);
        pose.position[2] = 0.35 + 0.05 * Math.sin(2 * Math.PI * 0.07 * t + 2.0);
        session.driveTarget(pose);
        session.tick();
      }, 4); // 250 Hz pointer source; the throttle caps outbound at 60 Hz
    });

    const stopped = await session.api.recordStop();
    expect(stopped.status).toBe(200);
    await new Promise((r) => setTimeout(r, 500)); // let the writer flush
    session.close();

    // outbound respected the cap over the whole session
    const elapsedS = (performance.now() - t0) / 1000;
    expect(session.outboundFrames).toBeLessThanOrEqual(Math.ceil(elapsedS * 60) + 1);
    expect(session.outboundFrames).toBeGreaterThan(1000); // ~60 Hz for 30 s

    // server-side truth: the feasibility channel exported as a timeline
    const episode = join(dataDir, `${stopped.body.id}.mcap`);
    const analyze = spawnSync(
      "python3",
      ["-m", "feasicap.cli", "analyze", "--episode", episode, "--out", dataDir],
      { cwd: REPO_ROOT, encoding: "utf8" },
    );
    expect(analyze.status).toBe(0);
    const csv = readFileSync(join(dataDir, `${stopped.body.id}.timeline.csv`), "utf8");
    const serverStates = new Map<number, string>();
    for (const line of csv.trim().split("\n").slice(1)) {
      const [frame, state] = line.split(",");
      serverStates.set(parseInt(frame, 10), state);
    }
    expect(serverStates.size).toBeGreaterThan(1000);

    // frame-for-frame agreement on every snapshot the UI rendered
    let compared = 0;
    const states = new Set<string>();
    for (const entry of session.state.eventLog) {
      const server = serverStates.get(entry.frameIndex);
      if (server === undefined) continue; // frame outside the recorded window
      expect(entry.state, `frame ${entry.frameIndex}`).toBe(server);
      states.add(entry.state);
      compared++;
    }
    // conflation may skip occasional frames, but coverage must stay high
    expect(compared).toBeGreaterThan(serverStates.size * 0.9);
    // the sweep must actually exercise the state machine
    expect(states.size).toBeGreaterThanOrEqual(2);
  });
});
