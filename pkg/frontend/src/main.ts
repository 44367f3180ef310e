// App entry: wire the session controller, 3D ghost, drive input, and panel.
// The server base comes from ?http=host:port (defaults to same origin).

import * as THREE from "three";
import { DriveController } from "./drive";
import { GhostView } from "./ghost";
import { Panel } from "./panel";
import { fromNested, TargetPose } from "./pose";
import { SessionController } from "./session";

const params = new URLSearchParams(location.search);
const httpBase = params.get("http")
  ? `http://${params.get("http")}`
  : location.origin;

const session = new SessionController({
  httpBase,
  wsFactory: (url) => new WebSocket(url) as never,
  fullFeed: true,
});

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ghost = new GhostView(canvas);
const drive = new DriveController();
const panel = new Panel(document.getElementById("panel")!, session);
const pulse = document.getElementById("pulse")!;

panel.onCalibrate = () => drive.target;
panel.onPlaceBase = () => {
  // click-to-place substitute for the AR tap: anchor at the target's floor
  // projection
  const t = drive.target;
  const pose: TargetPose = {
    position: [t.position[0], t.position[1], 0],
    rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1],
  };
  ghost.setAnchor(new THREE.Vector3(...pose.position));
  return pose;
};

// -- pointer input: drag translates (shift = depth), right-drag rotates

let dragging = false;
let rotateMode = false;
canvas.addEventListener("contextmenu", (e) => e.preventDefault());
canvas.addEventListener("pointerdown", (e) => {
  dragging = true;
  rotateMode = e.button === 2;
  canvas.setPointerCapture(e.pointerId);
});
canvas.addEventListener("pointerup", () => (dragging = false));
canvas.addEventListener("pointermove", (e) => {
  if (!dragging) return;
  if (!session.state.clutchEngaged) return; // clutch off: ghost stays frozen
  drive.drag({
    dx: e.movementX,
    dy: e.movementY,
    mode: rotateMode ? "rotate" : "translate",
    depth: e.shiftKey,
  });
  session.driveTarget(drive.target);
});
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  if (!session.state.clutchEngaged) return;
  drive.wheel(Math.sign(e.deltaY), e.ctrlKey);
  session.driveTarget(drive.target);
});
window.addEventListener("keydown", (e) => {
  if (e.key === "r") rotateMode = !rotateMode;
});

// -- render loop: flush outbound frames, refresh ghost/panel/pulse

let lastPulse = 0;
function frame(nowMs: number) {
  session.tick();
  const snap = session.state.latest;
  ghost.update(snap, new THREE.Vector3(...drive.target.position));
  const view = ghost;
  const w = canvas.clientWidth || 800;
  const h = canvas.clientHeight || 600;
  view.resize(w, h);
  view.render();
  panel.update();

  // haptics substitute: screen-edge pulse, continuous for infeasible,
  // intermittent for warning
  if (snap?.state === "infeasible") {
    pulse.className = "pulse continuous";
    if (navigator.vibrate && nowMs - lastPulse > 250) {
      navigator.vibrate(80);
      lastPulse = nowMs;
    }
  } else if (snap?.state === "warning") {
    pulse.className = "pulse intermittent";
    if (navigator.vibrate && nowMs - lastPulse > 700) {
      navigator.vibrate(25);
      lastPulse = nowMs;
    }
  } else {
    pulse.className = "pulse";
  }
  requestAnimationFrame(frame);
}

session
  .connect()
  .then(() => {
    panel.refreshEpisodes();
    // seed the ghost from the session's current target if available
    const p = session.state.latest?.p;
    if (p) drive.setTarget(fromNested(p));
  })
  .catch((err) => panel.toast(`connect failed: ${err}`));
requestAnimationFrame(frame);
