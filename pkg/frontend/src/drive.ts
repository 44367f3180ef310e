// Pointer/keyboard to end-effector target mapping.
//
// Plain drag translates the target in the camera plane; holding the depth
// modifier (Shift) maps vertical drag to motion along the view axis; the
// rotate mode (right button or R key) maps drag to rotations about the
// camera's right/up axes and wheel to roll. Constants default to a
// ~40 cm workspace on a typical window.

import { IDENTITY3, Mat3, TargetPose, Vec3, clonePose, mat3Mul, rotX, rotY, rotZ } from "./pose";

export interface DriveConfig {
  metersPerPixel: number;
  radiansPerPixel: number;
  radiansPerWheelTick: number;
  /** camera basis in world coordinates */
  cameraRight: Vec3;
  cameraUp: Vec3;
  cameraForward: Vec3;
}

export const DEFAULT_DRIVE: DriveConfig = {
  metersPerPixel: 0.00075,
  radiansPerPixel: 0.008,
  radiansPerWheelTick: 0.05,
  cameraRight: [0, 1, 0],
  cameraUp: [0, 0, 1],
  cameraForward: [-1, 0, 0],
};

export type DragMode = "translate" | "rotate";

export interface DragEventLike {
  dx: number;
  dy: number;
  mode: DragMode;
  depth?: boolean; // depth modifier held
}

// down-forward gripper orientation, reachable across the bundled arm's
// desk workspace (pointing the tool at the table); built from rotY so it
// is orthonormal to machine precision
export const GRIP_DOWN: Mat3 = rotY(2.5);

export class DriveController {
  target: TargetPose;

  constructor(
    start: TargetPose = { position: [0.45, 0, 0.35], rotation: [...GRIP_DOWN] as Mat3 },
    readonly config: DriveConfig = DEFAULT_DRIVE,
  ) {
    this.target = clonePose(start);
  }

  setTarget(pose: TargetPose): void {
    this.target = clonePose(pose);
  }

  drag(ev: DragEventLike): TargetPose {
    const c = this.config;
    if (ev.mode === "translate") {
      const scale = c.metersPerPixel;
      if (ev.depth) {
        // vertical drag moves along the view axis
        for (let i = 0; i < 3; i++) {
          this.target.position[i] += -ev.dy * scale * c.cameraForward[i];
        }
      } else {
        for (let i = 0; i < 3; i++) {
          this.target.position[i] +=
            ev.dx * scale * c.cameraRight[i] - ev.dy * scale * c.cameraUp[i];
        }
      }
    } else {
      // rotate about the camera's up axis for horizontal drag, right axis
      // for vertical; world frame here is aligned with the camera basis
      const yaw = rotAbout(c.cameraUp, -ev.dx * c.radiansPerPixel);
      const pitch = rotAbout(c.cameraRight, -ev.dy * c.radiansPerPixel);
      this.target.rotation = mat3Mul(mat3Mul(yaw, pitch), this.target.rotation);
    }
    return clonePose(this.target);
  }

  wheel(ticks: number, rollMode: boolean): TargetPose {
    const c = this.config;
    if (rollMode) {
      const roll = rotAbout(c.cameraForward, ticks * c.radiansPerWheelTick);
      this.target.rotation = mat3Mul(roll, this.target.rotation);
    } else {
      for (let i = 0; i < 3; i++) {
        this.target.position[i] += ticks * 0.01 * c.cameraForward[i];
      }
    }
    return clonePose(this.target);
  }
}

function rotAbout(axis: Vec3, angle: number): Mat3 {
  const [x, y, z] = axis;
  if (Math.abs(x) === 1 && y === 0 && z === 0) return x > 0 ? rotX(angle) : rotX(-angle);
  if (Math.abs(y) === 1 && x === 0 && z === 0) return y > 0 ? rotY(angle) : rotY(-angle);
  if (Math.abs(z) === 1 && x === 0 && y === 0) return z > 0 ? rotZ(angle) : rotZ(-angle);
  // general Rodrigues for arbitrary camera bases
  const c = Math.cos(angle), s = Math.sin(angle), t = 1 - c;
  return [
    t * x * x + c, t * x * y - s * z, t * x * z + s * y,
    t * x * y + s * z, t * y * y + c, t * y * z - s * x,
    t * x * z - s * y, t * y * z + s * x, t * z * z + c,
  ];
}
