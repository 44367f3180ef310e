import { describe, expect, it } from "vitest";
import { DEFAULT_DRIVE, DriveController } from "../src/drive";
import { Mat3, TargetPose, toColumnMajor, toNested, fromNested, mat3Mul, rotZ } from "../src/pose";

const start: TargetPose = {
  position: [0.45, 0, 0.35],
  rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1] as Mat3,
};

describe("pointer to pose mapping", () => {
  it("plain drag translates in the camera plane", () => {
    const drive = new DriveController(start);
    const before = [...drive.target.position];
    drive.drag({ dx: 100, dy: -40, mode: "translate" });
    const d = drive.target.position.map((v, i) => v - before[i]);
    const c = DEFAULT_DRIVE;
    const expected = [0, 1, 2].map(
      (i) =>
        100 * c.metersPerPixel * c.cameraRight[i] + 40 * c.metersPerPixel * c.cameraUp[i],
    );
    expect(d[0]).toBeCloseTo(expected[0], 12);
    expect(d[1]).toBeCloseTo(expected[1], 12);
    expect(d[2]).toBeCloseTo(expected[2], 12);
  });

  it("depth modifier moves along the view axis", () => {
    const drive = new DriveController(start);
    drive.drag({ dx: 50, dy: -80, mode: "translate", depth: true });
    const c = DEFAULT_DRIVE;
    const d = drive.target.position.map((v, i) => v - start.position[i]);
    for (let i = 0; i < 3; i++) {
      expect(d[i]).toBeCloseTo(80 * c.metersPerPixel * c.cameraForward[i], 12);
    }
  });

  it("rotate mode leaves position untouched and stays orthonormal", () => {
    const drive = new DriveController(start);
    drive.drag({ dx: 60, dy: 25, mode: "rotate" });
    expect(drive.target.position).toEqual(start.position);
    const r = drive.target.rotation;
    // R R^T == I
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        const dot = r[i * 3] * r[j * 3] + r[i * 3 + 1] * r[j * 3 + 1] + r[i * 3 + 2] * r[j * 3 + 2];
        expect(dot).toBeCloseTo(i === j ? 1 : 0, 10);
      }
    }
    expect(r).not.toEqual(start.rotation);
  });

  it("wheel moves depth; ctrl-wheel rolls", () => {
    const drive = new DriveController(start);
    drive.wheel(3, false);
    expect(drive.target.position[0]).toBeCloseTo(
      start.position[0] + 3 * 0.01 * DEFAULT_DRIVE.cameraForward[0],
      12,
    );
    const posBefore = [...drive.target.position];
    drive.wheel(2, true);
    expect(drive.target.position).toEqual(posBefore);
    expect(drive.target.rotation).not.toEqual(start.rotation);
  });
});

describe("pose matrix forms", () => {
  it("column-major wire form puts translation in slots 12..14", () => {
    const m = toColumnMajor({ position: [1, 2, 3], rotation: rotZ(0.5) });
    expect(m[12]).toBe(1);
    expect(m[13]).toBe(2);
    expect(m[14]).toBe(3);
    expect(m[15]).toBe(1);
    // column 0 is the rotated x axis
    expect(m[0]).toBeCloseTo(Math.cos(0.5));
    expect(m[1]).toBeCloseTo(Math.sin(0.5));
  });

  it("nested row-major round-trips", () => {
    const pose: TargetPose = { position: [0.4, -0.1, 0.3], rotation: rotZ(1.1) };
    const back = fromNested(toNested(pose));
    expect(back.position).toEqual(pose.position);
    back.rotation.forEach((v, i) => expect(v).toBeCloseTo(pose.rotation[i], 12));
  });

  it("mat3Mul composes like rotation addition about one axis", () => {
    const a = rotZ(0.3);
    const b = rotZ(0.4);
    const ab = mat3Mul(a, b);
    const direct = rotZ(0.7);
    ab.forEach((v, i) => expect(v).toBeCloseTo(direct[i], 12));
  });
});
