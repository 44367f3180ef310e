// Small pose math: rotation as a row-major 3x3, position as [x, y, z].
// Only what target driving needs; the 3D view uses three.js types instead.

export type Vec3 = [number, number, number];
export type Mat3 = [number, number, number, number, number, number, number, number, number];

export interface TargetPose {
  position: Vec3;
  rotation: Mat3;
}

export const IDENTITY3: Mat3 = [1, 0, 0, 0, 1, 0, 0, 0, 1];

export function mat3Mul(a: Mat3, b: Mat3): Mat3 {
  const out = new Array(9).fill(0) as Mat3;
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      out[r * 3 + c] = a[r * 3] * b[c] + a[r * 3 + 1] * b[3 + c] + a[r * 3 + 2] * b[6 + c];
    }
  }
  return out;
}

export function rotX(a: number): Mat3 {
  const c = Math.cos(a), s = Math.sin(a);
  return [1, 0, 0, 0, c, -s, 0, s, c];
}

export function rotY(a: number): Mat3 {
  const c = Math.cos(a), s = Math.sin(a);
  return [c, 0, s, 0, 1, 0, -s, 0, c];
}

export function rotZ(a: number): Mat3 {
  const c = Math.cos(a), s = Math.sin(a);
  return [c, -s, 0, s, c, 0, 0, 0, 1];
}

/** Column-major 16-float pose matrix for the wire format. */
export function toColumnMajor(p: TargetPose): Float64Array {
  const m = new Float64Array(16);
  const r = p.rotation;
  // column k holds rotation column k
  for (let col = 0; col < 3; col++) {
    for (let row = 0; row < 3; row++) {
      m[col * 4 + row] = r[row * 3 + col];
    }
  }
  m[12] = p.position[0];
  m[13] = p.position[1];
  m[14] = p.position[2];
  m[15] = 1;
  return m;
}

export function fromColumnMajor(m: ArrayLike<number>): TargetPose {
  const rotation = [
    m[0], m[4], m[8],
    m[1], m[5], m[9],
    m[2], m[6], m[10],
  ] as Mat3;
  return { rotation, position: [m[12], m[13], m[14]] };
}

/** From the row-major nested 4x4 JSON form used by the control API/feed. */
export function fromNested(m: number[][]): TargetPose {
  return {
    rotation: [
      m[0][0], m[0][1], m[0][2],
      m[1][0], m[1][1], m[1][2],
      m[2][0], m[2][1], m[2][2],
    ] as Mat3,
    position: [m[0][3], m[1][3], m[2][3]],
  };
}

/** Row-major nested 4x4 (the JSON form used by the control API). */
export function toNested(p: TargetPose): number[][] {
  const r = p.rotation;
  return [
    [r[0], r[1], r[2], p.position[0]],
    [r[3], r[4], r[5], p.position[1]],
    [r[6], r[7], r[8], p.position[2]],
    [0, 0, 0, 1],
  ];
}

export function clonePose(p: TargetPose): TargetPose {
  return { position: [...p.position], rotation: [...p.rotation] as Mat3 };
}
