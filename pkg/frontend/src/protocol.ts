// Binary frame packet codec, matching the server's wire layout exactly:
// magic "FCP1", version u16, flags u16, tracker_timestamp f64, wall_clock
// f64, pose 16xf64 column-major, image_len u32, image bytes. Little-endian.

export const MAGIC = [0x46, 0x43, 0x50, 0x31]; // "FCP1"
export const VERSION = 1;
export const HEADER_LEN = 156;
export const FLAG_ECHO = 0x0001;

export const HELLO_LEN = 6;
export const ACK_LEN = 20;

export interface FramePacket {
  trackerTimestamp: number;
  wallClock: number;
  /** 16 values, column-major 4x4 */
  pose: Float64Array;
  image: Uint8Array;
  flags: number;
}

export function identityPose(): Float64Array {
  const m = new Float64Array(16);
  m[0] = m[5] = m[10] = m[15] = 1;
  return m;
}

export function encodeFramePacket(p: FramePacket): Uint8Array {
  const out = new Uint8Array(HEADER_LEN + p.image.length);
  const view = new DataView(out.buffer);
  out.set(MAGIC, 0);
  view.setUint16(4, VERSION, true);
  view.setUint16(6, p.flags, true);
  view.setFloat64(8, p.trackerTimestamp, true);
  view.setFloat64(16, p.wallClock, true);
  for (let i = 0; i < 16; i++) {
    view.setFloat64(24 + i * 8, p.pose[i], true);
  }
  view.setUint32(152, p.image.length, true);
  out.set(p.image, HEADER_LEN);
  return out;
}

export function decodeFramePacket(data: Uint8Array): FramePacket {
  if (data.length < HEADER_LEN) throw new Error("truncated packet");
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  for (let i = 0; i < 4; i++) {
    if (data[i] !== MAGIC[i]) throw new Error("bad magic");
  }
  const version = view.getUint16(4, true);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const flags = view.getUint16(6, true);
  const trackerTimestamp = view.getFloat64(8, true);
  const wallClock = view.getFloat64(16, true);
  const pose = new Float64Array(16);
  for (let i = 0; i < 16; i++) pose[i] = view.getFloat64(24 + i * 8, true);
  const imageLen = view.getUint32(152, true);
  if (data.length < HEADER_LEN + imageLen) throw new Error("truncated image");
  return {
    trackerTimestamp,
    wallClock,
    pose,
    image: data.slice(HEADER_LEN, HEADER_LEN + imageLen),
    flags,
  };
}

export function encodeHello(): Uint8Array {
  const out = new Uint8Array(HELLO_LEN);
  out.set([0x46, 0x43, 0x48, 0x31], 0); // "FCH1"
  new DataView(out.buffer).setUint16(4, VERSION, true);
  return out;
}

export function decodeAck(data: Uint8Array): { trackerTimestamp: number; wallClock: number } {
  if (data.length < ACK_LEN) throw new Error("short ack");
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const magic = String.fromCharCode(data[0], data[1], data[2], data[3]);
  if (magic !== "FCA1") throw new Error("bad ack magic");
  return {
    trackerTimestamp: view.getFloat64(4, true),
    wallClock: view.getFloat64(12, true),
  };
}
